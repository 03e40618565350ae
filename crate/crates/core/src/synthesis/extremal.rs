use super::SynthesisError;

/// Which adversary resolves the interval uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

const SUM_TOL: f64 = 1e-9;

/// Feasible distribution within `[lower, upper]` that extremizes the expectation
/// of `values`: everything starts at its lower bound and the free mass goes to
/// destinations in value order (ties by index), each up to its upper bound.
pub fn extremal_distribution(
    values: &[f64],
    lower: &[f64],
    upper: &[f64],
    obj: Objective,
) -> Result<Vec<f64>, SynthesisError> {
    let k = values.len();
    if lower.len() != k || upper.len() != k {
        return Err(SynthesisError::LengthMismatch(format!(
            "{} values, {} lower bounds, {} upper bounds",
            k,
            lower.len(),
            upper.len()
        )));
    }
    let lower_sum: f64 = lower.iter().sum();
    let upper_sum: f64 = upper.iter().sum();
    if lower_sum > 1.0 + SUM_TOL || upper_sum < 1.0 - SUM_TOL || lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(SynthesisError::InfeasibleRow { lower_sum, upper_sum });
    }
    let mut order: Vec<usize> = (0..k).collect();
    match obj {
        Objective::Minimize => order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))),
        Objective::Maximize => order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b))),
    }
    let mut p = lower.to_vec();
    let mut rem = 1.0 - lower_sum;
    for i in order {
        if rem <= 0.0 {
            break;
        }
        let m = (upper[i] - lower[i]).min(rem);
        p[i] += m;
        rem -= m;
    }
    Ok(p)
}

/// Extremal expected value of `values` over all distributions within the
/// intervals whose mass sums to one.
pub fn extremal_expectation(
    values: &[f64],
    lower: &[f64],
    upper: &[f64],
    obj: Objective,
) -> Result<f64, SynthesisError> {
    let p = extremal_distribution(values, lower, upper, obj)?;
    Ok(p.iter().zip(values).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let v = [0.0, 1.0];
        assert_eq!(extremal_expectation(&v, &[0.0, 0.0], &[1.0, 1.0], Objective::Minimize).unwrap(), 0.0);
        let p = extremal_distribution(&v, &[0.4, 0.4], &[0.6, 0.6], Objective::Minimize).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.4).abs() < 1e-15);
        assert!((extremal_expectation(&v, &[0.4, 0.4], &[0.6, 0.6], Objective::Maximize).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ties_by_index() {
        let p = extremal_distribution(&[0.5, 0.5, 0.5], &[0.0; 3], &[0.6; 3], Objective::Maximize).unwrap();
        assert_eq!(p[2], 0.0);
        assert!((p[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn infeasible_rows_rejected() {
        assert!(matches!(
            extremal_expectation(&[0.0, 1.0], &[0.7, 0.7], &[1.0, 1.0], Objective::Minimize),
            Err(SynthesisError::InfeasibleRow { .. })
        ));
        assert!(extremal_expectation(&[0.0, 1.0], &[0.0, 0.0], &[0.3, 0.3], Objective::Minimize).is_err());
        assert!(extremal_expectation(&[0.0], &[0.0, 0.0], &[0.3, 0.3], Objective::Minimize).is_err());
    }
}
