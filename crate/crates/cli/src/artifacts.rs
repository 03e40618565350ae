//! Reading and writing the files the subcommands exchange.
//!
//! Every JSON artifact is `{"meta": {...}, "<kind>": payload}`; CSV artifacts
//! start with `#` lines carrying the same metadata. Wall times go to separate
//! timing files so the rest is byte-reproducible.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use olsynth::config::Config;
use olsynth::gp::Dataset;
use olsynth::imdp::{Imdp, ImdpExport, Pimdp, PimdpExport};
use olsynth::ltlf::{parse, Alphabet, Dfa};
use olsynth::online::{Controller, GpMode, Metrics, RunRecord};
use olsynth::pipeline::{self, Offline};
use olsynth::sim::{episode_rng, run_batch, write_stats_csv, BatchStats, Plant};
use olsynth::synthesis::{write_strategy_csv, ValueResult};

/// A required input file does not exist.
#[derive(Debug, thiserror::Error)]
#[error("file not found: {}", .0.display())]
pub struct MissingFile(pub PathBuf);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Meta {
    pub fn of(cfg: &Config) -> Self {
        Meta { config_hash: config_hash(cfg), seed: cfg.seed, version: env!("CARGO_PKG_VERSION").into() }
    }

    fn header(&self) -> Vec<String> {
        vec![
            format!("config_hash={}", self.config_hash),
            format!("seed={}", self.seed),
            format!("version={}", self.version),
        ]
    }
}

pub fn config_hash(cfg: &Config) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

/// Hash of the sections the offline stage reads; online and simulation
/// settings may change without invalidating the artifacts.
pub fn offline_hash(cfg: &Config) -> String {
    let mut c = cfg.clone();
    c.online = Default::default();
    c.simulation = Default::default();
    config_hash(&c)
}

fn sha256_file(p: &Path) -> Result<String> {
    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
}

fn write_json(p: &Path, meta: &Meta, kind: &str, payload: &impl Serialize) -> Result<()> {
    let mut w = create(p)?;
    let v = json!({ "meta": meta, kind: payload });
    serde_json::to_writer(&mut w, &v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json(p: &Path) -> Result<Value> {
    if !p.exists() {
        return Err(MissingFile(p.to_path_buf()).into());
    }
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

/// Payload under `kind`, or the whole document when it is not wrapped.
fn unwrap_payload(v: Value, kind: &str) -> Value {
    match v {
        Value::Object(mut m) if m.contains_key("meta") && m.contains_key(kind) => m.remove(kind).unwrap(),
        v => v,
    }
}

fn header_lines(w: &mut impl Write, meta: &Meta) -> Result<()> {
    for h in meta.header() {
        writeln!(w, "# {h}")?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct StartBounds {
    x0: Vec<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    meta: Meta,
    offline_hash: String,
    imdp_states: usize,
    actions: usize,
    dfa_states: usize,
    product_states: usize,
    explicit_transitions: usize,
    widened_rows: usize,
    iterations: [usize; 4],
    residual: f64,
    converged: bool,
    starts: Vec<StartBounds>,
    files: std::collections::BTreeMap<String, String>,
}

pub fn offline_synth(cfg: &Config, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let meta = Meta::of(cfg);
    let t0 = Instant::now();
    let plant = pipeline::plant(cfg)?;
    let data = pipeline::dataset(cfg, &plant)?;
    let t_data = t0.elapsed().as_secs_f64();
    let off = Offline::build(cfg, &plant, data)?;
    let t_total = t0.elapsed().as_secs_f64();

    fs::write(out.join("config.toml"), cfg.to_toml())?;
    {
        let mut w = create(&out.join("dataset.csv"))?;
        header_lines(&mut w, &meta)?;
        off.data.write_csv(&mut w)?;
        w.flush()?;
    }
    let imdp = off.pimdp.imdp().to_export();
    write_json(&out.join("imdp.json"), &meta, "imdp", &imdp)?;
    write_json(&out.join("pimdp.json"), &meta, "pimdp", &off.pimdp.to_export())?;
    write_json(&out.join("dfa.json"), &meta, "dfa", &off.pimdp.dfa().to_export())?;
    write_json(&out.join("values.json"), &meta, "values", &off.values)?;
    {
        let mut w = create(&out.join("strategy.csv"))?;
        header_lines(&mut w, &meta)?;
        write_strategy_csv(&off.pimdp, &off.values, &mut w)?;
        w.flush()?;
    }

    let mut files = std::collections::BTreeMap::new();
    for f in ["config.toml", "dataset.csv", "imdp.json", "pimdp.json", "dfa.json", "values.json", "strategy.csv"] {
        files.insert(f.to_string(), sha256_file(&out.join(f))?);
    }
    let starts = cfg
        .simulation
        .starts
        .iter()
        .map(|x| {
            let b = off.bounds_at(x);
            StartBounds { x0: x.clone(), lower: b.map(|b| b.0), upper: b.map(|b| b.1) }
        })
        .collect();
    let manifest = Manifest {
        meta: meta.clone(),
        offline_hash: offline_hash(cfg),
        imdp_states: off.pimdp.imdp().num_states(),
        actions: off.pimdp.num_actions(),
        dfa_states: off.pimdp.dfa().num_states(),
        product_states: off.pimdp.num_states(),
        explicit_transitions: imdp.transitions.len(),
        widened_rows: off.report.infeasible.len(),
        iterations: off.values.iterations,
        residual: off.values.residual,
        converged: off.values.converged,
        starts,
        files,
    };
    let mut w = create(&out.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    fs::write(
        out.join("timing.json"),
        serde_json::to_string_pretty(&json!({ "dataset_seconds": t_data, "total_seconds": t_total }))?,
    )?;

    println!(
        "{} regions, {} product states, residual {:.3e}, iterations {:?}",
        manifest.imdp_states, manifest.product_states, manifest.residual, manifest.iterations
    );
    for s in &manifest.starts {
        match (s.lower, s.upper) {
            (Some(l), Some(u)) => println!("x0 {:?}: P in [{l:.4}, {u:.4}]", s.x0),
            _ => println!("x0 {:?}: outside the partition", s.x0),
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Rebuilds the controller from an offline-synth directory made with the same
/// configuration.
pub fn load_controller(cfg: &Config, dir: &Path) -> Result<(Plant, Controller)> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_value(read_json(&manifest_path)?)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let expected = offline_hash(cfg);
    ensure!(
        manifest.offline_hash == expected,
        "{} was written with offline config hash {}, the current configuration hashes to {expected}",
        dir.display(),
        manifest.offline_hash
    );

    let plant = pipeline::plant(cfg)?;
    let data_path = dir.join("dataset.csv");
    if !data_path.exists() {
        return Err(MissingFile(data_path).into());
    }
    let data = Dataset::load(&data_path, plant.num_actions())?;
    let imdp: ImdpExport = serde_json::from_value(unwrap_payload(read_json(&dir.join("imdp.json"))?, "imdp"))?;
    let imdp = Imdp::from_export(&imdp)?;
    let ap = pipeline::alphabet(cfg)?;
    let dfa = Arc::new(pipeline::dfa(cfg, &ap)?);
    let pimdp = Pimdp::build(imdp, dfa)?;
    let values: ValueResult = serde_json::from_value(unwrap_payload(read_json(&dir.join("values.json"))?, "values"))?;
    ensure!(values.lower.len() == pimdp.num_states(), "values.json does not match the product");
    let gp = cfg.gp_settings(plant.num_actions());
    let global = pipeline::fit_models(&data, &gp)?;
    let noise = olsynth::abstraction::NoiseModel::new(cfg.system.noise_std.clone())?;
    let controller = Controller {
        distances: pimdp.distances(),
        pimdp,
        values,
        data,
        global,
        gp,
        noise,
        bounds: cfg.abstraction.clone(),
        synthesis: cfg.synthesis.clone(),
        online: cfg.online.clone(),
    };
    Ok((plant, controller))
}

fn controller(cfg: &Config, dir: Option<&Path>) -> Result<(Plant, Controller)> {
    match dir {
        Some(d) => load_controller(cfg, d),
        None => {
            let plant = pipeline::plant(cfg)?;
            let data = pipeline::dataset(cfg, &plant)?;
            let off = Offline::build(cfg, &plant, data)?;
            let c = off.controller(cfg);
            Ok((plant, c))
        }
    }
}

pub fn simulate(
    cfg: &Config,
    dir: &Path,
    out: &Path,
    x0: &[f64],
    mode: GpMode,
    metrics: Metrics,
    run: usize,
) -> Result<()> {
    ensure!(x0.len() == cfg.dim(), "--x0 has {} components, the state space has {}", x0.len(), cfg.dim());
    let (plant, mut c) = load_controller(cfg, dir)?;
    fs::create_dir_all(out)?;
    let meta = Meta::of(cfg);
    let mut rng = episode_rng(cfg.seed, 0, run);
    let record = c.run(&plant, x0, mode, metrics, run, &mut rng)?;

    let mut w = create(&out.join("run.jsonl"))?;
    serde_json::to_writer(&mut w, &json!({ "meta": meta }))?;
    writeln!(w)?;
    serde_json::to_writer(&mut w, &record)?;
    writeln!(w)?;
    w.flush()?;
    fs::write(out.join("run_timing.json"), serde_json::to_string(&record.step_seconds)?)?;

    println!(
        "{} after {} steps, {} of {} updates accepted",
        outcome_name(&record),
        record.steps.len(),
        record.updates_accepted,
        record.updates_attempted
    );
    Ok(())
}

fn outcome_name(r: &RunRecord) -> String {
    serde_json::to_value(r.outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Serialize)]
struct RunSummary<'a> {
    start: usize,
    run: usize,
    mode: GpMode,
    metrics: Metrics,
    outcome: String,
    steps: usize,
    updates_accepted: usize,
    nesting_violations: usize,
    final_state: &'a [f64],
}

pub fn benchmark(cfg: &Config, dir: Option<&Path>, out: &Path, trajectories: bool) -> Result<()> {
    if cfg.simulation.starts.is_empty() || cfg.simulation.modes.is_empty() || cfg.simulation.metrics.is_empty() {
        bail!("simulation: starts, modes and metrics must all be non-empty");
    }
    let (plant, base) = controller(cfg, dir)?;
    fs::create_dir_all(out)?;
    let meta = Meta::of(cfg);

    let mut runs = create(&out.join("runs.jsonl"))?;
    serde_json::to_writer(&mut runs, &json!({ "meta": meta }))?;
    writeln!(runs)?;
    let mut traj = if trajectories {
        let mut w = create(&out.join("trajectories.jsonl"))?;
        serde_json::to_writer(&mut w, &json!({ "meta": meta }))?;
        writeln!(w)?;
        Some(w)
    } else {
        None
    };

    let mut stats: Vec<BatchStats> = Vec::new();
    let mut timing = vec!["start,mode,metrics,mean_step_seconds".to_string()];
    for (i, x0) in cfg.simulation.starts.iter().enumerate() {
        for &metrics in &cfg.simulation.metrics {
            for &mode in &cfg.simulation.modes {
                let mut io: Result<()> = Ok(());
                let s = run_batch(&base, &plant, x0, i, mode, metrics, cfg.simulation.episodes, cfg.seed, |r| {
                    if io.is_err() {
                        return;
                    }
                    io = (|| {
                        let summary = RunSummary {
                            start: i,
                            run: r.run,
                            mode,
                            metrics,
                            outcome: outcome_name(r),
                            steps: r.steps.len(),
                            updates_accepted: r.updates_accepted,
                            nesting_violations: r.nesting.violations,
                            final_state: &r.final_state,
                        };
                        serde_json::to_writer(&mut runs, &summary)?;
                        writeln!(runs)?;
                        if let Some(t) = traj.as_mut() {
                            serde_json::to_writer(&mut *t, &json!({ "start": i, "record": r }))?;
                            writeln!(t)?;
                        }
                        Ok(())
                    })();
                })?;
                io?;
                println!(
                    "start {i} {:>13} {:>9}: sat {:.3} viol {:.3} timeout {:.3}",
                    mode.name(),
                    metrics.name(),
                    s.p_sat(),
                    s.p_viol(),
                    s.p_timeout()
                );
                timing.push(format!("{i},{},{},{:.6e}", mode.name(), metrics.name(), s.mean_step_seconds));
                stats.push(s);
            }
        }
    }
    runs.flush()?;
    if let Some(mut t) = traj {
        t.flush()?;
    }
    let mut w = create(&out.join("stats.csv"))?;
    write_stats_csv(&stats, &meta.header(), &mut w)?;
    w.flush()?;
    fs::write(out.join("timing.csv"), timing.join("\n") + "\n")?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn print_dfa(formula: &str, props: &[String], as_json: bool) -> Result<()> {
    let ap = Alphabet::new(props.iter().cloned())?;
    let f = parse(formula, &ap)?;
    let dfa = Dfa::from_formula(&f, &ap)?;
    let e = dfa.to_export();
    if as_json {
        println!("{}", serde_json::to_string_pretty(&e)?);
        return Ok(());
    }
    println!("props: {}", ap.props().join(" "));
    println!("initial: {}", e.initial);
    for s in &e.states {
        let tag = match (e.accepting.contains(&s.id), e.sinks.contains(&s.id)) {
            (true, _) => " accepting",
            (_, true) => " sink",
            _ => "",
        };
        let succ: Vec<String> = s.transitions.iter().map(|(k, v)| format!("{k}->{v}")).collect();
        println!("{}{tag}: {}  [{}]", s.id, s.formula, succ.join(" "));
    }
    Ok(())
}

pub fn check_model(file: &Path) -> Result<()> {
    let v = read_json(file)?;
    let (kind, payload) = match &v {
        Value::Object(m) if m.contains_key("pimdp") => ("pimdp", m["pimdp"].clone()),
        Value::Object(m) if m.contains_key("imdp") => ("imdp", m["imdp"].clone()),
        Value::Object(m) if m.contains_key("dfa_initial") => ("pimdp", v.clone()),
        _ => ("imdp", v.clone()),
    };
    if kind == "pimdp" {
        let e: PimdpExport = serde_json::from_value(payload).context("not a product model")?;
        e.validate()?;
        println!("ok: product with {} states and {} actions", e.states.len(), e.num_actions);
    } else {
        let e: ImdpExport = serde_json::from_value(payload).context("not an interval MDP")?;
        let m = Imdp::from_export(&e)?;
        m.validate()?;
        println!("ok: interval MDP with {} states and {} actions", m.num_states(), m.num_actions());
    }
    Ok(())
}
