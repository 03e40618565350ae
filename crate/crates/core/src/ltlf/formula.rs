use std::fmt;

use super::LtlfError;

/// Maximum number of atomic propositions; symbols are dense bitmasks.
pub const MAX_PROPS: usize = 16;

/// A set of atomic propositions encoded as a bitmask over the declared alphabet.
pub type Symbol = u32;

/// Ordered list of declared atomic propositions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Alphabet {
    props: Vec<String>,
}

impl Alphabet {
    pub fn new<I, S>(props: I) -> Result<Self, LtlfError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let props: Vec<String> = props.into_iter().map(Into::into).collect();
        if props.len() > MAX_PROPS {
            return Err(LtlfError::TooManyProps(props.len()));
        }
        for (i, p) in props.iter().enumerate() {
            if !is_identifier(p) || is_keyword(p) {
                return Err(LtlfError::BadPropName(p.clone()));
            }
            if props[..i].contains(p) {
                return Err(LtlfError::DuplicateProp(p.clone()));
            }
        }
        Ok(Alphabet { props })
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p == name)
    }

    /// Number of distinct symbols, `2^|AP|`.
    pub fn num_symbols(&self) -> usize {
        1usize << self.props.len()
    }

    /// Builds a symbol from proposition names.
    pub fn symbol<'a, I: IntoIterator<Item = &'a str>>(&self, names: I) -> Result<Symbol, LtlfError> {
        let mut s = 0;
        for n in names {
            let i = self.index_of(n).ok_or_else(|| LtlfError::UnknownProp { name: n.to_string(), pos: 0 })?;
            s |= 1 << i;
        }
        Ok(s)
    }

    pub fn symbol_names(&self, s: Symbol) -> Vec<&str> {
        self.props.iter().enumerate().filter(|(i, _)| s & (1 << i) != 0).map(|(_, p)| p.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(usize),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    WeakNext(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Globally(Box<Formula>),
}

impl Formula {
    pub fn atom(i: usize) -> Self {
        Formula::Atom(i)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }
    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }
    pub fn weak_next(f: Formula) -> Self {
        Formula::WeakNext(Box::new(f))
    }
    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }
    pub fn release(a: Formula, b: Formula) -> Self {
        Formula::Release(Box::new(a), Box::new(b))
    }
    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }
    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    /// Largest atom index referenced, if any.
    pub fn max_atom(&self) -> Option<usize> {
        use Formula::*;
        match self {
            True | False => None,
            Atom(i) => Some(*i),
            Not(a) | Next(a) | WeakNext(a) | Eventually(a) | Globally(a) => a.max_atom(),
            And(a, b) | Or(a, b) | Until(a, b) | Release(a, b) => match (a.max_atom(), b.max_atom()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn display<'a>(&'a self, ap: &'a Alphabet) -> FormulaDisplay<'a> {
        FormulaDisplay { f: self, ap }
    }
}

pub struct FormulaDisplay<'a> {
    f: &'a Formula,
    ap: &'a Alphabet,
}

impl<'a> fmt::Display for FormulaDisplay<'a> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Formula::*;
        let sub = |g: &'a Formula| FormulaDisplay { f: g, ap: self.ap };
        match self.f {
            True => write!(out, "true"),
            False => write!(out, "false"),
            Atom(i) => match self.ap.props().get(*i) {
                Some(name) => write!(out, "{name}"),
                None => write!(out, "p{i}"),
            },
            Not(a) => write!(out, "!({})", sub(a)),
            And(a, b) => write!(out, "({} & {})", sub(a), sub(b)),
            Or(a, b) => write!(out, "({} | {})", sub(a), sub(b)),
            Next(a) => write!(out, "X({})", sub(a)),
            WeakNext(a) => write!(out, "WX({})", sub(a)),
            Until(a, b) => write!(out, "({} U {})", sub(a), sub(b)),
            Release(a, b) => write!(out, "({} R {})", sub(a), sub(b)),
            Eventually(a) => write!(out, "F({})", sub(a)),
            Globally(a) => write!(out, "G({})", sub(a)),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "true" | "false" | "X" | "WX" | "U" | "R" | "F" | "G")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    True,
    False,
    Ident(String),
    Not,
    And,
    Or,
    Next,
    WeakNext,
    Until,
    Release,
    Eventually,
    Globally,
    LParen,
    RParen,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, LtlfError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '!' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "X" => Tok::Next,
                    "WX" => Tok::WeakNext,
                    "U" => Tok::Until,
                    "R" => Tok::Release,
                    "F" => Tok::Eventually,
                    "G" => Tok::Globally,
                    _ => Tok::Ident(word.to_string()),
                };
                toks.push((tok, start));
                continue;
            }
            other => return Err(LtlfError::Syntax { pos: i, msg: format!("unexpected character '{other}'") }),
        };
        toks.push((tok, i));
        i += 1;
    }
    toks.push((Tok::End, text.len()));
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    ap: &'a Alphabet,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn or_expr(&mut self) -> Result<Formula, LtlfError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Formula, LtlfError> {
        let mut lhs = self.temporal_expr()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.temporal_expr()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    // U and R are right-associative.
    fn temporal_expr(&mut self) -> Result<Formula, LtlfError> {
        let lhs = self.unary()?;
        match self.peek() {
            Tok::Until => {
                self.bump();
                Ok(Formula::until(lhs, self.temporal_expr()?))
            }
            Tok::Release => {
                self.bump();
                Ok(Formula::release(lhs, self.temporal_expr()?))
            }
            _ => Ok(lhs),
        }
    }

    fn unary(&mut self) -> Result<Formula, LtlfError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Not => Ok(Formula::not(self.unary()?)),
            Tok::Next => Ok(Formula::next(self.unary()?)),
            Tok::WeakNext => Ok(Formula::weak_next(self.unary()?)),
            Tok::Eventually => Ok(Formula::eventually(self.unary()?)),
            Tok::Globally => Ok(Formula::globally(self.unary()?)),
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::False),
            Tok::Ident(name) => match self.ap.index_of(&name) {
                Some(i) => Ok(Formula::Atom(i)),
                None => Err(LtlfError::UnknownProp { name, pos }),
            },
            Tok::LParen => {
                let inner = self.or_expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(LtlfError::Syntax { pos: self.pos(), msg: "expected ')'".into() });
                }
                self.bump();
                Ok(inner)
            }
            Tok::End => Err(LtlfError::Syntax { pos, msg: "unexpected end of input".into() }),
            t => Err(LtlfError::Syntax { pos, msg: format!("unexpected token {t:?}") }),
        }
    }
}

/// Parses an ASCII LTLf formula over the given alphabet.
///
/// Precedence from tightest: unary operators (`!`, `X`, `WX`, `F`, `G`),
/// then `U`/`R` (right-associative), then `&`, then `|`.
pub fn parse(text: &str, ap: &Alphabet) -> Result<Formula, LtlfError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, at: 0, ap };
    let f = p.or_expr()?;
    if *p.peek() != Tok::End {
        return Err(LtlfError::Syntax { pos: p.pos(), msg: "trailing input".into() });
    }
    Ok(f)
}

/// Decides `trace, i ⊨ f` under finite-trace semantics.
///
/// Positions at or past the end of the trace behave as the empty suffix:
/// atoms, `X`, `U` and `F` are false there; `WX`, `R` and `G` are true.
pub fn eval_trace(f: &Formula, trace: &[Symbol], i: usize) -> bool {
    use Formula::*;
    let n = trace.len();
    match f {
        True => true,
        False => false,
        Atom(p) => i < n && trace[i] & (1 << p) != 0,
        Not(a) => !eval_trace(a, trace, i),
        And(a, b) => eval_trace(a, trace, i) && eval_trace(b, trace, i),
        Or(a, b) => eval_trace(a, trace, i) || eval_trace(b, trace, i),
        Next(a) => n > i + 1 && eval_trace(a, trace, i + 1),
        WeakNext(a) => n <= i + 1 || eval_trace(a, trace, i + 1),
        Until(a, b) => {
            for j in i..n {
                if eval_trace(b, trace, j) {
                    return true;
                }
                if !eval_trace(a, trace, j) {
                    return false;
                }
            }
            false
        }
        Release(a, b) => {
            for j in i..n {
                if !eval_trace(b, trace, j) {
                    return false;
                }
                if eval_trace(a, trace, j) {
                    return true;
                }
            }
            true
        }
        Eventually(a) => (i..n).any(|j| eval_trace(a, trace, j)),
        Globally(a) => (i..n).all(|j| eval_trace(a, trace, j)),
    }
}
