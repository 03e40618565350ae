//! LTLf formulas: parsing, finite-trace semantics and DFA compilation.

mod dfa;
mod formula;

pub use dfa::{Dfa, DfaExport, DfaStateExport, DEFAULT_MAX_STATES, INFINITE_DISTANCE};
pub use formula::{eval_trace, parse, Alphabet, Formula, FormulaDisplay, Symbol, MAX_PROPS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LtlfError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown proposition '{name}' at {pos}")]
    UnknownProp { name: String, pos: usize },
    #[error("invalid proposition name '{0}'")]
    BadPropName(String),
    #[error("duplicate proposition '{0}'")]
    DuplicateProp(String),
    #[error("{0} propositions exceed the supported maximum of {MAX_PROPS}")]
    TooManyProps(usize),
    #[error("DFA construction exceeded {0} states")]
    Capacity(usize),
    #[error("malformed transition table")]
    MalformedDfa,
}
