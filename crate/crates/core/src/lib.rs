//! Data-driven controller synthesis for unknown stochastic systems.
//!
//! The pipeline learns per-action dynamics with Gaussian processes, abstracts
//! them into an interval MDP over a grid partition, composes it with the DFA of
//! an LTLf specification, synthesizes a robust strategy by interval value
//! iteration, and refines strategy and abstraction online with local GPs.

pub mod abstraction;
pub mod config;
pub mod geometry;
pub mod gp;
pub mod imdp;
pub mod ltlf;
pub mod online;
pub mod pipeline;
pub mod sim;
pub mod synthesis;
