//! Benchmarks for the olsynth pipeline; see benches/pipeline.rs.
