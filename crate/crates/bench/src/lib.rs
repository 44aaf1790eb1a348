//! Benchmark-only crate; see `benches/pipeline.rs`. No library code.
