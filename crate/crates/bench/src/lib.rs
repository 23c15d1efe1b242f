//! Criterion benchmarks for the engine, the training loop and the metrics.
//! Run with `cargo bench -p sitta-bench`.
