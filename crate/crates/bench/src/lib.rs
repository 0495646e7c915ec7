// Benchmarks live in benches/; see `cargo bench -p scene-bench`.
