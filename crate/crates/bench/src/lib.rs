//! Benchmarks for the peerassess crate live under `benches/`.
