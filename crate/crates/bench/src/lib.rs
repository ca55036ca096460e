//! Benchmarks for `trax-core`; see `benches/`.
