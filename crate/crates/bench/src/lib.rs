//! Criterion benchmarks for the hot paths of `metapop-core`; see `benches/`.
