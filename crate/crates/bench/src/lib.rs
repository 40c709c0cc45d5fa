//! Criterion benchmarks for the ensemble and spectral kernels; see `benches/`.
