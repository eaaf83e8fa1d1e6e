//! Criterion benchmarks for the codec, convolution and oversampling kernels; see `benches/`.
