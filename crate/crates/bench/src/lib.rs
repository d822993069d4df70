//! Criterion benchmarks for `sciverify` live in `benches/`; run them with
//! `cargo bench -p sciverify-bench`.
