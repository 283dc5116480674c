//! Benchmark-only crate; see `benches/kernels.rs`.
//!
//! Run with `cargo bench -p stormc-bench`. The benchmarks cover the three
//! hot paths of a long optimization run: the momentum-recursion kernel, the
//! normalized step, and minibatch oracle evaluation on a realistic problem.
