//! Benchmark harness for the nirmal optimizer library: analytic test
//! functions, the training protocol, result emission, and run comparison.

pub mod compare;
pub mod fetch;
pub mod funcbench;
pub mod outputs;
pub mod testfn;
pub mod train;
