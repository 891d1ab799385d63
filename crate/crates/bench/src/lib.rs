//! Benchmark harness for the vmtree index engines: device profiles,
//! deterministic workload generators, run/grid execution and CSV reports.
//! The `vmtree-bench` binary is a thin CLI over these modules.

pub mod profile;
pub mod report;
pub mod runner;
pub mod workload;
