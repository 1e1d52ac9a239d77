//! Support library for the `optcon` binary: the on-disk scenario schema
//! and the run output bundle (trace CSV, metrics JSON, gnuplot script).
//! Split out of the binary so integration tests can exercise the file
//! format directly.

pub mod output;
pub mod scenario_file;
