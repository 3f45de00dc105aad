//! Front end for `blfsim`: scenario files, run/sweep/check/plot.

pub mod commands;
pub mod output;
pub mod plot;
pub mod scenario;
pub mod sweep;
