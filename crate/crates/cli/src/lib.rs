//! Command-line front end for the `bosonic-dnm` experiments.

pub mod config;
pub mod output;
pub mod run;
pub mod svg;
