//! Scenario files, the `kslab` command line, and run artifacts.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod output;

pub use config::{parse_scenario, Scenario};
pub use error::HarnessError;
