//! `sap` command-line runner: JSON job configs in, CSV/JSON results and a
//! run manifest out.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{Command, RunConfig};
pub use run::{run, Invocation, RunError};
