//! Command implementations behind the `logmink` binary.
//!
//! Every command reads a merged [`Config`], writes its artifacts atomically
//! into the output directory and returns a [`CmdOutput`]. Errors map to exit
//! codes through [`CliError::exit_code`].

mod commands;
mod config;

pub use commands::{cmd_diag, cmd_experiment, cmd_flow, cmd_john, cmd_measure, cmd_solve, CmdOutput, FLOW_TOLERANCE};
pub use config::{Config, KEYS};

/// Exit code legend shown in the help text.
pub const EXIT_CODES: &str = "Exit codes:\n  0  success (residual or suite caps met)\n  1  solver, flow or experiment failure, or residual above tolerance\n  2  invalid flags, config file or input file";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] logmink_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use logmink_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Parse(_) | E::InvalidParameter(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}
