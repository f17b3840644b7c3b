//! `lattice`: fit lattice markets, simulate and certify simultaneous
//! long/short policies, trace weight frontiers and run backtests.
//!
//! Exit codes: 0 on success, 1 when the run is well formed but the model is
//! infeasible or no positivity certificate holds, 2 on input errors.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use lattice_core::LatticeError;

use args::{Cli, Command};
use commands::SemanticFailure;

fn exit_code(err: &anyhow::Error) -> u8 {
    let semantic = err.chain().any(|cause| {
        cause.downcast_ref::<SemanticFailure>().is_some()
            || cause.downcast_ref::<LatticeError>().is_some_and(LatticeError::is_semantic)
    });
    if semantic {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let global = &cli.global;
    let result = match &cli.command {
        Command::Estimate(a) => commands::estimate(global, a),
        Command::Simulate(a) => commands::simulate(global, a),
        Command::Bounds(a) => commands::bounds(global, a),
        Command::Frontier(a) => commands::frontier(global, a),
        Command::Backtest(a) => commands::backtest(global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
