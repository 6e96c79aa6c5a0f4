//! Command-line front end for the marcher time-integration library: single
//! solves against the built-in problem library, work-precision sweeps,
//! convergence-order studies, adjoint gradient checks, and the event demo.
//!
//! Exit codes: 0 success, 1 configuration error, 2 divergence, 3 failed
//! gradient check.

mod adjoint;
mod events;
mod order;
mod setup;
mod solve;
mod sweep;

pub use adjoint::{adjoint_report, AdjointReport, DUALITY_TOL, FD_TOL};
pub use order::{order_study, OrderReport};
pub use setup::{parse_atol, parse_params, rel_inf};
pub use sweep::{sweep, to_csv as sweep_csv, SweepRow};

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "marcher",
    version,
    about = "Desk-scale ODE/DAE integration: solves, sweeps, order studies, adjoints, events"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a library problem once; result JSON on stdout.
    Solve(solve::SolveArgs),
    /// Work-precision sweep over a tolerance ladder; CSV on stdout.
    Sweep(sweep::SweepArgs),
    /// Fixed-step convergence study over a dt ladder.
    Order(order::OrderArgs),
    /// Cross-check adjoint, forward, and finite-difference gradients.
    AdjointCheck(adjoint::AdjointArgs),
    /// Integrate with the problem's event spec; trajectory and event CSVs.
    Events(events::EventsArgs),
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; they are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Solve(a) => solve::main(a),
        Cmd::Sweep(a) => sweep::main(a),
        Cmd::Order(a) => order::main(a),
        Cmd::AdjointCheck(a) => adjoint::main(a),
        Cmd::Events(a) => events::main(a),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}
