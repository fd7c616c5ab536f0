//! Command-line experiments: argument parsing, sieve cache, reports and
//! plot scripts. The binary is a thin wrapper around [`run`].

// `!(x >= a)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod cache;
pub mod commands;
pub mod error;
pub mod plot;
pub mod report;

use std::path::PathBuf;

use args::{Cli, Command};
use commands::Ctx;
use error::CliResult;

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    if let Command::Plot(a) = &cli.command {
        return Ok(vec![plot::emit_plot_script(&a.report, a.output.as_deref())?]);
    }
    let out_dir = cli.global.out.clone();
    let ctx = Ctx::new(cli.global);
    let outputs = match cli.command {
        Command::Sieve(a) => commands::sieve(ctx, a),
        Command::Delta(a) => commands::delta(ctx, a),
        Command::Mainterm(a) => commands::mainterm(ctx, a),
        Command::Moments(a) => commands::moments(ctx, a),
        Command::Meanvalue(a) => commands::meanvalue(ctx, a),
        Command::Shortint(a) => commands::shortint(ctx, a),
        Command::Signs(a) => commands::signs(ctx, a),
        Command::Runs(a) => commands::runs(ctx, a),
        Command::Kernel(a) => commands::kernel(ctx, a),
        Command::VoronoiResidual(a) => commands::voronoi_residual(ctx, a),
        Command::Excursion(a) => commands::excursion(ctx, a),
        Command::Plot(_) => unreachable!(),
    }?;
    outputs.write(&out_dir)
}
