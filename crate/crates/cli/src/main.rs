//! `fdrecon`: reconstruct watertight surfaces from unoriented point clouds
//! by fitting a neural signed distance field with finite-difference
//! curvature regularization, plus the supporting verification, sweep, and
//! evaluation commands.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error,
//! 3 training divergence.

mod commands;
mod flags;
mod manifest;

use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fdrecon",
    version,
    about = "Watertight surface reconstruction from unoriented point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a signed distance field on a point cloud and extract its mesh
    Reconstruct(commands::reconstruct::ReconstructArgs),

    /// Check the curvature stencils' convergence order on analytic shapes
    VerifyStencils(commands::verify::VerifyArgs),

    /// Reconstruct once per curvature weight and tabulate the metrics
    SweepLambda(commands::sweep::SweepArgs),

    /// Score a reconstruction (mesh or cloud) against ground truth
    Eval(commands::eval::EvalArgs),

    /// Sample an analytic test shape into a point-cloud file
    MakeCloud(commands::make_cloud::MakeCloudArgs),
}

/// Cap the worker pool; 0 keeps rayon's default (all cores). With 1 thread
/// every stage is sequential and runs are bit-reproducible; more threads
/// only change scheduling, not results, because all parallel reductions
/// merge in a fixed order.
pub fn init_threads(threads: usize) -> anyhow::Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker thread pool")?;
    }
    Ok(())
}

/// Map an error to the documented exit code: training divergence is 3,
/// everything else that bubbles up is a usage/input problem, 2.
fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<fdrecon_core::Error>() {
        Some(fdrecon_core::Error::NonFiniteLoss { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stdout)
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reconstruct(args) => commands::reconstruct::run(args),
        Command::VerifyStencils(args) => commands::verify::run(args),
        Command::SweepLambda(args) => commands::sweep::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::MakeCloud(args) => commands::make_cloud::run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
