//! `fdrecon sweep-lambda`: one full reconstruction per curvature weight,
//! same seed throughout, collected into a CSV. A failing run marks its row
//! and the sweep moves on.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;

use fdrecon_core::io;

use crate::commands::reconstruct::run_pipeline;
use crate::commands::{default_out, ensure_input};
use crate::flags::TrainFlags;
use crate::manifest::write_manifest;

#[derive(clap::Args, Debug)]
pub struct SweepArgs {
    /// Input point cloud (.xyz, .obj, or .ply)
    pub input: PathBuf,

    /// Comma-separated λ_fd values, e.g. 0.6,1,3
    #[arg(long, required = true, value_delimiter = ',')]
    pub lambdas: Vec<f64>,

    /// Output directory [default: <input stem>_sweep]
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub flags: TrainFlags,
}

const CSV_HEADER: &str =
    "lambda-fd,cd-x1000,nc-x100,f1-x100,wall-seconds,iters,forward-evals,shell-skipped,status\n";

pub fn run(args: &SweepArgs) -> anyhow::Result<u8> {
    let base = args.flags.resolve()?;
    crate::init_threads(base.threads)?;
    ensure_input(&args.input)?;
    let cloud = io::read_cloud(&args.input)?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out(&args.input, "_sweep"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    write_manifest(
        &out.join("manifest.json"),
        "sweep-lambda",
        serde_json::json!({
            "lambdas": args.lambdas,
            "train": serde_json::to_value(&base)?,
        }),
        base.seed,
        base.threads,
        &[&args.input],
    )?;

    let mut csv = String::from(CSV_HEADER);
    print!("{CSV_HEADER}");
    let mut first_err: Option<anyhow::Error> = None;
    let mut completed = 0usize;
    for &lambda in &args.lambdas {
        let mut resolved = base.clone();
        resolved.lambda_fd = lambda;
        let start = Instant::now();
        let row = match run_pipeline(&cloud, &resolved) {
            Ok(result) => {
                completed += 1;
                let m = &result.metrics;
                let r = &result.outcome.report;
                format!(
                    "{lambda},{:.6},{},{:.4},{:.2},{},{},{},ok\n",
                    m.cd_x1000,
                    m.nc_x100.map_or(String::new(), |v| format!("{v:.4}")),
                    m.f1_x100,
                    start.elapsed().as_secs_f64(),
                    r.iters_run,
                    r.forward_evals,
                    r.shell_skipped,
                )
            }
            Err(err) => {
                log::error!("lambda-fd = {lambda}: {err:#}");
                let reason = format!("{err:#}").replace(['"', '\n'], " ");
                let row = format!("{lambda},,,,,,,,\"failed: {reason}\"\n");
                if first_err.is_none() {
                    first_err = Some(err);
                }
                row
            }
        };
        print!("{row}");
        csv.push_str(&row);
        std::fs::write(out.join("sweep.csv"), &csv).context("writing sweep.csv")?;
    }

    println!(
        "{completed}/{} runs completed; results in {}",
        args.lambdas.len(),
        out.display()
    );
    match first_err {
        Some(err) if completed == 0 => Err(err),
        _ => Ok(0),
    }
}
