//! `fdrecon reconstruct`: cloud in, watertight mesh out, with the training
//! log, both checkpoints, metrics against the input cloud, and the manifest
//! beside it.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use serde_json::json;

use fdrecon_core::io;
use fdrecon_core::mesh::TriangleMesh;
use fdrecon_core::metrics::{self, MetricsReport};
use fdrecon_core::rng::derive_rng;
use fdrecon_core::sampling::{normalize, resample_mesh_surface, PointCloud};
use fdrecon_core::trainer::{extract_mesh, log_to_csv, train, TrainOutcome};

use crate::commands::{default_out, ensure_input};
use crate::flags::{ResolvedTrain, TrainFlags};
use crate::manifest::write_manifest;

#[derive(clap::Args, Debug)]
pub struct ReconstructArgs {
    /// Input point cloud (.xyz, .obj, or .ply)
    pub input: PathBuf,

    /// Output directory [default: <input stem>_recon]
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub flags: TrainFlags,
}

pub struct PipelineResult {
    pub outcome: TrainOutcome,
    pub mesh: TriangleMesh,
    pub metrics: MetricsReport,
}

/// The full normalize → train → extract → measure pipeline, in the input
/// cloud's coordinate frame. Shared with `sweep-lambda`.
pub fn run_pipeline(cloud: &PointCloud, r: &ResolvedTrain) -> anyhow::Result<PipelineResult> {
    let normalized = normalize(cloud)?;
    let (train_cfg, net_cfg) = r.to_configs();
    let outcome = train(&normalized, net_cfg, &train_cfg)?;
    let mesh = extract_mesh(&outcome.best, r.mc_res)
        .context("extracting the final mesh")?
        .apply_transform(&normalized.transform);
    let mut rng = derive_rng(r.seed, "metric-resample", 0);
    let pred = resample_mesh_surface(&mesh, r.metric_samples, &mut rng)?;
    let metrics = metrics::metrics_report(&pred, cloud, r.f1_threshold)?;
    Ok(PipelineResult {
        outcome,
        mesh,
        metrics,
    })
}

pub fn metrics_json(m: &MetricsReport, r: &ResolvedTrain) -> serde_json::Value {
    json!({
        "cd-x1000": m.cd_x1000,
        "f1-x100": m.f1_x100,
        "nc-x100": m.nc_x100,
        "hausdorff": m.hausdorff,
        "f1-threshold": r.f1_threshold,
        "metric-samples": r.metric_samples,
    })
}

pub fn run(args: &ReconstructArgs) -> anyhow::Result<u8> {
    let resolved = args.flags.resolve()?;
    crate::init_threads(resolved.threads)?;
    ensure_input(&args.input)?;
    let cloud = io::read_cloud(&args.input)?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out(&args.input, "_recon"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    write_manifest(
        &out.join("manifest.json"),
        "reconstruct",
        serde_json::to_value(&resolved)?,
        resolved.seed,
        resolved.threads,
        &[&args.input],
    )?;

    let start = Instant::now();
    let result = run_pipeline(&cloud, &resolved)?;
    let report = &result.outcome.report;

    io::write_mesh(&out.join("mesh.obj"), &result.mesh)?;
    // The .ply copy carries each vertex's distance to the input cloud, for
    // inspecting where the reconstruction strays.
    let vertex_dist = metrics::nearest_distances(&result.mesh.vertices, &cloud.points)?;
    io::write_mesh_ply(
        &out.join("mesh.ply"),
        &result.mesh,
        io::PlyEncoding::Ascii,
        Some(("hausdorff", &vertex_dist)),
    )?;
    result.outcome.best.save_checkpoint(&out.join("checkpoint_best.txt"))?;
    result.outcome.last.save_checkpoint(&out.join("checkpoint_final.txt"))?;
    std::fs::write(out.join("training_log.csv"), log_to_csv(&report.rows))
        .context("writing training log")?;
    let metrics_text = format!("{}\n", serde_json::to_string_pretty(&metrics_json(&result.metrics, &resolved))?);
    std::fs::write(out.join("metrics.json"), metrics_text).context("writing metrics")?;

    println!("{}", result.metrics);
    println!(
        "{} iterations in {:.1}s; best at iteration {} (chamfer {:.6} normalized); \
         {} vertices, {} triangles, watertight: {}",
        report.iters_run,
        start.elapsed().as_secs_f64(),
        report.best_iter,
        report.best_cd,
        result.mesh.vertices.len(),
        result.mesh.triangles.len(),
        result.mesh.is_watertight(),
    );
    println!("outputs in {}", out.display());
    Ok(0)
}
