//! `fdrecon eval`: score a reconstruction against ground truth. Either side
//! may be a mesh (resampled uniformly by area, carrying face normals) or a
//! point cloud used as-is.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use fdrecon_core::io;
use fdrecon_core::mesh::TriangleMesh;
use fdrecon_core::metrics::metrics_report;
use fdrecon_core::rng::derive_rng;
use fdrecon_core::sampling::{resample_mesh_surface, PointCloud};

use crate::commands::ensure_input;
use crate::flags::KeyVals;
use crate::manifest::write_manifest;

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Reconstruction to score: mesh (.obj/.ply) or cloud (.xyz)
    pub pred: PathBuf,

    /// Ground truth: mesh or cloud
    pub gt: PathBuf,

    /// `key = value` config file; command-line flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Distance threshold for the F1 score [default: 0.005]
    #[arg(long)]
    pub f1_threshold: Option<f64>,

    /// Points resampled from each mesh input [default: 50000]
    #[arg(long)]
    pub samples: Option<usize>,

    /// Seed for mesh resampling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses all cores [default: 0]
    #[arg(long)]
    pub threads: Option<usize>,

    /// Report directory [default: eval_report]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Load one comparison side. Meshes are resampled with a stream derived
/// only from the seed, so evaluating a mesh against itself compares two
/// identical samplings: distance exactly 0, F1 exactly 100.
fn load_side(path: &Path, samples: usize, seed: u64) -> anyhow::Result<PointCloud> {
    ensure_input(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "xyz" => Ok(io::read_xyz(path)?),
        "obj" | "ply" => {
            let (cloud, triangles) = if ext == "obj" {
                io::read_obj(path)?
            } else {
                io::read_ply(path)?
            };
            if triangles.is_empty() {
                Ok(cloud)
            } else {
                let mesh = TriangleMesh::new(cloud.points, triangles)?;
                let mut rng = derive_rng(seed, "eval-resample", 0);
                Ok(resample_mesh_surface(&mesh, samples, &mut rng)?)
            }
        }
        other => bail!(
            "unsupported format .{other} for {} (expected .xyz, .obj, or .ply)",
            path.display()
        ),
    }
}

pub fn run(args: &EvalArgs) -> anyhow::Result<u8> {
    let mut file = match &args.config {
        Some(p) => KeyVals::load(p)?,
        None => KeyVals::empty(),
    };
    let f1_threshold = match args.f1_threshold {
        Some(v) => v,
        None => file.take("f1-threshold")?.unwrap_or(0.005),
    };
    let samples = match args.samples {
        Some(v) => v,
        None => file.take("samples")?.unwrap_or(50_000),
    };
    let seed = match args.seed {
        Some(v) => v,
        None => file.take("seed")?.unwrap_or(0),
    };
    let threads = match args.threads {
        Some(v) => v,
        None => file.take("threads")?.unwrap_or(0),
    };
    file.finish()?;
    crate::init_threads(threads)?;

    let pred = load_side(&args.pred, samples, seed)?;
    let gt = load_side(&args.gt, samples, seed)?;
    let report = metrics_report(&pred, &gt, f1_threshold)?;
    println!("{report}");

    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("eval_report"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let metrics = serde_json::json!({
        "cd-x1000": report.cd_x1000,
        "f1-x100": report.f1_x100,
        "nc-x100": report.nc_x100,
        "hausdorff": report.hausdorff,
        "f1-threshold": f1_threshold,
        "samples": samples,
    });
    std::fs::write(
        out.join("metrics.json"),
        format!("{}\n", serde_json::to_string_pretty(&metrics)?),
    )?;
    write_manifest(
        &out.join("manifest.json"),
        "eval",
        serde_json::json!({
            "f1-threshold": f1_threshold,
            "samples": samples,
            "seed": seed,
            "threads": threads,
        }),
        seed,
        threads,
        &[&args.pred, &args.gt],
    )?;
    Ok(0)
}
