//! `fdrecon make-cloud`: sample an analytic test shape into a cloud file,
//! with exact normals and optional synthetic scan noise.

use std::path::PathBuf;

use anyhow::bail;

use fdrecon_core::io::write_cloud;
use fdrecon_core::oracles::AnalyticShape;
use fdrecon_core::rng::derive_rng;
use fdrecon_core::sampling::{perturb, PointCloud};
use fdrecon_core::vec3::{vec3, Vec3};

use crate::manifest::write_manifest;

#[derive(clap::Args, Debug)]
pub struct MakeCloudArgs {
    /// sphere | cylinder | torus | box | rounded-box | rounded-cube | plane
    pub shape: String,

    /// Output path (.xyz, .obj, or .ply)
    pub out: PathBuf,

    /// Number of surface samples [default: 5000]
    #[arg(long)]
    pub points: Option<usize>,

    /// Isotropic Gaussian noise σ added to the points [default: 0]
    #[arg(long)]
    pub noise: Option<f64>,

    /// Sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Canonical test shapes, all roughly unit-sized around the origin.
pub fn shape_by_name(name: &str) -> anyhow::Result<AnalyticShape> {
    Ok(match name {
        "sphere" => AnalyticShape::Sphere { r: 0.5 },
        "cylinder" => AnalyticShape::Cylinder { r: 0.5 },
        "torus" => AnalyticShape::Torus {
            big_r: 0.5,
            small_r: 0.2,
        },
        "box" => AnalyticShape::Box {
            half: vec3(0.5, 0.4, 0.3),
        },
        "rounded-box" => AnalyticShape::RoundedBox {
            half: vec3(0.5, 0.4, 0.3),
            radius: 0.1,
        },
        "rounded-cube" => AnalyticShape::RoundedBox {
            half: vec3(0.4, 0.4, 0.4),
            radius: 0.08,
        },
        "plane" => AnalyticShape::Plane {
            normal: Vec3::Z,
            offset: 0.0,
        },
        other => bail!(
            "unknown shape {other:?} (expected sphere, cylinder, torus, box, rounded-box, \
             rounded-cube, or plane)"
        ),
    })
}

pub fn run(args: &MakeCloudArgs) -> anyhow::Result<u8> {
    let n = args.points.unwrap_or(5000);
    let seed = args.seed.unwrap_or(0);
    let noise = args.noise.unwrap_or(0.0);
    let shape = shape_by_name(&args.shape)?;

    let mut rng = derive_rng(seed, "make-cloud", 0);
    let mut points = shape.surface_samples(n, &mut rng)?;
    // Normals of the underlying surface, taken before any noise — the usual
    // ground-truth convention for synthetic scans.
    let normals: Option<Vec<Vec3>> = points
        .iter()
        .map(|&p| shape.gradient(p).normalized(1e-12))
        .collect();
    if normals.is_none() {
        log::warn!("degenerate surface normal encountered; writing positions only");
    }
    perturb(&mut points, noise, &mut rng);
    let cloud = PointCloud::new(points, normals)?;
    write_cloud(&args.out, &cloud)?;

    write_manifest(
        &args.out.with_extension("manifest.json"),
        "make-cloud",
        serde_json::json!({
            "shape": args.shape,
            "points": n,
            "noise": noise,
            "seed": seed,
            "out": args.out.display().to_string(),
        }),
        seed,
        0,
        &[],
    )?;
    println!("wrote {} ({n} points)", args.out.display());
    Ok(0)
}
