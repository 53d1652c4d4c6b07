//! Point-cloud normalization and batch sampling.
//!
//! Training operates in a normalized frame: the cloud is centered and
//! uniformly scaled so its longest bounding-box side spans 1.8, leaving the
//! points inside [−0.9, 0.9]³. The 0.1 margin keeps stencil offsets and
//! shell noise inside the [−1, 1]³ cube that off-surface samples are drawn
//! from. The [`Transform`] maps normalized coordinates back to object units
//! for mesh export.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::vec3::{vec3, Vec3};

/// An unordered set of points in object units, optionally with ground-truth
/// normals (used only for evaluation; reconstruction never reads them).
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<PointCloud> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if n.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        Ok(PointCloud { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Componentwise (min, max) over all points.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for &p in &self.points[1..] {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }
}

/// Similarity mapping normalized coordinates to object units:
/// `object = normalized · scale + translate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub scale: f64,
    pub translate: Vec3,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        scale: 1.0,
        translate: Vec3::ZERO,
    };

    pub fn to_object(&self, x: Vec3) -> Vec3 {
        x * self.scale + self.translate
    }

    pub fn to_normalized(&self, x: Vec3) -> Vec3 {
        (x - self.translate) / self.scale
    }
}

/// A cloud rescaled into [−0.9, 0.9]³ together with the transform back.
#[derive(Clone, Debug)]
pub struct NormalizedCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub transform: Transform,
}

/// Longest bounding-box side of the normalized frame.
pub const NORMALIZED_EXTENT: f64 = 1.8;

/// Center the cloud and scale its longest bounding-box side to 1.8,
/// preserving aspect ratio. Normals are directions and pass through
/// unchanged. Fails if all points coincide.
pub fn normalize(cloud: &PointCloud) -> Result<NormalizedCloud> {
    let (lo, hi) = cloud.bbox();
    let extent = hi - lo;
    let longest = extent.max_component();
    if !(longest > 0.0) {
        return Err(Error::DegenerateBbox);
    }
    let center = (lo + hi) * 0.5;
    let scale = longest / NORMALIZED_EXTENT;
    let points = cloud
        .points
        .iter()
        .map(|&p| (p - center) / scale)
        .collect();
    Ok(NormalizedCloud {
        points,
        normals: cloud.normals.clone(),
        transform: Transform {
            scale,
            translate: center,
        },
    })
}

/// Per-iteration batch sizes and shell noise level.
#[derive(Clone, Copy, Debug)]
pub struct BatchConfig {
    pub surface: usize,
    pub offsurface: usize,
    /// Standard deviation of the isotropic Gaussian shell perturbation;
    /// 0 puts the shell exactly on the surface batch.
    pub shell_sigma: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            surface: 20_000,
            offsurface: 20_000,
            shell_sigma: 1e-2,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.surface == 0 || self.offsurface == 0 {
            return Err(Error::InvalidConfig(
                "batch sizes must be at least 1".into(),
            ));
        }
        if !(self.shell_sigma.is_finite() && self.shell_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "shell_sigma must be finite and non-negative, got {}",
                self.shell_sigma
            )));
        }
        Ok(())
    }
}

/// One iteration's worth of sample points, all in normalized coordinates.
#[derive(Clone, Debug)]
pub struct Batches {
    pub surface: Vec<Vec3>,
    pub offsurface: Vec<Vec3>,
    pub shell: Vec<Vec3>,
}

/// Draw one iteration's batches: surface points without replacement when the
/// pool is large enough (with replacement otherwise), off-surface points
/// uniform in [−1, 1]³, and the shell as the surface batch plus Gaussian
/// noise.
pub fn sample_batches<R: Rng>(
    points: &[Vec3],
    cfg: &BatchConfig,
    rng: &mut R,
) -> Result<Batches> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }

    let surface: Vec<Vec3> = if points.len() >= cfg.surface {
        sample_indices(rng, points.len(), cfg.surface)
            .iter()
            .map(|i| points[i])
            .collect()
    } else {
        (0..cfg.surface)
            .map(|_| points[rng.gen_range(0..points.len())])
            .collect()
    };

    let offsurface = (0..cfg.offsurface)
        .map(|_| {
            vec3(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();

    let shell = if cfg.shell_sigma == 0.0 {
        surface.clone()
    } else {
        surface
            .iter()
            .map(|&p| {
                let n: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                p + vec3(n[0], n[1], n[2]) * cfg.shell_sigma
            })
            .collect()
    };

    Ok(Batches {
        surface,
        offsurface,
        shell,
    })
}

/// Isotropic Gaussian jitter with standard deviation `sigma` per axis, for
/// synthesizing noisy scans from exact oracle samples.
pub fn perturb<R: Rng>(points: &mut [Vec3], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for p in points {
        let n: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        *p += vec3(n[0], n[1], n[2]) * sigma;
    }
}

/// Reserve an evaluation subsample of up to `max_points`, drawn without
/// replacement. Clouds at most twice that size are reused wholesale rather
/// than carved up — at desk scale there is not enough data to hold out.
pub fn eval_subsample<R: Rng>(points: &[Vec3], max_points: usize, rng: &mut R) -> Vec<Vec3> {
    if points.len() <= max_points {
        return points.to_vec();
    }
    sample_indices(rng, points.len(), max_points)
        .iter()
        .map(|i| points[i])
        .collect()
}

/// Uniform area-weighted sampling of a triangle soup; the returned cloud
/// carries the face normal of each sampled triangle.
pub fn resample_mesh_surface<R: Rng>(
    mesh: &crate::mesh::TriangleMesh,
    n: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.gen_range(0.0..total);
        let t = cumulative.partition_point(|&c| c <= r);
        let [a, b, c] = mesh.triangle_vertices(t);
        let mut r1: f64 = rng.gen();
        let mut r2: f64 = rng.gen();
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        points.push(a + (b - a) * r1 + (c - a) * r2);
        normals.push(
            (b - a)
                .cross(c - a)
                .normalized(0.0)
                .expect("positive-area triangle"),
        );
    }
    PointCloud::new(points, Some(normals))
}
