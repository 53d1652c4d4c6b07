//! Closed-form fields with analytic gradients, Hessians, and curvatures.
//!
//! These are the ground truth the finite-difference machinery is measured
//! against: every stencil accuracy, convergence-order, and curvature test
//! compares against values computed here in closed form. The geometric
//! shapes are exact signed distance fields; `Quadratic` is a general (not
//! distance-like) field whose Hessian is constant, which makes the
//! second-difference stencils exact on it up to round-off.
//!
//! Two independent routes to Gaussian curvature exist deliberately:
//! per-shape geometric formulas ([`analytic_gaussian_curvature`]) and the
//! bordered-Hessian determinant ([`bordered_hessian_curvature`]). Their
//! agreement is itself one of the checked properties.

use rand::Rng;

use crate::error::{Error, Result};
use crate::frames::{base_tangent_pair, TangentFrame};
use crate::vec3::{det4, vec3, Mat3, Vec3};

/// How far `analytic_shape_operator` lets ‖∇f‖ stray from 1 before treating
/// the point as medial-axis-contaminated.
pub const MEDIAL_GRAD_TOL: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub enum AnalyticShape {
    /// {x : n·x = offset}, n unit.
    Plane { normal: Vec3, offset: f64 },
    /// Origin-centered sphere of radius r.
    Sphere { r: f64 },
    /// Infinite cylinder of radius r around the z-axis.
    Cylinder { r: f64 },
    /// Torus around the z-axis: core-circle radius `big_r`, tube radius
    /// `small_r`.
    Torus { big_r: f64, small_r: f64 },
    /// Axis-aligned box with the exact (not bound-based) distance field.
    Box { half: Vec3 },
    /// Box with every edge and corner filleted at `radius` — the overall
    /// outline keeps `half` as its half-extents.
    RoundedBox { half: Vec3, radius: f64 },
    /// f = xᵀAx + b·x + c with A symmetric. Not a distance field.
    Quadratic { a: Mat3, b: Vec3, c: f64 },
}

/// Active-set data for the box fields: which axes are outside, and the
/// clamped outward offset.
struct BoxRegion {
    q: Vec3,
    p: Vec3,
    active: u32,
    dist: f64,
}

fn box_region(x: Vec3, half: Vec3) -> BoxRegion {
    let q = x.abs() - half;
    let p = q.max(Vec3::ZERO);
    let active = [q.x, q.y, q.z].iter().filter(|&&v| v > 0.0).count() as u32;
    BoxRegion {
        q,
        p,
        active,
        dist: p.norm(),
    }
}

impl AnalyticShape {
    /// A rounded box keeps the outer half-extents; the inner sharp box is
    /// shrunk by the fillet radius.
    fn rounded_inner(half: Vec3, radius: f64) -> Vec3 {
        half - radius * vec3(1.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AnalyticShape::Plane { normal, .. } => (normal.norm() - 1.0).abs() < 1e-9,
            AnalyticShape::Sphere { r } | AnalyticShape::Cylinder { r } => r > 0.0,
            AnalyticShape::Torus { big_r, small_r } => small_r > 0.0 && big_r > small_r,
            AnalyticShape::Box { half } => half.min_component() > 0.0,
            AnalyticShape::RoundedBox { half, radius } => {
                radius > 0.0 && (half.min_component() - radius) > 0.0
            }
            AnalyticShape::Quadratic { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate shape parameters: {self:?}")))
        }
    }

    pub fn sdf(&self, x: Vec3) -> f64 {
        match *self {
            AnalyticShape::Plane { normal, offset } => normal.dot(x) - offset,
            AnalyticShape::Sphere { r } => x.norm() - r,
            AnalyticShape::Cylinder { r } => (x.x * x.x + x.y * x.y).sqrt() - r,
            AnalyticShape::Torus { big_r, small_r } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let a = rho - big_r;
                (a * a + x.z * x.z).sqrt() - small_r
            }
            AnalyticShape::Box { half } => {
                let reg = box_region(x, half);
                reg.dist + reg.q.max_component().min(0.0)
            }
            AnalyticShape::RoundedBox { half, radius } => {
                let inner = AnalyticShape::Box {
                    half: Self::rounded_inner(half, radius),
                };
                inner.sdf(x) - radius
            }
            AnalyticShape::Quadratic { a, b, c } => a.quad_form(x, x) + b.dot(x) + c,
        }
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        match *self {
            AnalyticShape::Plane { normal, .. } => normal,
            AnalyticShape::Sphere { .. } => x / x.norm(),
            AnalyticShape::Cylinder { .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                vec3(x.x / rho, x.y / rho, 0.0)
            }
            AnalyticShape::Torus { big_r, .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let a = rho - big_r;
                let d = (a * a + x.z * x.z).sqrt();
                vec3(a / d * x.x / rho, a / d * x.y / rho, x.z / d)
            }
            AnalyticShape::Box { half } => {
                let reg = box_region(x, half);
                if reg.active == 0 {
                    // Inside: distance to the closest face plane.
                    if reg.q.x >= reg.q.y && reg.q.x >= reg.q.z {
                        x.x.signum() * Vec3::X
                    } else if reg.q.y >= reg.q.z {
                        x.y.signum() * Vec3::Y
                    } else {
                        x.z.signum() * Vec3::Z
                    }
                } else {
                    vec3(
                        reg.p.x / reg.dist * x.x.signum(),
                        reg.p.y / reg.dist * x.y.signum(),
                        reg.p.z / reg.dist * x.z.signum(),
                    )
                }
            }
            AnalyticShape::RoundedBox { half, radius } => AnalyticShape::Box {
                half: Self::rounded_inner(half, radius),
            }
            .gradient(x),
            AnalyticShape::Quadratic { a, b, .. } => 2.0 * a.mul_vec(x) + b,
        }
    }

    pub fn hessian(&self, x: Vec3) -> Mat3 {
        match *self {
            AnalyticShape::Plane { .. } => Mat3::ZERO,
            AnalyticShape::Sphere { .. } => {
                let d = x.norm();
                let n = x / d;
                Mat3::identity().add(&Mat3::outer(n, n).scale(-1.0)).scale(1.0 / d)
            }
            AnalyticShape::Cylinder { .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let r2 = vec3(x.x / rho, x.y / rho, 0.0);
                Mat3::diag(1.0, 1.0, 0.0)
                    .add(&Mat3::outer(r2, r2).scale(-1.0))
                    .scale(1.0 / rho)
            }
            AnalyticShape::Torus { big_r, .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let a = rho - big_r;
                let d = (a * a + x.z * x.z).sqrt();
                let rho_hat = vec3(x.x / rho, x.y / rho, 0.0);
                let phi_hat = vec3(-x.y / rho, x.x / rho, 0.0);
                let z_hat = Vec3::Z;
                // 2-D distance-to-point Hessian in the (ρ, z) half-plane,
                // plus the cylindrical-coordinate term along φ̂.
                let f_r = a / d;
                let f_rr = x.z * x.z / (d * d * d);
                let f_zz = a * a / (d * d * d);
                let f_rz = -a * x.z / (d * d * d);
                Mat3::outer(rho_hat, rho_hat)
                    .scale(f_rr)
                    .add(&Mat3::outer(z_hat, z_hat).scale(f_zz))
                    .add(&Mat3::outer(rho_hat, z_hat).add(&Mat3::outer(z_hat, rho_hat)).scale(f_rz))
                    .add(&Mat3::outer(phi_hat, phi_hat).scale(f_r / rho))
            }
            AnalyticShape::Box { half } => {
                let reg = box_region(x, half);
                if reg.active == 0 || reg.dist == 0.0 {
                    return Mat3::ZERO;
                }
                // In the outside region f = ‖p(x)‖ with p_i = |x_i| − h_i on
                // active axes: the usual norm Hessian, sign-adjusted.
                let d = reg.dist;
                let s = vec3(x.x.signum(), x.y.signum(), x.z.signum());
                let mut rows = [[0.0; 3]; 3];
                let p = reg.p.to_array();
                let sa = s.to_array();
                for i in 0..3 {
                    if p[i] == 0.0 {
                        continue;
                    }
                    for j in 0..3 {
                        if p[j] == 0.0 {
                            continue;
                        }
                        let delta = if i == j { d * d } else { 0.0 };
                        rows[i][j] = sa[i] * sa[j] * (delta - p[i] * p[j]) / (d * d * d);
                    }
                }
                Mat3 { rows }
            }
            AnalyticShape::RoundedBox { half, radius } => AnalyticShape::Box {
                half: Self::rounded_inner(half, radius),
            }
            .hessian(x),
            AnalyticShape::Quadratic { a, .. } => a.scale(2.0),
        }
    }

    /// Scale below which the field's Hessian becomes unreliable (distance to
    /// the nearest medial structure from the surface). Tests sample shell
    /// offsets well inside this.
    pub fn feature_radius(&self) -> f64 {
        match *self {
            AnalyticShape::Plane { .. } | AnalyticShape::Quadratic { .. } => f64::INFINITY,
            AnalyticShape::Sphere { r } | AnalyticShape::Cylinder { r } => r,
            AnalyticShape::Torus { big_r, small_r } => small_r.min(big_r - small_r),
            AnalyticShape::Box { half } => half.min_component(),
            AnalyticShape::RoundedBox { radius, .. } => radius,
        }
    }

    /// True signed distance field (gradient is unit a.e.)? Quadratics are
    /// the one exception; the medial-axis gradient-norm guard does not apply
    /// to them.
    fn is_distance_field(&self) -> bool {
        !matches!(self, AnalyticShape::Quadratic { .. })
    }

    /// Exact on-surface points, uniform in area (exception: the plane patch
    /// and cylinder are uniform over their [−1,1] extent in the unbounded
    /// direction).
    pub fn surface_samples<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec3>> {
        self.validate()?;
        let mut pts = Vec::with_capacity(n);
        match *self {
            AnalyticShape::Plane { normal, offset } => {
                let (u, v) = base_tangent_pair(normal);
                for _ in 0..n {
                    let a = rng.gen_range(-1.0..1.0);
                    let b = rng.gen_range(-1.0..1.0);
                    pts.push(offset * normal + a * u + b * v);
                }
            }
            AnalyticShape::Sphere { r } => {
                for _ in 0..n {
                    pts.push(r * unit_direction(rng));
                }
            }
            AnalyticShape::Cylinder { r } => {
                for _ in 0..n {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    pts.push(vec3(r * phi.cos(), r * phi.sin(), rng.gen_range(-1.0..1.0)));
                }
            }
            AnalyticShape::Torus { big_r, small_r } => {
                for _ in 0..n {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    // Rejection on the tube angle: area element carries a
                    // (R + r·cosθ) factor.
                    let theta = loop {
                        let t = rng.gen_range(0.0..std::f64::consts::TAU);
                        let w = (big_r + small_r * t.cos()) / (big_r + small_r);
                        if rng.gen_range(0.0..1.0) < w {
                            break t;
                        }
                    };
                    let ring = big_r + small_r * theta.cos();
                    pts.push(vec3(
                        ring * phi.cos(),
                        ring * phi.sin(),
                        small_r * theta.sin(),
                    ));
                }
            }
            AnalyticShape::Box { half } => {
                let h = half.to_array();
                let weights = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = weights.iter().sum();
                for _ in 0..n {
                    let mut pick = rng.gen_range(0.0..total);
                    let mut axis = 0;
                    for (i, w) in weights.iter().enumerate() {
                        if pick < *w {
                            axis = i;
                            break;
                        }
                        pick -= w;
                    }
                    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let mut p = [0.0; 3];
                    p[axis] = side * h[axis];
                    let (j, k) = ((axis + 1) % 3, (axis + 2) % 3);
                    p[j] = rng.gen_range(-h[j]..h[j]);
                    p[k] = rng.gen_range(-h[k]..h[k]);
                    pts.push(vec3(p[0], p[1], p[2]));
                }
            }
            AnalyticShape::RoundedBox { half, radius } => {
                sample_rounded_box(&mut pts, n, Self::rounded_inner(half, radius), radius, rng);
            }
            AnalyticShape::Quadratic { .. } => {
                return Err(Error::InvalidConfig(
                    "quadratic fields have no surface sampler".into(),
                ));
            }
        }
        Ok(pts)
    }
}

fn unit_direction<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    vec3(s * phi.cos(), s * phi.sin(), z)
}

/// Area-weighted sampling of the rounded-box surface: 6 flat faces, 12
/// quarter-cylinder fillets, 8 eighth-sphere corners.
fn sample_rounded_box<R: Rng>(pts: &mut Vec<Vec3>, n: usize, inner: Vec3, rho: f64, rng: &mut R) {
    use std::f64::consts::PI;
    let h = inner.to_array();
    // Both faces per axis; all four fillets per axis; all corners together.
    let faces = [8.0 * h[1] * h[2], 8.0 * h[0] * h[2], 8.0 * h[0] * h[1]];
    let edges = [
        4.0 * PI * rho * h[0],
        4.0 * PI * rho * h[1],
        4.0 * PI * rho * h[2],
    ];
    let corners = 4.0 * PI * rho * rho;
    let total: f64 = faces.iter().sum::<f64>() + edges.iter().sum::<f64>() + corners;
    let sign = |rng: &mut R| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };

    for _ in 0..n {
        let mut pick = rng.gen_range(0.0..total);
        let mut done = false;
        for axis in 0..3 {
            if pick < faces[axis] {
                let mut p = [0.0; 3];
                p[axis] = sign(rng) * (h[axis] + rho);
                let (j, k) = ((axis + 1) % 3, (axis + 2) % 3);
                p[j] = rng.gen_range(-h[j]..h[j]);
                p[k] = rng.gen_range(-h[k]..h[k]);
                pts.push(vec3(p[0], p[1], p[2]));
                done = true;
                break;
            }
            pick -= faces[axis];
        }
        if done {
            continue;
        }
        for axis in 0..3 {
            if pick < edges[axis] {
                // Fillet running along `axis`; the arc lives in the (j,k)
                // quadrant selected by two signs.
                let (j, k) = ((axis + 1) % 3, (axis + 2) % 3);
                let alpha = rng.gen_range(0.0..PI / 2.0);
                let mut p = [0.0; 3];
                p[axis] = rng.gen_range(-h[axis]..h[axis]);
                p[j] = sign(rng) * (h[j] + rho * alpha.cos());
                p[k] = sign(rng) * (h[k] + rho * alpha.sin());
                pts.push(vec3(p[0], p[1], p[2]));
                done = true;
                break;
            }
            pick -= edges[axis];
        }
        if done {
            continue;
        }
        let d = unit_direction(rng).abs();
        let corner = vec3(sign(rng) * h[0], sign(rng) * h[1], sign(rng) * h[2]);
        let off = rho * vec3(
            corner.x.signum() * d.x,
            corner.y.signum() * d.y,
            corner.z.signum() * d.z,
        );
        pts.push(corner + off);
    }
}

/// A closed-form field recorded as constants on a tape, so the same
/// stencil/loss code paths that run on the network can be exercised against
/// exact ground truth.
pub struct OracleField<'t> {
    tape: &'t crate::tape::Tape,
    shape: AnalyticShape,
    evals: std::cell::Cell<u64>,
}

impl<'t> OracleField<'t> {
    pub fn new(tape: &'t crate::tape::Tape, shape: AnalyticShape) -> Self {
        OracleField {
            tape,
            shape,
            evals: std::cell::Cell::new(0),
        }
    }
}

impl<'t> crate::tape::FieldEval<'t> for OracleField<'t> {
    fn eval(&self, x: Vec3) -> Result<crate::tape::Var<'t>> {
        self.evals.set(self.evals.get() + 1);
        Ok(self.tape.constant(self.shape.sdf(x)))
    }

    fn eval_with_gradient(&self, x: Vec3) -> Result<crate::tape::Jet<'t>> {
        self.evals.set(self.evals.get() + 1);
        let g = self.shape.gradient(x);
        Ok(crate::tape::Jet {
            v: self.tape.constant(self.shape.sdf(x)),
            dx: self.tape.constant(g.x),
            dy: self.tape.constant(g.y),
            dz: self.tape.constant(g.z),
        })
    }

    fn eval_count(&self) -> u64 {
        self.evals.get()
    }
}

/// The tangent-plane projections of a Hessian: (uᵀHu, uᵀHv, vᵀHv). These are
/// exactly what the three difference stencils estimate.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedHessian {
    pub uu: f64,
    pub uv: f64,
    pub vv: f64,
}

pub fn project_hessian(h: &Mat3, frame: &TangentFrame) -> ProjectedHessian {
    ProjectedHessian {
        uu: h.quad_form(frame.u, frame.u),
        uv: h.quad_form(frame.u, frame.v),
        vv: h.quad_form(frame.v, frame.v),
    }
}

/// Exact shape-operator entries at x₀ in the given frame, guarded against
/// medial-axis contamination (for distance fields, ‖∇f‖ far from 1 means the
/// point is not in the smooth near-surface region).
pub fn analytic_shape_operator(
    shape: &AnalyticShape,
    x0: Vec3,
    frame: &TangentFrame,
) -> Result<ProjectedHessian> {
    check_gradient(shape, x0)?;
    Ok(project_hessian(&shape.hessian(x0), frame))
}

fn check_gradient(shape: &AnalyticShape, x0: Vec3) -> Result<Vec3> {
    let g = shape.gradient(x0);
    let norm = g.norm();
    if !norm.is_finite() || (shape.is_distance_field() && (norm - 1.0).abs() > MEDIAL_GRAD_TOL) {
        return Err(Error::MedialAxis { grad_norm: norm });
    }
    if norm < 1e-12 {
        return Err(Error::DegenerateGradient {
            norm,
            eps: 1e-12,
        });
    }
    Ok(g)
}

/// Gaussian curvature of the level set through x₀, from per-shape geometric
/// closed forms (independent of the bordered-determinant route).
pub fn analytic_gaussian_curvature(shape: &AnalyticShape, x0: Vec3) -> Result<f64> {
    let g = check_gradient(shape, x0)?;
    Ok(match *shape {
        AnalyticShape::Plane { .. } | AnalyticShape::Cylinder { .. } => 0.0,
        AnalyticShape::Sphere { .. } => 1.0 / x0.norm_sq(),
        AnalyticShape::Torus { big_r, .. } => {
            // K = cosθ / (d·(R + d·cosθ)) for the offset torus with tube
            // radius d; with cosθ = (ρ−R)/d this collapses to (ρ−R)/(d²ρ).
            let rho = (x0.x * x0.x + x0.y * x0.y).sqrt();
            let a = rho - big_r;
            let d2 = a * a + x0.z * x0.z;
            a / (d2 * rho)
        }
        AnalyticShape::Box { half } => {
            let reg = box_region(x0, half);
            // Level sets: planes inside and over faces/edges (offset boxes
            // and cylinders are developable), spheres around corners.
            if reg.active == 3 {
                1.0 / (reg.dist * reg.dist)
            } else {
                0.0
            }
        }
        AnalyticShape::RoundedBox { half, radius } => {
            return analytic_gaussian_curvature(
                &AnalyticShape::Box {
                    half: AnalyticShape::rounded_inner(half, radius),
                },
                x0,
            );
        }
        AnalyticShape::Quadratic { .. } => {
            // General implicit-surface formula det(S) with S = P H P / ‖g‖
            // restricted to the tangent plane; the in-plane determinant is
            // frame-independent, so the deterministic completion suffices.
            let n = g / g.norm();
            let (u, v) = base_tangent_pair(n);
            let frame = TangentFrame { n, u, v };
            let p = project_hessian(&shape.hessian(x0), &frame);
            (p.uu * p.vv - p.uv * p.uv) / g.norm_sq()
        }
    })
}

/// Gaussian curvature via the bordered-Hessian determinant,
/// K = −det([[H, ∇f],[∇fᵀ, 0]]) / ‖∇f‖⁴ — the identity the curvature
/// regularizer is built on.
pub fn bordered_hessian_curvature(shape: &AnalyticShape, x0: Vec3) -> Result<f64> {
    let g = check_gradient(shape, x0)?;
    let h = shape.hessian(x0);
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&h.rows[i]);
    }
    let ga = g.to_array();
    for i in 0..3 {
        m[i][3] = ga[i];
        m[3][i] = ga[i];
    }
    let n4 = g.norm_sq() * g.norm_sq();
    Ok(-det4(&m) / n4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::complete_frame;
    use crate::rng::derive_rng;

    /// Shapes with hand-picked smooth test points near their surfaces. Box
    /// points sit inside single regions (face / edge / corner / interior)
    /// with margin, since derivatives jump at region boundaries.
    fn shape_points() -> Vec<(AnalyticShape, Vec<Vec3>)> {
        let quad_a = Mat3 {
            rows: [[0.8, 0.2, -0.1], [0.2, -0.5, 0.3], [-0.1, 0.3, 1.1]],
        };
        vec![
            (
                AnalyticShape::Plane {
                    normal: vec3(0.0, 0.0, 1.0),
                    offset: 0.2,
                },
                vec![vec3(0.3, -0.4, 0.2), vec3(0.0, 0.0, 0.5)],
            ),
            (
                AnalyticShape::Sphere { r: 0.5 },
                vec![vec3(0.5, 0.0, 0.0), vec3(0.3, 0.3, 0.3), vec3(-0.2, 0.45, 0.1)],
            ),
            (
                AnalyticShape::Cylinder { r: 0.5 },
                vec![vec3(0.5, 0.0, 0.3), vec3(-0.35, 0.35, -0.6)],
            ),
            (
                AnalyticShape::Torus {
                    big_r: 1.0,
                    small_r: 0.25,
                },
                vec![vec3(1.25, 0.0, 0.0), vec3(0.0, 0.8, 0.1), vec3(0.7, 0.7, 0.2)],
            ),
            (
                AnalyticShape::Box {
                    half: vec3(0.5, 0.4, 0.3),
                },
                vec![
                    // Face region, edge region, corner region, interior.
                    vec3(0.7, 0.1, 0.0),
                    vec3(0.65, 0.55, 0.05),
                    vec3(0.7, 0.6, 0.5),
                    vec3(0.2, 0.1, 0.05),
                ],
            ),
            (
                AnalyticShape::RoundedBox {
                    half: vec3(0.5, 0.5, 0.5),
                    radius: 0.1,
                },
                vec![vec3(0.55, 0.0, 0.0), vec3(0.48, 0.47, 0.0), vec3(0.47, 0.46, 0.48)],
            ),
            (
                AnalyticShape::Quadratic {
                    a: quad_a,
                    b: vec3(0.1, -0.2, 0.05),
                    c: -0.3,
                },
                vec![vec3(0.4, 0.1, -0.2), vec3(-0.3, 0.5, 0.2)],
            ),
        ]
    }

    #[test]
    fn gradient_matches_fd_of_sdf() {
        let h = 1e-6;
        for (shape, pts) in shape_points() {
            for x in pts {
                let g = shape.gradient(x);
                for c in 0..3 {
                    let mut e = [0.0; 3];
                    e[c] = h;
                    let step = vec3(e[0], e[1], e[2]);
                    let fd = (shape.sdf(x + step) - shape.sdf(x - step)) / (2.0 * h);
                    let ga = g.to_array()[c];
                    assert!(
                        (fd - ga).abs() < 1e-7 * ga.abs().max(1.0),
                        "{shape:?} at {x:?} axis {c}: fd {fd} vs {ga}"
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_matches_fd_of_gradient() {
        let h = 1e-5;
        for (shape, pts) in shape_points() {
            for x in pts {
                let hess = shape.hessian(x);
                for c in 0..3 {
                    let mut e = [0.0; 3];
                    e[c] = h;
                    let step = vec3(e[0], e[1], e[2]);
                    let fd = (shape.gradient(x + step) - shape.gradient(x - step)) / (2.0 * h);
                    for r in 0..3 {
                        let ha = hess.rows[r][c];
                        assert!(
                            (fd.to_array()[r] - ha).abs() < 1e-5 * ha.abs().max(1.0),
                            "{shape:?} at {x:?} entry ({r},{c}): fd {} vs {ha}",
                            fd.to_array()[r]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hessians_are_symmetric() {
        for (shape, pts) in shape_points() {
            for x in pts {
                let h = shape.hessian(x);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!(
                            (h.rows[i][j] - h.rows[j][i]).abs() < 1e-14,
                            "{shape:?} at {x:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_shape_operator_is_two_over_r() {
        let shape = AnalyticShape::Sphere { r: 0.5 };
        let mut rng = derive_rng(0, "oracle", 0);
        let x = 0.5 * unit_direction(&mut rng);
        let frame = complete_frame(shape.gradient(x), &mut rng).unwrap();
        let p = analytic_shape_operator(&shape, x, &frame).unwrap();
        assert!((p.uu - 2.0).abs() < 1e-12);
        assert!((p.vv - 2.0).abs() < 1e-12);
        assert!(p.uv.abs() < 1e-12);
    }

    #[test]
    fn cylinder_shape_operator_in_aligned_frame() {
        let shape = AnalyticShape::Cylinder { r: 0.5 };
        let x = vec3(0.5, 0.0, 0.2);
        let frame = TangentFrame {
            n: vec3(1.0, 0.0, 0.0),
            u: vec3(0.0, 0.0, 1.0),
            v: vec3(0.0, -1.0, 0.0),
        };
        let p = analytic_shape_operator(&shape, x, &frame).unwrap();
        assert!(p.uu.abs() < 1e-12, "axis direction is flat");
        assert!((p.vv - 2.0).abs() < 1e-12, "hoop direction curves at 1/r");
        assert!(p.uv.abs() < 1e-12);
    }

    #[test]
    fn plane_shape_operator_is_zero() {
        let shape = AnalyticShape::Plane {
            normal: vec3(0.0, 0.0, 1.0),
            offset: 0.0,
        };
        let mut rng = derive_rng(1, "oracle", 0);
        let frame = complete_frame(shape.gradient(Vec3::ZERO), &mut rng).unwrap();
        let p = analytic_shape_operator(&shape, vec3(0.2, 0.1, 0.0), &frame).unwrap();
        assert_eq!((p.uu, p.uv, p.vv), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gaussian_curvature_closed_forms() {
        let sphere = AnalyticShape::Sphere { r: 0.5 };
        let k = analytic_gaussian_curvature(&sphere, vec3(0.0, 0.5, 0.0)).unwrap();
        assert!((k - 4.0).abs() < 1e-12);

        let cyl = AnalyticShape::Cylinder { r: 0.5 };
        assert_eq!(analytic_gaussian_curvature(&cyl, vec3(0.5, 0.0, 1.0)).unwrap(), 0.0);

        let torus = AnalyticShape::Torus {
            big_r: 1.0,
            small_r: 0.25,
        };
        let k = analytic_gaussian_curvature(&torus, vec3(1.25, 0.0, 0.0)).unwrap();
        assert!((k - 3.2).abs() < 1e-12, "outer equator K {k}");
        // Inner equator: negative curvature, cosθ = −1.
        let k_in = analytic_gaussian_curvature(&torus, vec3(0.75, 0.0, 0.0)).unwrap();
        assert!((k_in - (-1.0 / (0.25 * 0.75))).abs() < 1e-9, "inner K {k_in}");
    }

    #[test]
    fn bordered_hessian_agrees_with_closed_forms_on_surface() {
        let mut rng = derive_rng(2, "oracle", 0);
        for (shape, _) in shape_points() {
            if matches!(shape, AnalyticShape::Quadratic { .. }) {
                continue;
            }
            let samples = shape.surface_samples(200, &mut rng).unwrap();
            for x in samples {
                let closed = match analytic_gaussian_curvature(&shape, x) {
                    Ok(k) => k,
                    // Samples landing exactly on a box edge/corner have no
                    // classical curvature; skip.
                    Err(_) => continue,
                };
                let bordered = bordered_hessian_curvature(&shape, x).unwrap();
                assert!(
                    (closed - bordered).abs() < 1e-9 * closed.abs().max(1.0),
                    "{shape:?} at {x:?}: closed {closed} bordered {bordered}"
                );
            }
        }
    }

    #[test]
    fn bordered_hessian_agrees_for_quadratics() {
        let (shape, pts) = shape_points().pop().unwrap();
        assert!(matches!(shape, AnalyticShape::Quadratic { .. }));
        for x in pts {
            let closed = analytic_gaussian_curvature(&shape, x).unwrap();
            let bordered = bordered_hessian_curvature(&shape, x).unwrap();
            assert!(
                (closed - bordered).abs() < 1e-9 * closed.abs().max(1.0),
                "at {x:?}: {closed} vs {bordered}"
            );
        }
    }

    #[test]
    fn medial_axis_points_are_rejected() {
        let sphere = AnalyticShape::Sphere { r: 0.5 };
        assert!(analytic_gaussian_curvature(&sphere, Vec3::ZERO).is_err());
        let torus = AnalyticShape::Torus {
            big_r: 1.0,
            small_r: 0.25,
        };
        // On the symmetry axis the gradient is undefined.
        assert!(analytic_gaussian_curvature(&torus, vec3(0.0, 0.0, 0.5)).is_err());
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        let mut rng = derive_rng(3, "oracle", 0);
        for (shape, _) in shape_points() {
            if matches!(shape, AnalyticShape::Quadratic { .. }) {
                assert!(shape.surface_samples(10, &mut rng).is_err());
                continue;
            }
            for x in shape.surface_samples(2000, &mut rng).unwrap() {
                let d = shape.sdf(x).abs();
                assert!(d < 1e-12, "{shape:?}: sample off-surface by {d}");
            }
        }
    }

    #[test]
    fn rounded_box_sampling_covers_all_regions() {
        let shape = AnalyticShape::RoundedBox {
            half: vec3(0.5, 0.5, 0.5),
            radius: 0.1,
        };
        let inner = 0.4;
        let mut rng = derive_rng(4, "oracle", 0);
        let samples = shape.surface_samples(20_000, &mut rng).unwrap();
        let (mut faces, mut edges, mut corners) = (0usize, 0usize, 0usize);
        for p in &samples {
            let out = (p.abs() - vec3(inner, inner, inner)).to_array();
            match out.iter().filter(|&&v| v > 1e-9).count() {
                0 | 1 => faces += 1,
                2 => edges += 1,
                _ => corners += 1,
            }
        }
        // Analytic area fractions for half 0.5 / fillet 0.1:
        // faces 8·3·0.16 = 3.84, edges 12·(π/2)·0.1·0.8 ≈ 1.508,
        // corners 4π·0.01 ≈ 0.1257; total ≈ 5.474.
        let total = samples.len() as f64;
        assert!((faces as f64 / total - 0.7016).abs() < 0.02, "face frac {}", faces as f64 / total);
        assert!((edges as f64 / total - 0.2755).abs() < 0.02, "edge frac {}", edges as f64 / total);
        assert!((corners as f64 / total - 0.0230).abs() < 0.01, "corner frac {}", corners as f64 / total);
    }

    #[test]
    fn feature_radii_are_positive() {
        for (shape, _) in shape_points() {
            assert!(shape.feature_radius() > 0.0, "{shape:?}");
        }
    }

    #[test]
    fn validate_catches_degenerate_parameters() {
        assert!(AnalyticShape::Sphere { r: 0.0 }.validate().is_err());
        assert!(AnalyticShape::Torus { big_r: 0.2, small_r: 0.25 }.validate().is_err());
        assert!(AnalyticShape::RoundedBox {
            half: vec3(0.1, 0.5, 0.5),
            radius: 0.1
        }
        .validate()
        .is_err());
        assert!(AnalyticShape::Sphere { r: 0.5 }.validate().is_ok());
    }
}
