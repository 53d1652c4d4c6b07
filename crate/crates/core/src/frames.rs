//! Random orthonormal tangent frames and the 9-point stencil layout.
//!
//! At a shell point the field gradient gives the normal n; the curvature
//! stencils need an orthonormal pair (u, v) spanning the tangent plane. Any
//! single frame is biased, but the expectation over a uniformly random
//! in-plane angle recovers the rotation-invariant curvature quantities, so
//! frames are cheap to draw and meant to be redrawn every iteration.
//!
//! Construction: a Householder reflection takes ẑ to ±n (sign chosen by
//! `copysign` so the reflection axis never degenerates), its other two
//! columns span the tangent plane, and a uniform rotation angle θ spins them
//! in-plane. No branches, exact orthonormality up to rounding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Gradients shorter than this give an unreliable normal; the caller skips
/// the point for that iteration.
pub const EPS_GRAD: f64 = 1e-6;

/// Right-handed orthonormal triad with `n` the unit surface normal:
/// u × v = n.
#[derive(Clone, Copy, Debug)]
pub struct TangentFrame {
    pub n: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

/// The 9 evaluation points of the curvature stencils around one shell point.
///
/// Layout (fixed, relied on by the difference formulas):
/// `axis_points` = [x₀+hu, x₀−hu, x₀+hv, x₀−hv];
/// `corner_points` = [x₀+hu+hv, x₀+hu−hv, x₀−hu+hv, x₀−hu−hv].
#[derive(Clone, Copy, Debug)]
pub struct StencilOffsets {
    pub center: Vec3,
    pub axis_points: [Vec3; 4],
    pub corner_points: [Vec3; 4],
    pub h: f64,
}

impl StencilOffsets {
    /// All 9 points, center first, in the documented order.
    pub fn points(&self) -> [Vec3; 9] {
        [
            self.center,
            self.axis_points[0],
            self.axis_points[1],
            self.axis_points[2],
            self.axis_points[3],
            self.corner_points[0],
            self.corner_points[1],
            self.corner_points[2],
            self.corner_points[3],
        ]
    }
}

/// Deterministic right-handed tangent pair for a unit normal: the θ = 0
/// reference that [`complete_frame`] spins in-plane.
///
/// A Householder reflection through w = s·n + ẑ maps ẑ to −s·n, where
/// s = ±1 matches the sign of n_z so ‖w‖² = 2(1+|n_z|) never vanishes.
/// Its images of x̂ and ŷ are an orthonormal tangent pair.
pub fn base_tangent_pair(n: Vec3) -> (Vec3, Vec3) {
    let s = 1.0f64.copysign(n.z);
    let c = 1.0 / (1.0 + s * n.z);
    let u0 = Vec3 {
        x: 1.0 - c * n.x * n.x,
        y: -c * n.x * n.y,
        z: -s * n.x,
    };
    // The reflection is orientation-reversing; scaling its ŷ image by s
    // restores u × v = n for both hemispheres. (In the z-component the two
    // s factors cancel.)
    let v0 = Vec3 {
        x: -c * n.x * n.y * s,
        y: (1.0 - c * n.y * n.y) * s,
        z: -n.y,
    };
    (u0, v0)
}

/// Complete the gradient to a random orthonormal frame. The in-plane angle
/// is uniform in [0, 2π) from `rng`; everything else is deterministic in the
/// gradient.
pub fn complete_frame<R: Rng>(gradient: Vec3, rng: &mut R) -> Result<TangentFrame> {
    let n = gradient.normalized(EPS_GRAD).ok_or(Error::DegenerateGradient {
        norm: gradient.norm(),
        eps: EPS_GRAD,
    })?;
    let (u0, v0) = base_tangent_pair(n);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = theta.sin_cos();
    Ok(TangentFrame {
        n,
        u: cos * u0 + sin * v0,
        v: -sin * u0 + cos * v0,
    })
}

/// Lay out the 9 stencil points around `x0` in the (u, v) plane.
pub fn make_stencil(x0: Vec3, frame: &TangentFrame, h: f64) -> Result<StencilOffsets> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "stencil step must be positive and finite, got {h}"
        )));
    }
    let hu = h * frame.u;
    let hv = h * frame.v;
    Ok(StencilOffsets {
        center: x0,
        axis_points: [x0 + hu, x0 - hu, x0 + hv, x0 - hv],
        corner_points: [x0 + hu + hv, x0 + hu - hv, x0 - hu + hv, x0 - hu - hv],
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::vec3::vec3;
    use rand::Rng;

    const ORTHO_TOL: f64 = 1e-9;

    fn assert_frame_ok(f: &TangentFrame) {
        for (name, w) in [("n", f.n), ("u", f.u), ("v", f.v)] {
            assert!((w.norm() - 1.0).abs() < ORTHO_TOL, "{name} not unit: {w:?}");
        }
        assert!(f.n.dot(f.u).abs() < ORTHO_TOL);
        assert!(f.n.dot(f.v).abs() < ORTHO_TOL);
        assert!(f.u.dot(f.v).abs() < ORTHO_TOL);
        let det = f.u.cross(f.v).dot(f.n);
        assert!((det - 1.0).abs() < ORTHO_TOL, "det {det}");
    }

    #[test]
    fn axis_aligned_gradient() {
        let mut rng = derive_rng(0, "frames", 0);
        let f = complete_frame(vec3(0.0, 0.0, 2.0), &mut rng).unwrap();
        assert_eq!(f.n.to_array(), [0.0, 0.0, 1.0]);
        assert_frame_ok(&f);
        let down = complete_frame(vec3(0.0, 0.0, -0.5), &mut rng).unwrap();
        assert_eq!(down.n.to_array(), [0.0, 0.0, -1.0]);
        assert_frame_ok(&down);
    }

    #[test]
    fn frames_are_orthonormal_for_random_gradients() {
        let mut rng = derive_rng(1, "frames", 0);
        for _ in 0..2000 {
            let g = vec3(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            if g.norm() <= EPS_GRAD {
                continue;
            }
            let f = complete_frame(g, &mut rng).unwrap();
            assert_frame_ok(&f);
        }
    }

    #[test]
    fn near_zero_gradient_is_rejected() {
        let mut rng = derive_rng(2, "frames", 0);
        let err = complete_frame(vec3(1e-9, 0.0, 0.0), &mut rng).unwrap_err();
        assert!(matches!(err, Error::DegenerateGradient { .. }), "{err}");
    }

    #[test]
    fn in_plane_angle_is_uniform() {
        // Mean of u over many draws must vanish if θ is uniform.
        let g = vec3(0.3, -0.5, 0.8);
        let mut rng = derive_rng(3, "frames", 0);
        let mut mean = Vec3::ZERO;
        let n_draws = 10_000;
        for _ in 0..n_draws {
            mean += complete_frame(g, &mut rng).unwrap().u;
        }
        mean = mean / n_draws as f64;
        for comp in mean.to_array() {
            assert!(comp.abs() < 0.05, "u mean component {comp}");
        }
    }

    #[test]
    fn construction_is_rotation_equivariant_in_distribution() {
        // The distribution of u·w must match that of u'·(Rw) when both the
        // gradient and the probe vector are rotated by the same R.
        let g = vec3(1.0, 0.4, -0.2);
        let w = vec3(0.2, -0.7, 0.5);
        // R: quarter turn about z.
        let rot = |p: Vec3| vec3(-p.y, p.x, p.z);
        let sample = |grad: Vec3, probe: Vec3, seed: u64| -> (f64, f64) {
            let mut rng = derive_rng(seed, "equivariance", 0);
            let n = 20_000;
            let dots: Vec<f64> = (0..n)
                .map(|_| complete_frame(grad, &mut rng).unwrap().u.dot(probe))
                .collect();
            let mean = dots.iter().sum::<f64>() / n as f64;
            let var = dots.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        let (m1, s1) = sample(g, w, 4);
        let (m2, s2) = sample(rot(g), rot(w), 5);
        assert!((m1 - m2).abs() < 0.01, "means {m1} vs {m2}");
        assert!((s1 - s2).abs() < 0.01, "stds {s1} vs {s2}");
    }

    #[test]
    fn stencil_layout_for_canonical_frame() {
        let frame = TangentFrame {
            n: vec3(0.0, 0.0, 1.0),
            u: vec3(1.0, 0.0, 0.0),
            v: vec3(0.0, 1.0, 0.0),
        };
        let st = make_stencil(Vec3::ZERO, &frame, 0.01).unwrap();
        assert_eq!(st.axis_points[0].to_array(), [0.01, 0.0, 0.0]);
        assert_eq!(st.axis_points[1].to_array(), [-0.01, 0.0, 0.0]);
        assert_eq!(st.axis_points[2].to_array(), [0.0, 0.01, 0.0]);
        assert_eq!(st.axis_points[3].to_array(), [0.0, -0.01, 0.0]);
        assert_eq!(st.corner_points[0].to_array(), [0.01, 0.01, 0.0]);
        assert_eq!(st.corner_points[3].to_array(), [-0.01, -0.01, 0.0]);
    }

    #[test]
    fn stencil_rejects_bad_step() {
        let frame = TangentFrame {
            n: vec3(0.0, 0.0, 1.0),
            u: vec3(1.0, 0.0, 0.0),
            v: vec3(0.0, 1.0, 0.0),
        };
        assert!(make_stencil(Vec3::ZERO, &frame, 0.0).is_err());
        assert!(make_stencil(Vec3::ZERO, &frame, -0.01).is_err());
        assert!(make_stencil(Vec3::ZERO, &frame, f64::NAN).is_err());
    }

    #[test]
    fn stencil_points_are_coplanar_distinct_and_parallelogram_consistent() {
        let mut rng = derive_rng(6, "frames", 0);
        for _ in 0..200 {
            let g = vec3(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            if g.norm() < 0.1 {
                continue;
            }
            let x0 = vec3(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let h = 0.02;
            let frame = complete_frame(g, &mut rng).unwrap();
            let st = make_stencil(x0, &frame, h).unwrap();
            let pts = st.points();

            for p in &pts {
                let d = (*p - x0).dot(frame.n).abs();
                assert!(d < 1e-12, "point off the tangent plane by {d}");
                for coord in p.to_array() {
                    assert!(coord.abs() <= 1.0 + 2.0 * h, "left expanded domain: {coord}");
                }
            }
            for i in 0..9 {
                for j in i + 1..9 {
                    assert!((pts[i] - pts[j]).norm() > h / 2.0, "points {i} and {j} coincide");
                }
            }
            // corner(+,+) = axis(+u) + axis(+v) − center, and cyclically.
            let para = |a: Vec3, b: Vec3, corner: Vec3| {
                let recon = a + b - x0;
                assert!((recon - corner).norm() < 1e-12);
            };
            para(st.axis_points[0], st.axis_points[2], st.corner_points[0]);
            para(st.axis_points[0], st.axis_points[3], st.corner_points[1]);
            para(st.axis_points[1], st.axis_points[2], st.corner_points[2]);
            para(st.axis_points[1], st.axis_points[3], st.corner_points[3]);
        }
    }
}
