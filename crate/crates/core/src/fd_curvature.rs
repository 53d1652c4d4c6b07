//! Curvature estimates from 9-point central-difference stencils.
//!
//! For a field f and a tangent frame (u, v) at x₀, the three second
//! derivatives that make up the projected shape operator are approximated by
//!
//! ```text
//! f_uu ≈ (f(x₀+hu) − 2f(x₀) + f(x₀−hu)) / h²
//! f_vv ≈ (f(x₀+hv) − 2f(x₀) + f(x₀−hv)) / h²
//! f_uv ≈ (f(x₀+hu+hv) − f(x₀+hu−hv) − f(x₀−hu+hv) + f(x₀−hu−hv)) / 4h²
//! ```
//!
//! each with O(h²) truncation error (leading term h²/12·∂⁴f), and exact on
//! quadratic fields. From them, the Gaussian-curvature estimate
//! K = (f_uu·f_vv − f_uv²)/‖∇f‖⁴ and the rank-deficiency surrogate
//! D = f_uu·f_vv − f_uv² are assembled as ordinary tape nodes: nine forward
//! evaluations, no second-order differentiation anywhere.
//!
//! The evaluator is a closure so the same code runs against the network
//! (training) or against closed-form fields (accuracy tests).

use crate::error::{Error, Result};
use crate::frames::StencilOffsets;
use crate::tape::Var;
use crate::vec3::Vec3;

/// Gradient norms at or below this are too unreliable to divide by; the
/// caller is expected to have skipped such points.
pub const EPS_GRAD_NORM: f64 = 1e-6;

/// The three projected second derivatives at one stencil, as tape nodes.
#[derive(Clone, Copy)]
pub struct SecondForm<'t> {
    pub fuu: Var<'t>,
    pub fvv: Var<'t>,
    pub fuv: Var<'t>,
    pub h: f64,
}

/// Build the three difference quotients, evaluating the field at all nine
/// stencil points (center first).
pub fn second_form<'t, F>(mut eval: F, stencil: &StencilOffsets) -> Result<SecondForm<'t>>
where
    F: FnMut(Vec3) -> Result<Var<'t>>,
{
    let center = eval(stencil.center)?;
    second_form_with_center(eval, center, stencil)
}

/// Same, but reuse an already-evaluated center node (the shell-point value
/// usually exists already from the frame's gradient evaluation); eight
/// additional evaluations.
pub fn second_form_with_center<'t, F>(
    mut eval: F,
    center: Var<'t>,
    stencil: &StencilOffsets,
) -> Result<SecondForm<'t>>
where
    F: FnMut(Vec3) -> Result<Var<'t>>,
{
    let [pu, mu, pv, mv] = stencil.axis_points;
    let [pp, pm, mp, mm] = stencil.corner_points;
    let (f_pu, f_mu) = (eval(pu)?, eval(mu)?);
    let (f_pv, f_mv) = (eval(pv)?, eval(mv)?);
    let (f_pp, f_pm) = (eval(pp)?, eval(pm)?);
    let (f_mp, f_mm) = (eval(mp)?, eval(mm)?);

    let inv_h2 = 1.0 / (stencil.h * stencil.h);
    let twice_center = center.scale(2.0);
    let fuu = (f_pu + f_mu - twice_center).scale(inv_h2);
    let fvv = (f_pv + f_mv - twice_center).scale(inv_h2);
    let fuv = ((f_pp - f_pm) - (f_mp - f_mm)).scale(0.25 * inv_h2);
    Ok(SecondForm {
        fuu,
        fvv,
        fuv,
        h: stencil.h,
    })
}

/// In-plane determinant f_uu·f_vv − f_uv², the curvature numerator shared by
/// both regularizer variants.
pub fn projected_determinant_fd<'t>(form: &SecondForm<'t>) -> Var<'t> {
    form.fuu * form.fvv - form.fuv * form.fuv
}

/// Gaussian-curvature estimate. `grad_norm = None` selects the near-surface
/// simplification with the denominator literally 1 (the default);
/// `Some(node)` divides by ‖∇f‖⁴ for the full form.
pub fn gaussian_curvature_fd<'t>(
    form: &SecondForm<'t>,
    grad_norm: Option<Var<'t>>,
) -> Result<Var<'t>> {
    let det = projected_determinant_fd(form);
    match grad_norm {
        None => Ok(det),
        Some(g) => {
            if !(g.value() > EPS_GRAD_NORM) {
                return Err(Error::DegenerateGradient {
                    norm: g.value(),
                    eps: EPS_GRAD_NORM,
                });
            }
            let g2 = g * g;
            Ok(det / (g2 * g2))
        }
    }
}
