//! The training objective:
//!
//! ```text
//! L_total = λ_DM·L_DM + λ_DNM·L_DNM + λ_eik·L_eik + λ_fd·L_fd
//! ```
//!
//! * `L_DM` — mean |f| over the surface batch (anchor inputs to the zero set)
//! * `L_DNM` — mean exp(−α|f|) over uniform off-surface samples (push the
//!   field away from zero where there is no data)
//! * `L_eik` — mean (‖∇f‖−1)² over surface and off-surface points together
//! * `L_fd` — mean |K_FD| (curvature-flattening variant) or |D_FD|
//!   (rank-deficiency variant) over shell points, from 9-point stencils
//!
//! The default weights (3000 / 100 / 50 / 1) deliberately put the data term
//! three orders above the off-surface penalty: near the data, exp(−α|f|)
//! pushes |f| away from zero with force up to λ_DNM·α, and the anchor must
//! dominate that or the zero set is expelled from the cloud entirely. The
//! kinked |f| anchor then pins the surface exactly, which is what makes the
//! curvature weight's useful range wide.
//!
//! Everything is assembled as tape nodes, so one reverse sweep yields all
//! parameter gradients. Per iteration the field is evaluated exactly
//! |surface| + |offsurface| + 9·|shell| times: value and spatial gradient
//! come from the same forward pass, and each stencil shares its center with
//! the shell point's own evaluation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fd_curvature::{
    gaussian_curvature_fd, projected_determinant_fd, second_form_with_center,
};
use crate::frames::{complete_frame, make_stencil};
use crate::tape::{FieldEval, Jet, Tape, Var};
use crate::vec3::Vec3;

/// Which curvature quantity the regularizer flattens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// |K_FD|: Gaussian-curvature magnitude.
    NcrFd,
    /// |D_FD|: projected-Hessian determinant (rank deficiency).
    NshFd,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::NcrFd => "ncr-fd",
            Variant::NshFd => "nsh-fd",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "ncr-fd" => Ok(Variant::NcrFd),
            "nsh-fd" => Ok(Variant::NshFd),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected ncr-fd or nsh-fd)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub lambda_dm: f64,
    pub lambda_dnm: f64,
    pub lambda_eik: f64,
    pub lambda_fd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_dm: 3000.0,
            lambda_dnm: 100.0,
            lambda_eik: 50.0,
            lambda_fd: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_dm", self.lambda_dm),
            ("lambda_dnm", self.lambda_dnm),
            ("lambda_eik", self.lambda_eik),
            ("lambda_fd", self.lambda_fd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-term means for logging; `total` satisfies the weighted-sum identity.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub dm: f64,
    pub dnm: f64,
    pub eik: f64,
    pub fd: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FdRegConfig {
    pub variant: Variant,
    /// Stencil step h in normalized coordinates.
    pub fd_step: f64,
    /// Divide K_FD by ‖∇f‖⁴ instead of the near-surface simplification
    /// (denominator 1). Ablation path; off by default.
    pub full_denominator: bool,
}

impl Default for FdRegConfig {
    fn default() -> Self {
        FdRegConfig {
            variant: Variant::NcrFd,
            fd_step: 1e-2,
            full_denominator: false,
        }
    }
}

/// Everything `total_loss` needs besides the batches.
#[derive(Clone, Copy, Debug)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Sharpness of the off-surface penalty exp(−α|f|).
    pub alpha: f64,
    pub fd: FdRegConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            alpha: 100.0,
            fd: FdRegConfig::default(),
        }
    }
}

fn mean<'t>(tape: &'t Tape, terms: &[Var<'t>]) -> Var<'t> {
    tape.sum(terms).scale(1.0 / terms.len() as f64)
}

/// Mean |f| over surface values.
pub fn dirichlet_loss<'t>(tape: &'t Tape, values: &[Var<'t>]) -> Result<Var<'t>> {
    if values.is_empty() {
        return Err(Error::EmptyBatch("surface"));
    }
    let terms: Vec<_> = values.iter().map(|v| v.abs()).collect();
    Ok(mean(tape, &terms))
}

/// Mean (‖∇f‖ − 1)² over the given gradient jets.
pub fn eikonal_loss<'t>(tape: &'t Tape, jets: &[Jet<'t>]) -> Result<Var<'t>> {
    if jets.is_empty() {
        return Err(Error::EmptyBatch("eikonal"));
    }
    let one = tape.constant(1.0);
    let terms: Vec<_> = jets
        .iter()
        .map(|j| {
            let dev = j.grad_norm() - one;
            dev * dev
        })
        .collect();
    Ok(mean(tape, &terms))
}

/// Mean exp(−α|f|) over off-surface values.
pub fn nonmanifold_loss<'t>(tape: &'t Tape, values: &[Var<'t>], alpha: f64) -> Result<Var<'t>> {
    if values.is_empty() {
        return Err(Error::EmptyBatch("offsurface"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    let terms: Vec<_> = values
        .iter()
        .map(|v| v.abs().scale(-alpha).exp())
        .collect();
    Ok(mean(tape, &terms))
}

/// One shell point's curvature magnitude as a node: gradient eval (shared as
/// the stencil center), random frame, 8 stencil evals, |K| or |D|.
/// `None` means the gradient was too small to orient a frame and the point
/// is skipped this iteration.
pub fn shell_point_term<'t, F, R>(
    field: &F,
    x0: Vec3,
    cfg: &FdRegConfig,
    rng: &mut R,
) -> Result<Option<Var<'t>>>
where
    F: FieldEval<'t>,
    R: Rng,
{
    let jet = field.eval_with_gradient(x0)?;
    let frame = match complete_frame(jet.grad_value(), rng) {
        Ok(f) => f,
        Err(Error::DegenerateGradient { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let stencil = make_stencil(x0, &frame, cfg.fd_step)?;
    let form = second_form_with_center(|x| field.eval(x), jet.v, &stencil)?;
    let node = match cfg.variant {
        Variant::NshFd => projected_determinant_fd(&form),
        Variant::NcrFd => {
            let denom = cfg.full_denominator.then(|| jet.grad_norm());
            gaussian_curvature_fd(&form, denom)?
        }
    };
    Ok(Some(node.abs()))
}

/// How many shell points actually contributed vs were skipped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FdRegStats {
    pub kept: usize,
    pub skipped: usize,
}

/// Mean curvature-magnitude over the shell batch, skipping
/// degenerate-gradient points. All-skipped batches contribute 0 (logged:
/// it signals gradient collapse early in training).
pub fn fd_regularizer<'t, F, R>(
    tape: &'t Tape,
    field: &F,
    shell: &[Vec3],
    cfg: &FdRegConfig,
    rng: &mut R,
) -> Result<(Var<'t>, FdRegStats)>
where
    F: FieldEval<'t>,
    R: Rng,
{
    if shell.is_empty() {
        return Err(Error::EmptyBatch("shell"));
    }
    let mut terms = Vec::with_capacity(shell.len());
    let mut stats = FdRegStats::default();
    for &x0 in shell {
        match shell_point_term(field, x0, cfg, rng)? {
            Some(term) => {
                terms.push(term);
                stats.kept += 1;
            }
            None => stats.skipped += 1,
        }
    }
    if terms.is_empty() {
        log::warn!(
            "all {} shell points had degenerate gradients; curvature term is 0 this iteration",
            shell.len()
        );
        return Ok((tape.constant(0.0), stats));
    }
    Ok((mean(tape, &terms), stats))
}

/// Assemble the full objective. Surface and off-surface points are each
/// evaluated once with gradients (values feed the fitting terms, gradients
/// the Eikonal term); shell points add 9 evaluations apiece unless
/// λ_fd = 0, which skips the curvature machinery entirely.
pub fn total_loss<'t, F, R>(
    tape: &'t Tape,
    field: &F,
    surface: &[Vec3],
    offsurface: &[Vec3],
    shell: &[Vec3],
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(Var<'t>, LossBreakdown, FdRegStats)>
where
    F: FieldEval<'t>,
    R: Rng,
{
    cfg.weights.validate()?;
    let surface_jets: Vec<Jet<'t>> = surface
        .iter()
        .map(|&x| field.eval_with_gradient(x))
        .collect::<Result<_>>()?;
    let off_jets: Vec<Jet<'t>> = offsurface
        .iter()
        .map(|&x| field.eval_with_gradient(x))
        .collect::<Result<_>>()?;

    let surface_values: Vec<Var<'t>> = surface_jets.iter().map(|j| j.v).collect();
    let off_values: Vec<Var<'t>> = off_jets.iter().map(|j| j.v).collect();
    let mut all_jets = surface_jets;
    all_jets.extend_from_slice(&off_jets);

    let dm = dirichlet_loss(tape, &surface_values)?;
    let dnm = nonmanifold_loss(tape, &off_values, cfg.alpha)?;
    let eik = eikonal_loss(tape, &all_jets)?;
    let (fd, stats) = if cfg.weights.lambda_fd == 0.0 {
        (tape.constant(0.0), FdRegStats::default())
    } else {
        fd_regularizer(tape, field, shell, &cfg.fd, rng)?
    };

    let total = dm.scale(cfg.weights.lambda_dm)
        + dnm.scale(cfg.weights.lambda_dnm)
        + eik.scale(cfg.weights.lambda_eik)
        + fd.scale(cfg.weights.lambda_fd);
    let breakdown = LossBreakdown {
        dm: dm.value(),
        dnm: dnm.value(),
        eik: eik.value(),
        fd: fd.value(),
        total: total.value(),
    };
    Ok((total, breakdown, stats))
}
