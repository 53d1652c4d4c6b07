//! The training loop: Adam over the network parameters, fresh batches every
//! iteration, periodic Chamfer-distance evaluation against a held-out
//! subsample, and early stopping once the distance stops improving.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::losses::{total_loss, FdRegStats, LossBreakdown, LossConfig};
use crate::mesh::marching_cubes;
use crate::metrics::chamfer;
use crate::rng::derive_rng;
use crate::sampling::{eval_subsample, sample_batches, BatchConfig, NormalizedCloud};
use crate::siren::{EvalScratch, Siren, SirenConfig};
use crate::tape::{FieldEval as _, Tape};
use crate::vec3::{vec3, Vec3};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First/second gradient moments for bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update in place. The caller is responsible for
/// skipping non-finite gradients; this only checks shapes.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidConfig(format!(
            "adam shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Everything the training loop needs beyond the cloud and the network
/// shape. `fd_step` and `shell_sigma` live inside [`LossConfig`] and
/// [`BatchConfig`] respectively.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once this many iterations pass without a Chamfer improvement.
    pub patience: usize,
    pub eval_every: usize,
    pub batch: BatchConfig,
    pub loss: LossConfig,
    /// Marching-cubes resolution for the periodic Chamfer evaluation.
    pub eval_mc_res: usize,
    /// Size cap for the held-out evaluation subsample.
    pub eval_points: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            max_iters: 10_000,
            patience: 1500,
            eval_every: 100,
            batch: BatchConfig::default(),
            loss: LossConfig::default(),
            eval_mc_res: 128,
            eval_points: 10_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.max_iters == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "max_iters and eval_every must be at least 1".into(),
            ));
        }
        if self.patience < self.eval_every {
            return Err(Error::InvalidConfig(format!(
                "patience {} is below eval_every {}; stopping could never trigger",
                self.patience, self.eval_every
            )));
        }
        if self.eval_mc_res < 8 {
            return Err(Error::InvalidConfig(format!(
                "evaluation grid resolution {} is below the minimum of 8",
                self.eval_mc_res
            )));
        }
        if self.eval_points == 0 {
            return Err(Error::InvalidConfig("eval_points must be at least 1".into()));
        }
        self.batch.validate()?;
        self.loss.weights.validate()?;
        if !(self.loss.alpha > 0.0 && self.loss.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.loss.alpha
            )));
        }
        if !(self.loss.fd.fd_step > 0.0 && self.loss.fd.fd_step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fd_step must be positive, got {}",
                self.loss.fd.fd_step
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug)]
pub struct LogRow {
    pub iter: usize,
    pub dm: f64,
    pub dnm: f64,
    pub eik: f64,
    pub fd: f64,
    pub total: f64,
    pub wall_ms: f64,
}

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("iter,dm,dnm,eik,fd,total,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            r.iter, r.dm, r.dnm, r.eik, r.fd, r.total, r.wall_ms
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub best_iter: usize,
    pub best_cd: f64,
    pub iters_run: usize,
    pub wall_seconds: f64,
    pub rows: Vec<LogRow>,
    /// (iteration, Chamfer distance) for every evaluation, in order.
    pub cd_log: Vec<(usize, f64)>,
    /// Iterations skipped because the gradient went non-finite.
    pub skipped_nonfinite: usize,
    /// Field evaluations recorded by the loss graph over the whole run.
    pub forward_evals: u64,
    /// Shell points dropped for degenerate gradients over the whole run.
    pub shell_skipped: u64,
}

/// Trained networks: the best-Chamfer checkpoint and the final iterate.
#[derive(Debug)]
pub struct TrainOutcome {
    pub best: Siren,
    pub last: Siren,
    pub report: TrainReport,
}

/// Scores a parameter snapshot; lower is better. The production
/// implementation extracts a mesh and measures Chamfer distance, but the
/// trainer only relies on this contract, so tests can freeze or script it.
pub trait Evaluator {
    fn evaluate(&mut self, net: &Siren) -> f64;
}

/// Marching-cubes extraction of the network's zero level-set over the
/// normalized cube [−1, 1]³.
pub fn extract_mesh(net: &Siren, res: usize) -> Result<crate::mesh::TriangleMesh> {
    thread_local! {
        static SCRATCH: std::cell::RefCell<EvalScratch> =
            std::cell::RefCell::new(EvalScratch::default());
    }
    let field = |x: Vec3| SCRATCH.with(|s| net.eval_plain(x, &mut s.borrow_mut()));
    marching_cubes(field, res, vec3(-1.0, -1.0, -1.0), vec3(1.0, 1.0, 1.0))
}

/// Chamfer distance between the vertices of a marching-cubes extraction
/// and a fixed point set, in normalized units. Extraction failures (no
/// surface yet, non-finite field) score +∞ rather than aborting training.
pub struct ChamferEvaluator {
    pub points: Vec<Vec3>,
    pub mc_res: usize,
}

impl Evaluator for ChamferEvaluator {
    fn evaluate(&mut self, net: &Siren) -> f64 {
        match extract_mesh(net, self.mc_res) {
            Ok(mesh) => chamfer(&mesh.vertices, &self.points).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

fn loss_and_gradients(
    tape: &mut Tape,
    net: &Siren,
    cloud_points: &[Vec3],
    cfg: &TrainConfig,
    iter: usize,
) -> Result<(Vec<f64>, LossBreakdown, FdRegStats, u64)> {
    tape.clear();
    let tape = &*tape;
    let mut batch_rng = derive_rng(cfg.seed, "batches", iter as u64);
    let batches = sample_batches(cloud_points, &cfg.batch, &mut batch_rng)?;
    let bound = net.bind(tape);
    let mut frame_rng = derive_rng(cfg.seed, "frames", iter as u64);
    let (total, breakdown, stats) = total_loss(
        tape,
        &bound,
        &batches.surface,
        &batches.offsurface,
        &batches.shell,
        &cfg.loss,
        &mut frame_rng,
    )?;
    if !breakdown.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            iter,
            detail: format!(
                "dm {} dnm {} eik {} fd {}",
                breakdown.dm, breakdown.dnm, breakdown.eik, breakdown.fd
            ),
        });
    }
    let grads = tape.backward(total);
    let g = grads.wrt_range(bound.param_range()).to_vec();
    Ok((g, breakdown, stats, bound.eval_count()))
}

/// Run the full loop with an injected evaluator. Returns the best-Chamfer
/// checkpoint (never the last iterate unless it is the best) along with the
/// final parameters and the run log.
pub fn train_with_evaluator<E: Evaluator>(
    cloud: &NormalizedCloud,
    net: Siren,
    cfg: &TrainConfig,
    evaluator: &mut E,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut net = net;
    let mut adam = AdamState::new(net.param_count());
    let mut tape = Tape::new();
    let start = Instant::now();

    let mut report = TrainReport {
        best_iter: 0,
        best_cd: f64::INFINITY,
        iters_run: 0,
        wall_seconds: 0.0,
        rows: Vec::with_capacity(cfg.max_iters),
        cd_log: Vec::new(),
        skipped_nonfinite: 0,
        forward_evals: 0,
        shell_skipped: 0,
    };
    let mut best_params = net.params.clone();
    let mut last_improvement = 0usize;
    let mut last_eval_iter = usize::MAX;

    for iter in 0..cfg.max_iters {
        let t0 = Instant::now();
        let (grads, breakdown, stats, evals) =
            loss_and_gradients(&mut tape, &net, &cloud.points, cfg, iter)?;
        report.forward_evals += evals;
        report.shell_skipped += stats.skipped as u64;

        if grads.iter().all(|g| g.is_finite()) {
            adam_step(&mut net.params, &grads, &mut adam, cfg.lr)?;
        } else {
            report.skipped_nonfinite += 1;
            log::warn!("iteration {iter}: non-finite gradient, update skipped");
        }

        report.rows.push(LogRow {
            iter,
            dm: breakdown.dm,
            dnm: breakdown.dnm,
            eik: breakdown.eik,
            fd: breakdown.fd,
            total: breakdown.total,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        report.iters_run = iter + 1;

        if (iter + 1) % cfg.eval_every == 0 {
            let cd = evaluator.evaluate(&net);
            last_eval_iter = iter;
            report.cd_log.push((iter, cd));
            log::info!(
                "iter {iter}: total {:.5} (dm {:.5} dnm {:.5} eik {:.5} fd {:.5}) cd {cd:.6}",
                breakdown.total,
                breakdown.dm,
                breakdown.dnm,
                breakdown.eik,
                breakdown.fd
            );
            if cd < report.best_cd {
                report.best_cd = cd;
                report.best_iter = iter;
                best_params.copy_from_slice(&net.params);
                last_improvement = iter;
            } else if iter - last_improvement >= cfg.patience {
                log::info!(
                    "stopping: no Chamfer improvement in {} iterations",
                    iter - last_improvement
                );
                break;
            }
        }
    }

    // Give the final iterate a chance at the checkpoint if the loop didn't
    // end on an evaluation boundary.
    if report.iters_run > 0 && last_eval_iter != report.iters_run - 1 {
        let iter = report.iters_run - 1;
        let cd = evaluator.evaluate(&net);
        report.cd_log.push((iter, cd));
        if cd < report.best_cd {
            report.best_cd = cd;
            report.best_iter = iter;
            best_params.copy_from_slice(&net.params);
        }
    }

    report.wall_seconds = start.elapsed().as_secs_f64();
    debug_assert!(report
        .cd_log
        .iter()
        .all(|&(_, cd)| cd >= report.best_cd));

    let mut best = net.clone();
    best.params = best_params;
    Ok(TrainOutcome {
        best,
        last: net,
        report,
    })
}

/// Initialize a network from the configured seed, reserve the evaluation
/// subsample, and train.
pub fn train(
    cloud: &NormalizedCloud,
    net_cfg: SirenConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let net = Siren::init(cfg.seed, net_cfg)?;
    let mut holdout_rng = derive_rng(cfg.seed, "holdout", 0);
    let points = eval_subsample(&cloud.points, cfg.eval_points, &mut holdout_rng);
    let mut evaluator = ChamferEvaluator {
        points,
        mc_res: cfg.eval_mc_res,
    };
    train_with_evaluator(cloud, net, cfg, &mut evaluator)
}
