//! Sinusoidal MLP representing the signed distance field.
//!
//! Architecture: `depth` sine layers of `width` units — x ↦ sin(ω₀·(Wx + b))
//! — followed by one linear output row. Parameters live in a single flat
//! vector (per layer: weights row-major, then biases) so the optimizer, the
//! tape binding, and the checkpoint format all share one canonical order.
//!
//! Two evaluation paths exist on purpose:
//! * **Tape-bound** ([`Siren::bind`]) for training: records the forward pass
//!   as differentiable nodes, with [`BoundSiren::eval_with_gradient`] carrying
//!   spatial partials as forward-mode tangent nodes (see [`Jet`]).
//! * **Plain** ([`Siren::eval_plain`], [`Siren::eval_grad_plain`]) for
//!   marching cubes, metrics, and finite-difference cross-checks: no
//!   allocation beyond a reusable scratch buffer, bit-identical arithmetic to
//!   the tape path.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::tape::{Jet, NodeRange, Tape, Var};
use crate::vec3::{vec3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SirenConfig {
    /// Number of sine layers.
    pub depth: usize,
    /// Units per sine layer.
    pub width: usize,
    /// Frequency scale ω₀ applied inside every sine.
    pub omega0: f64,
}

impl Default for SirenConfig {
    fn default() -> Self {
        SirenConfig {
            depth: 4,
            width: 256,
            omega0: 30.0,
        }
    }
}

/// (input width, output width) of affine map `l`; `l == depth` is the final
/// linear row.
fn layer_dims(cfg: &SirenConfig, l: usize) -> (usize, usize) {
    let inp = if l == 0 { 3 } else { cfg.width };
    let out = if l == cfg.depth { 1 } else { cfg.width };
    (inp, out)
}

fn param_count(cfg: &SirenConfig) -> usize {
    (0..=cfg.depth)
        .map(|l| {
            let (inp, out) = layer_dims(cfg, l);
            out * inp + out
        })
        .sum()
}

/// Element offsets of one affine map inside the flat parameter vector.
struct LayerOffsets {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

fn layer_offsets(cfg: &SirenConfig) -> Vec<LayerOffsets> {
    let mut offsets = Vec::with_capacity(cfg.depth + 1);
    let mut at = 0;
    for l in 0..=cfg.depth {
        let (inp, out) = layer_dims(cfg, l);
        offsets.push(LayerOffsets {
            w: at,
            b: at + out * inp,
            inp,
            out,
        });
        at += out * inp + out;
    }
    offsets
}

#[derive(Clone, Debug, PartialEq)]
pub struct Siren {
    pub cfg: SirenConfig,
    pub seed: u64,
    /// Flat parameters: layer 0 weights row-major, layer 0 biases, layer 1
    /// weights, ... final row weights, final bias.
    pub params: Vec<f64>,
}

impl Siren {
    /// Fresh network. Weight ranges follow the sinusoidal-network scheme:
    /// first layer U(±1/in), hidden layers U(±√(6/in)/ω₀). Biases and the
    /// final linear row use U(±1/√in) — with the hidden-layer bound on the
    /// final row the output variance at init collapses to ~1e-3, far below
    /// anything the fitting losses can work with at lr 5e-5.
    pub fn init(seed: u64, cfg: SirenConfig) -> Result<Siren> {
        if cfg.width == 0 || cfg.depth == 0 {
            return Err(Error::InvalidConfig(format!(
                "network needs width >= 1 and depth >= 1, got {}x{}",
                cfg.width, cfg.depth
            )));
        }
        if !(cfg.omega0.is_finite() && cfg.omega0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "omega0 must be a positive real, got {}",
                cfg.omega0
            )));
        }
        let mut rng = derive_rng(seed, "siren-init", 0);
        let mut params = Vec::with_capacity(param_count(&cfg));
        for l in 0..=cfg.depth {
            let (inp, out) = layer_dims(&cfg, l);
            let w_bound = if l == 0 {
                1.0 / inp as f64
            } else if l < cfg.depth {
                (6.0 / inp as f64).sqrt() / cfg.omega0
            } else {
                1.0 / (inp as f64).sqrt()
            };
            for _ in 0..out * inp {
                params.push(rng.gen_range(-w_bound..w_bound));
            }
            let b_bound = 1.0 / (inp as f64).sqrt();
            for _ in 0..out {
                params.push(rng.gen_range(-b_bound..b_bound));
            }
        }
        Ok(Siren { cfg, seed, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Record all parameters as tape leaves and return an evaluator bound to
    /// that tape. Leaves are contiguous, matching the flat vector, so
    /// adjoints read back as one slice.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundSiren<'t> {
        let params = tape.leaves(&self.params);
        let omega = tape.constant(self.cfg.omega0);
        BoundSiren {
            tape,
            cfg: self.cfg,
            offsets: layer_offsets(&self.cfg),
            params,
            omega,
            evals: std::cell::Cell::new(0),
        }
    }

    fn ensure_scratch(&self, s: &mut EvalScratch) {
        // Three slots minimum: the input vector lives in the same buffer.
        let w = self.cfg.width.max(3);
        if s.cur.len() < w {
            s.cur.resize(w, 0.0);
            s.next.resize(w, 0.0);
            for c in 0..3 {
                s.t[c].resize(w, 0.0);
                s.tn[c].resize(w, 0.0);
            }
        }
    }

    /// Field value without touching a tape. Arithmetic order matches the
    /// tape path exactly (bias first, then terms in index order), so the two
    /// agree bit for bit.
    pub fn eval_plain(&self, x: Vec3, s: &mut EvalScratch) -> f64 {
        self.ensure_scratch(s);
        let offsets = layer_offsets(&self.cfg);
        let om = self.cfg.omega0;
        s.cur[0] = x.x;
        s.cur[1] = x.y;
        s.cur[2] = x.z;
        let mut cur_len = 3;
        for layer in offsets.iter().take(self.cfg.depth) {
            for j in 0..layer.out {
                let row = &self.params[layer.w + j * layer.inp..layer.w + (j + 1) * layer.inp];
                let mut acc = self.params[layer.b + j];
                for (wi, xi) in row.iter().zip(&s.cur[..cur_len]) {
                    acc += wi * xi;
                }
                s.next[j] = (acc * om).sin();
            }
            std::mem::swap(&mut s.cur, &mut s.next);
            cur_len = self.cfg.width;
        }
        let fin = offsets.last().unwrap();
        let mut acc = self.params[fin.b];
        for (wi, xi) in self.params[fin.w..fin.w + fin.inp].iter().zip(&s.cur[..cur_len]) {
            acc += wi * xi;
        }
        acc
    }

    /// Field value and spatial gradient via forward-mode tangents, tape-free.
    pub fn eval_grad_plain(&self, x: Vec3, s: &mut EvalScratch) -> (f64, Vec3) {
        self.ensure_scratch(s);
        let offsets = layer_offsets(&self.cfg);
        let om = self.cfg.omega0;
        s.cur[0] = x.x;
        s.cur[1] = x.y;
        s.cur[2] = x.z;
        for c in 0..3 {
            s.t[c][0] = 0.0;
            s.t[c][1] = 0.0;
            s.t[c][2] = 0.0;
            s.t[c][c] = 1.0;
        }
        let mut cur_len = 3;
        for layer in offsets.iter().take(self.cfg.depth) {
            for j in 0..layer.out {
                let row = &self.params[layer.w + j * layer.inp..layer.w + (j + 1) * layer.inp];
                let mut acc = self.params[layer.b + j];
                for (wi, xi) in row.iter().zip(&s.cur[..cur_len]) {
                    acc += wi * xi;
                }
                let pre = acc * om;
                s.next[j] = pre.sin();
                let cos = pre.cos();
                for c in 0..3 {
                    let mut tacc = 0.0;
                    for (wi, ti) in row.iter().zip(&s.t[c][..cur_len]) {
                        tacc += wi * ti;
                    }
                    s.tn[c][j] = cos * (tacc * om);
                }
            }
            std::mem::swap(&mut s.cur, &mut s.next);
            std::mem::swap(&mut s.t, &mut s.tn);
            cur_len = self.cfg.width;
        }
        let fin = offsets.last().unwrap();
        let row = &self.params[fin.w..fin.w + fin.inp];
        let mut acc = self.params[fin.b];
        for (wi, xi) in row.iter().zip(&s.cur[..cur_len]) {
            acc += wi * xi;
        }
        let mut grad = [0.0; 3];
        for (c, g) in grad.iter_mut().enumerate() {
            for (wi, ti) in row.iter().zip(&s.t[c][..cur_len]) {
                *g += wi * ti;
            }
        }
        (acc, vec3(grad[0], grad[1], grad[2]))
    }

    /// Central-difference spatial gradient — the fallback path for checking
    /// the analytic tangents, selectable from the training config.
    pub fn eval_grad_central(&self, x: Vec3, h: f64, s: &mut EvalScratch) -> (f64, Vec3) {
        let f = self.eval_plain(x, s);
        let mut grad = [0.0; 3];
        for c in 0..3 {
            let mut e = [0.0; 3];
            e[c] = h;
            let step = vec3(e[0], e[1], e[2]);
            let hi = self.eval_plain(x + step, s);
            let lo = self.eval_plain(x - step, s);
            grad[c] = (hi - lo) / (2.0 * h);
        }
        (f, vec3(grad[0], grad[1], grad[2]))
    }

    /// Text checkpoint: header (depth, width, ω₀, seed, count) then one
    /// parameter per line in canonical order. Floats use shortest
    /// round-trip formatting, so save→load is bit-exact.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(out, "fdrecon-siren-v1")?;
            writeln!(out, "depth {}", self.cfg.depth)?;
            writeln!(out, "width {}", self.cfg.width)?;
            writeln!(out, "omega0 {}", self.cfg.omega0)?;
            writeln!(out, "seed {}", self.seed)?;
            writeln!(out, "count {}", self.params.len())?;
            for p in &self.params {
                writeln!(out, "{p}")?;
            }
            out.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Siren> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()
                .map_err(|e| Error::io(path, e))?
                .ok_or_else(|| Error::Checkpoint(format!("{}: truncated before {what}", path.display())))
        };
        let magic = next("magic")?;
        if magic.trim() != "fdrecon-siren-v1" {
            return Err(Error::Checkpoint(format!(
                "{}: unrecognized header {magic:?}",
                path.display()
            )));
        }
        fn field<T: std::str::FromStr>(line: &str, key: &str, path: &Path) -> Result<T> {
            let rest = line
                .strip_prefix(key)
                .map(str::trim)
                .filter(|r| !r.is_empty())
                .ok_or_else(|| {
                    Error::Checkpoint(format!("{}: expected `{key} <value>`, got {line:?}", path.display()))
                })?;
            rest.parse().map_err(|_| {
                Error::Checkpoint(format!("{}: bad value in {line:?}", path.display()))
            })
        }
        let depth: usize = field(&next("depth")?, "depth", path)?;
        let width: usize = field(&next("width")?, "width", path)?;
        let omega0: f64 = field(&next("omega0")?, "omega0", path)?;
        let seed: u64 = field(&next("seed")?, "seed", path)?;
        let count: usize = field(&next("count")?, "count", path)?;
        let cfg = SirenConfig {
            depth,
            width,
            omega0,
        };
        if count != param_count(&cfg) {
            return Err(Error::Checkpoint(format!(
                "{}: header says {count} parameters but a {depth}x{width} network has {}",
                path.display(),
                param_count(&cfg)
            )));
        }
        let mut params = Vec::with_capacity(count);
        for i in 0..count {
            let line = next("parameter")?;
            let v: f64 = line.trim().parse().map_err(|_| {
                Error::Checkpoint(format!(
                    "{}: parameter {i} is not a float: {line:?}",
                    path.display()
                ))
            })?;
            params.push(v);
        }
        Ok(Siren { cfg, seed, params })
    }
}

/// Reusable buffers for the plain evaluation paths.
#[derive(Default)]
pub struct EvalScratch {
    cur: Vec<f64>,
    next: Vec<f64>,
    t: [Vec<f64>; 3],
    tn: [Vec<f64>; 3],
}

/// A network whose parameters are leaves on one tape.
pub struct BoundSiren<'t> {
    tape: &'t Tape,
    cfg: SirenConfig,
    offsets: Vec<LayerOffsets>,
    params: NodeRange,
    omega: Var<'t>,
    evals: std::cell::Cell<u64>,
}

impl<'t> BoundSiren<'t> {
    /// The contiguous leaf block holding all parameters, in canonical order.
    pub fn param_range(&self) -> NodeRange {
        self.params
    }

    fn weight_row(&self, layer: &LayerOffsets, j: usize) -> NodeRange {
        NodeRange {
            first: self.params.first + (layer.w + j * layer.inp) as u32,
            len: layer.inp as u32,
        }
    }

    fn bias(&self, layer: &LayerOffsets, j: usize) -> Var<'t> {
        self.tape.var_at(self.params.first + (layer.b + j) as u32)
    }

    fn check_input(x: Vec3) -> Result<()> {
        if x.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteInput)
        }
    }

    fn record_input(&self, x: Vec3) -> NodeRange {
        let t = self.tape;
        let first = t.len() as u32;
        t.constant(x.x);
        t.constant(x.y);
        t.constant(x.z);
        NodeRange { first, len: 3 }
    }

    /// One sine layer: affine rows, ω₀ scaling, then sin — each pass records
    /// a contiguous node block so the next layer can consume it as a range.
    fn sine_layer(&self, layer: &LayerOffsets, input: NodeRange) -> NodeRange {
        let t = self.tape;
        let aff_first = t.len() as u32;
        for j in 0..layer.out {
            t.affine(self.weight_row(layer, j), input, self.bias(layer, j));
        }
        let pre_first = t.len() as u32;
        for j in 0..layer.out as u32 {
            let _ = t.var_at(aff_first + j) * self.omega;
        }
        let out_first = t.len() as u32;
        for j in 0..layer.out as u32 {
            let _ = t.var_at(pre_first + j).sin();
        }
        NodeRange {
            first: out_first,
            len: layer.out as u32,
        }
    }

    /// f(x) as a node.
    pub fn eval(&self, x: Vec3) -> Result<Var<'t>> {
        Self::check_input(x)?;
        self.evals.set(self.evals.get() + 1);
        let mut cur = self.record_input(x);
        for layer in self.offsets.iter().take(self.cfg.depth) {
            cur = self.sine_layer(layer, cur);
        }
        let fin = self.offsets.last().unwrap();
        Ok(self.tape.affine(self.weight_row(fin, 0), cur, self.bias(fin, 0)))
    }

    /// f(x) together with ∂f/∂x, ∂f/∂y, ∂f/∂z as nodes. The tangents run
    /// forward through the layers alongside the values, so differentiating
    /// any function of them w.r.t. the parameter leaves needs only the
    /// ordinary reverse sweep.
    pub fn eval_with_gradient(&self, x: Vec3) -> Result<Jet<'t>> {
        Self::check_input(x)?;
        self.evals.set(self.evals.get() + 1);
        let t = self.tape;
        let input = self.record_input(x);

        // First sine layer: tangent of row j along axis c is ω₀·W[j][c], a
        // product of the ω₀ constant with the weight leaf itself.
        let first = &self.offsets[0];
        let cur = self.sine_layer(first, input);
        let cos_first = t.len() as u32;
        for j in 0..first.out as u32 {
            // sine_layer records the pre-activation block (affine·ω₀)
            // directly before the sin block, so pre_j = out_j - width.
            let pre_idx = cur.first - cur.len + j;
            let _ = t.var_at(pre_idx).cos();
        }
        let mut cur_t = [NodeRange { first: 0, len: 0 }; 3];
        for (c, slot) in cur_t.iter_mut().enumerate() {
            let tpre_first = t.len() as u32;
            for j in 0..first.out {
                let w_leaf = t.var_at(self.weight_row(first, j).at(c));
                let _ = self.omega * w_leaf;
            }
            let tout_first = t.len() as u32;
            for j in 0..first.out as u32 {
                let _ = t.var_at(cos_first + j) * t.var_at(tpre_first + j);
            }
            *slot = NodeRange {
                first: tout_first,
                len: first.out as u32,
            };
        }

        let mut cur = cur;
        for layer in self.offsets.iter().take(self.cfg.depth).skip(1) {
            let out = self.sine_layer(layer, cur);
            let cos_first = t.len() as u32;
            for j in 0..layer.out as u32 {
                let pre_idx = out.first - out.len + j;
                let _ = t.var_at(pre_idx).cos();
            }
            for slot in cur_t.iter_mut() {
                let dot_first = t.len() as u32;
                for j in 0..layer.out {
                    let _ = t.dot(self.weight_row(layer, j), *slot);
                }
                let tpre_first = t.len() as u32;
                for j in 0..layer.out as u32 {
                    let _ = t.var_at(dot_first + j) * self.omega;
                }
                let tout_first = t.len() as u32;
                for j in 0..layer.out as u32 {
                    let _ = t.var_at(cos_first + j) * t.var_at(tpre_first + j);
                }
                *slot = NodeRange {
                    first: tout_first,
                    len: layer.out as u32,
                };
            }
            cur = out;
        }

        let fin = self.offsets.last().unwrap();
        let row = self.weight_row(fin, 0);
        let v = t.affine(row, cur, self.bias(fin, 0));
        let dx = t.dot(row, cur_t[0]);
        let dy = t.dot(row, cur_t[1]);
        let dz = t.dot(row, cur_t[2]);
        Ok(Jet { v, dx, dy, dz })
    }
}

impl<'t> crate::tape::FieldEval<'t> for BoundSiren<'t> {
    fn eval(&self, x: Vec3) -> Result<Var<'t>> {
        BoundSiren::eval(self, x)
    }

    fn eval_with_gradient(&self, x: Vec3) -> Result<Jet<'t>> {
        BoundSiren::eval_with_gradient(self, x)
    }

    fn eval_count(&self) -> u64 {
        self.evals.get()
    }
}
