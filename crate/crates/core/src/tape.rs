//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! The tape holds an append-only, topologically ordered list of first-order
//! primitives (add, mul, sin, fused dot/affine rows, ...). Values are computed
//! eagerly as nodes are recorded; `backward` replays the list in reverse and
//! accumulates adjoints without touching the stored values, so a finished tape
//! can be differentiated any number of times.
//!
//! Spatial derivatives of a field are carried as [`Jet`] values whose `dx`,
//! `dy`, `dz` components are ordinary tape nodes. A loss built from them (for
//! example an Eikonal penalty on the gradient norm) therefore remains
//! differentiable with respect to network parameters through plain reverse
//! mode — no second-order node kind exists on the tape at all.
//!
//! Tapes are intended to live for one training iteration: build, run
//! `backward`, read the parameter adjoints, then [`Tape::clear`] or drop.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ptr;

#[derive(Clone, Copy, Debug)]
enum Op {
    /// Input the caller may perturb (parameters); adjoints are reported.
    Leaf,
    /// Fixed value (sample coordinates, hyperparameter constants).
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Abs(u32),
    Sin(u32),
    Cos(u32),
    Sqrt(u32),
    Exp(u32),
    /// sum_i v[w+i] * v[x+i] over two contiguous index ranges.
    Dot { w: u32, x: u32, len: u32 },
    /// Dot plus a bias term: one dense-layer row in a single node.
    Affine { w: u32, x: u32, len: u32, bias: u32 },
    /// Sum over an explicit index list held in the arg buffer.
    Sum { start: u32, len: u32 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Abs(..) => "abs",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Sqrt(..) => "sqrt",
            Op::Exp(..) => "exp",
            Op::Dot { .. } => "dot",
            Op::Affine { .. } => "affine",
            Op::Sum { .. } => "sum",
        }
    }
}

#[derive(Default)]
struct TapeData {
    ops: Vec<Op>,
    vals: Vec<f64>,
    args: Vec<u32>,
}

/// Recorded computation graph. Single-owner while being written; immutable
/// once evaluation is done (backward takes `&self`).
#[derive(Default)]
pub struct Tape {
    data: RefCell<TapeData>,
}

/// Handle to one node on a tape. Copyable; carries a cached value so reads
/// never touch the tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

/// Contiguous block of node indices (parameter leaves, layer outputs).
#[derive(Clone, Copy, Debug)]
pub struct NodeRange {
    pub first: u32,
    pub len: u32,
}

impl NodeRange {
    pub fn at(&self, i: usize) -> u32 {
        debug_assert!((i as u32) < self.len);
        self.first + i as u32
    }
}

/// Every op kind the tape can hold. All are first-order primitives; the
/// acceptance census checks recorded tapes against this list.
pub const FIRST_ORDER_OPS: &[&str] = &[
    "leaf", "const", "add", "sub", "mul", "div", "neg", "abs", "sin", "cos", "sqrt", "exp", "dot",
    "affine", "sum",
];

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.data.borrow().ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep allocations for the next iteration.
    pub fn clear(&mut self) {
        let mut d = self.data.borrow_mut();
        d.ops.clear();
        d.vals.clear();
        d.args.clear();
    }

    fn push(&self, op: Op, val: f64) -> Var<'_> {
        let mut d = self.data.borrow_mut();
        let idx = d.ops.len();
        assert!(idx < u32::MAX as usize, "tape overflow: too many nodes");
        d.ops.push(op);
        d.vals.push(val);
        Var {
            tape: self,
            idx: idx as u32,
            val,
        }
    }

    pub fn leaf(&self, value: f64) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(Op::Const, value)
    }

    /// Record a contiguous block of leaves (e.g. all network parameters).
    pub fn leaves(&self, values: &[f64]) -> NodeRange {
        let first = self.len() as u32;
        for &v in values {
            self.leaf(v);
        }
        NodeRange {
            first,
            len: values.len() as u32,
        }
    }

    fn check_same(&self, other: &Tape) {
        assert!(
            ptr::eq(self, other),
            "contract violation: combining vars from different tapes"
        );
    }

    /// sum_i w[i] * x[i] over two equal-length node ranges.
    pub fn dot(&self, w: NodeRange, x: NodeRange) -> Var<'_> {
        assert_eq!(w.len, x.len, "dot: range length mismatch");
        assert!(w.len > 0, "dot: empty range");
        let val = {
            let d = self.data.borrow();
            let (wf, xf) = (w.first as usize, x.first as usize);
            let n = w.len as usize;
            let mut acc = 0.0;
            for i in 0..n {
                acc += d.vals[wf + i] * d.vals[xf + i];
            }
            acc
        };
        self.push(
            Op::Dot {
                w: w.first,
                x: x.first,
                len: w.len,
            },
            val,
        )
    }

    /// One dense-layer row: sum_i w[i] * x[i] + bias.
    pub fn affine(&self, w: NodeRange, x: NodeRange, bias: Var<'_>) -> Var<'_> {
        self.check_same(bias.tape);
        assert_eq!(w.len, x.len, "affine: range length mismatch");
        assert!(w.len > 0, "affine: empty range");
        let val = {
            let d = self.data.borrow();
            let (wf, xf) = (w.first as usize, x.first as usize);
            let n = w.len as usize;
            let mut acc = d.vals[bias.idx as usize];
            for i in 0..n {
                acc += d.vals[wf + i] * d.vals[xf + i];
            }
            acc
        };
        self.push(
            Op::Affine {
                w: w.first,
                x: x.first,
                len: w.len,
                bias: bias.idx,
            },
            val,
        )
    }

    /// Sum of an arbitrary set of nodes.
    pub fn sum(&self, terms: &[Var<'_>]) -> Var<'_> {
        assert!(!terms.is_empty(), "sum: empty term list");
        for t in terms {
            self.check_same(t.tape);
        }
        let (start, val) = {
            let mut d = self.data.borrow_mut();
            let start = d.args.len() as u32;
            let mut acc = 0.0;
            for t in terms {
                d.args.push(t.idx);
                acc += t.val;
            }
            (start, acc)
        };
        self.push(
            Op::Sum {
                start,
                len: terms.len() as u32,
            },
            val,
        )
    }

    /// Handle to an existing node by index (e.g. one leaf out of a
    /// [`Tape::leaves`] block).
    pub fn var_at(&self, idx: u32) -> Var<'_> {
        let val = self.data.borrow().vals[idx as usize];
        Var {
            tape: self,
            idx,
            val,
        }
    }

    /// Histogram of op kinds currently on the tape.
    pub fn op_census(&self) -> BTreeMap<&'static str, usize> {
        let d = self.data.borrow();
        let mut census = BTreeMap::new();
        for op in &d.ops {
            *census.entry(op.name()).or_insert(0) += 1;
        }
        census
    }

    /// Recompute every node value from the recorded ops. Leaves and constants
    /// keep their stored values unless overridden. Used by the replay
    /// invariant test and by finite-difference cross-checks of `backward`.
    pub fn replay_with_overrides(&self, overrides: &[(u32, f64)]) -> Vec<f64> {
        let d = self.data.borrow();
        let mut vals = d.vals.clone();
        for &(idx, v) in overrides {
            vals[idx as usize] = v;
        }
        for (i, op) in d.ops.iter().enumerate() {
            let v = match *op {
                Op::Leaf | Op::Const => continue,
                Op::Add(a, b) => vals[a as usize] + vals[b as usize],
                Op::Sub(a, b) => vals[a as usize] - vals[b as usize],
                Op::Mul(a, b) => vals[a as usize] * vals[b as usize],
                Op::Div(a, b) => vals[a as usize] / vals[b as usize],
                Op::Neg(a) => -vals[a as usize],
                Op::Abs(a) => vals[a as usize].abs(),
                Op::Sin(a) => vals[a as usize].sin(),
                Op::Cos(a) => vals[a as usize].cos(),
                Op::Sqrt(a) => vals[a as usize].sqrt(),
                Op::Exp(a) => vals[a as usize].exp(),
                Op::Dot { w, x, len } => {
                    let (wf, xf) = (w as usize, x as usize);
                    (0..len as usize).map(|k| vals[wf + k] * vals[xf + k]).sum()
                }
                Op::Affine { w, x, len, bias } => {
                    let (wf, xf) = (w as usize, x as usize);
                    let dot: f64 = (0..len as usize).map(|k| vals[wf + k] * vals[xf + k]).sum();
                    dot + vals[bias as usize]
                }
                Op::Sum { start, len } => {
                    let s = start as usize;
                    d.args[s..s + len as usize]
                        .iter()
                        .map(|&a| vals[a as usize])
                        .sum()
                }
            };
            vals[i] = v;
        }
        vals
    }

    pub fn replay_forward(&self) -> Vec<f64> {
        self.replay_with_overrides(&[])
    }

    /// Reverse sweep from several roots at once, each with its own seed.
    /// Values are only read, never written.
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Gradients {
        let d = self.data.borrow();
        let n = d.ops.len();
        let mut adj = vec![0.0; n];
        for (root, seed) in seeds {
            self.check_same(root.tape);
            adj[root.idx as usize] += seed;
        }
        for i in (0..n).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match d.ops[i] {
                Op::Leaf | Op::Const => {}
                Op::Add(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] += d.vals[b as usize] * g;
                    adj[b as usize] += d.vals[a as usize] * g;
                }
                Op::Div(a, b) => {
                    let bv = d.vals[b as usize];
                    adj[a as usize] += g / bv;
                    adj[b as usize] -= d.vals[a as usize] / (bv * bv) * g;
                }
                Op::Neg(a) => adj[a as usize] -= g,
                Op::Abs(a) => {
                    // Subgradient 0 at the kink.
                    let av = d.vals[a as usize];
                    adj[a as usize] += g * if av > 0.0 {
                        1.0
                    } else if av < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
                Op::Sin(a) => adj[a as usize] += d.vals[a as usize].cos() * g,
                Op::Cos(a) => adj[a as usize] -= d.vals[a as usize].sin() * g,
                Op::Sqrt(a) => adj[a as usize] += g / (2.0 * d.vals[i]),
                Op::Exp(a) => adj[a as usize] += d.vals[i] * g,
                Op::Dot { w, x, len } => {
                    let (wf, xf) = (w as usize, x as usize);
                    for k in 0..len as usize {
                        adj[wf + k] += d.vals[xf + k] * g;
                        adj[xf + k] += d.vals[wf + k] * g;
                    }
                }
                Op::Affine { w, x, len, bias } => {
                    let (wf, xf) = (w as usize, x as usize);
                    for k in 0..len as usize {
                        adj[wf + k] += d.vals[xf + k] * g;
                        adj[xf + k] += d.vals[wf + k] * g;
                    }
                    adj[bias as usize] += g;
                }
                Op::Sum { start, len } => {
                    let s = start as usize;
                    for &a in &d.args[s..s + len as usize] {
                        adj[a as usize] += g;
                    }
                }
            }
        }
        Gradients { adj }
    }

    /// Adjoint of `root` with respect to every node.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        self.backward_seeded(&[(root, 1.0)])
    }
}

/// Adjoints from one reverse sweep.
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    pub fn wrt_range(&self, r: NodeRange) -> &[f64] {
        &self.adj[r.first as usize..(r.first + r.len) as usize]
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    pub fn index(self) -> u32 {
        self.idx
    }

    pub fn sin(self) -> Var<'t> {
        self.tape.push(Op::Sin(self.idx), self.val.sin())
    }

    pub fn cos(self) -> Var<'t> {
        self.tape.push(Op::Cos(self.idx), self.val.cos())
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.push(Op::Sqrt(self.idx), self.val.sqrt())
    }

    pub fn abs(self) -> Var<'t> {
        self.tape.push(Op::Abs(self.idx), self.val.abs())
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.push(Op::Exp(self.idx), self.val.exp())
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let cv = self.tape.constant(c);
        self * cv
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        self.tape.push(Op::Add(self.idx, rhs.idx), self.val + rhs.val)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        self.tape.push(Op::Sub(self.idx, rhs.idx), self.val - rhs.val)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        self.tape.push(Op::Mul(self.idx, rhs.idx), self.val * rhs.val)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        self.tape.push(Op::Div(self.idx, rhs.idx), self.val / rhs.val)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.push(Op::Neg(self.idx), -self.val)
    }
}

/// Anything that can evaluate a scalar field (and its spatial gradient) as
/// nodes on one tape: the bound network during training, or closed-form
/// fields in tests. `eval_count` tracks forward evaluations — the unit the
/// cost model is stated in.
pub trait FieldEval<'t> {
    fn eval(&self, x: crate::vec3::Vec3) -> crate::error::Result<Var<'t>>;
    fn eval_with_gradient(&self, x: crate::vec3::Vec3) -> crate::error::Result<Jet<'t>>;
    fn eval_count(&self) -> u64;
}

/// Field value together with its three spatial partials, all as tape nodes.
/// Propagating these through the network gives the spatial gradient as a
/// first-class differentiable quantity.
#[derive(Clone, Copy)]
pub struct Jet<'t> {
    pub v: Var<'t>,
    pub dx: Var<'t>,
    pub dy: Var<'t>,
    pub dz: Var<'t>,
}

impl<'t> Jet<'t> {
    pub fn add(self, rhs: Jet<'t>) -> Jet<'t> {
        Jet {
            v: self.v + rhs.v,
            dx: self.dx + rhs.dx,
            dy: self.dy + rhs.dy,
            dz: self.dz + rhs.dz,
        }
    }

    /// Product rule on every tangent channel.
    pub fn mul(self, rhs: Jet<'t>) -> Jet<'t> {
        Jet {
            v: self.v * rhs.v,
            dx: self.v * rhs.dx + rhs.v * self.dx,
            dy: self.v * rhs.dy + rhs.v * self.dy,
            dz: self.v * rhs.dz + rhs.v * self.dz,
        }
    }

    pub fn sin(self) -> Jet<'t> {
        let s = self.v.sin();
        let c = self.v.cos();
        Jet {
            v: s,
            dx: c * self.dx,
            dy: c * self.dy,
            dz: c * self.dz,
        }
    }

    pub fn scale(self, c: f64) -> Jet<'t> {
        let cv = self.v.tape.constant(c);
        Jet {
            v: self.v * cv,
            dx: self.dx * cv,
            dy: self.dy * cv,
            dz: self.dz * cv,
        }
    }

    /// Euclidean norm of the spatial gradient as a node.
    pub fn grad_norm(self) -> Var<'t> {
        (self.dx * self.dx + self.dy * self.dy + self.dz * self.dz).sqrt()
    }

    /// Numeric value of the spatial gradient (no new nodes).
    pub fn grad_value(self) -> crate::vec3::Vec3 {
        crate::vec3::vec3(self.dx.value(), self.dy.value(), self.dz.value())
    }
}
