use std::cell::RefCell;
use std::rc::Rc;

use super::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{shape_err, BgnError, Result};

type Id = usize;

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Id, Id),
    Sub(Id, Id),
    Mul(Id, Id),
    Div(Id, Id),
    AddTile(Id, Id),
    MulTile(Id, Id),
    Scale(Id, f64),
    /// Shift by a scalar or by a constant tensor; gradient passes through.
    Shift(Id),
    MulConst(Id, Rc<Vec<f64>>),
    MatMul { a: Id, b: Id, m: usize, k: usize, n: usize },
    Bmm { a: Id, b: Id, g: usize, m: usize, k: usize, n: usize },
    Transpose { a: Id, m: usize, n: usize },
    Sigmoid(Id),
    Tanh(Id),
    Relu(Id),
    Softplus(Id),
    Exp(Id),
    Ln(Id),
    Square(Id),
    Softmax { a: Id, cols: usize },
    Concat { a: Id, b: Id, ca: usize, cb: usize },
    Slice { a: Id, cols: usize, start: usize, len: usize },
    Gather { a: Id, cols: usize, index: Rc<Vec<usize>> },
    Reshape(Id),
    Sum(Id),
    Mean(Id),
    SumLast { a: Id, cols: usize },
    MeanAxis1 { a: Id, p: usize, q: usize, r: usize },
    SymNormalize { a: Id, g: usize, n: usize },
    BatchNorm {
        x: Id,
        gamma: Id,
        beta: Id,
        xhat: Rc<Vec<f64>>,
        inv_std: Rc<Vec<f64>>,
        cols: usize,
        training: bool,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications.
///
/// Nodes are appended as they are computed, so every node's inputs precede
/// it and a single reverse sweep visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Id,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = self.value();
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &v.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_unchecked(value, Op::Leaf, false)
    }

    fn push_unchecked(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn push(&self, name: &'static str, value: Tensor, op: Op, inputs: &[Id]) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(BgnError::NonFinite { op: name.to_string() });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn value(&self, id: Id) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let len = self.value(output.id).len();
        if len != 1 {
            return shape_err("backward", format!("output must be a scalar, has {len} values"));
        }
        self.backward_with(output, &[1.0])
    }

    /// Reverse sweep seeded with an explicit upstream gradient.
    pub fn backward_with(&self, output: Var<'_>, seed: &[f64]) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[output.id].value.len() != seed.len() {
            return shape_err("backward", "seed length differs from output");
        }
        grads[output.id] = Some(seed.to_vec());
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if nodes[id].requires_grad {
                propagate(&nodes, &mut grads, id, &g);
            }
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }
}

/// Gradients of one backward sweep, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of its shape when nothing reached it.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.value().shape()))
    }
}

fn acc(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: Id, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn acc_scaled(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: Id, g: &[f64], scale: f64) {
    acc(nodes, grads, id, |s| {
        for (s, &g) in s.iter_mut().zip(g) {
            *s += scale * g;
        }
    });
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: Id, g: &[f64]) {
    let out = &nodes[id].value;
    let val = |i: Id| -> &Tensor { &nodes[i].value };
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc_scaled(nodes, grads, *a, g, 1.0);
            acc_scaled(nodes, grads, *b, g, 1.0);
        }
        Op::Sub(a, b) => {
            acc_scaled(nodes, grads, *a, g, 1.0);
            acc_scaled(nodes, grads, *b, g, -1.0);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * bv[k];
                }
            });
            acc(nodes, grads, *b, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * av[k];
                }
            });
        }
        Op::Div(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] / bv[k];
                }
            });
            acc(nodes, grads, *b, |s| {
                for k in 0..s.len() {
                    s[k] -= g[k] * av[k] / (bv[k] * bv[k]);
                }
            });
        }
        Op::AddTile(a, b) => {
            acc_scaled(nodes, grads, *a, g, 1.0);
            let lb = val(*b).len();
            acc(nodes, grads, *b, |s| {
                for (k, &gk) in g.iter().enumerate() {
                    s[k % lb] += gk;
                }
            });
        }
        Op::MulTile(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            let lb = bv.len();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * bv[k % lb];
                }
            });
            acc(nodes, grads, *b, |s| {
                for (k, &gk) in g.iter().enumerate() {
                    s[k % lb] += gk * av[k];
                }
            });
        }
        Op::Scale(a, c) => acc_scaled(nodes, grads, *a, g, *c),
        Op::Shift(a) | Op::Reshape(a) => acc_scaled(nodes, grads, *a, g, 1.0),
        Op::MulConst(a, m) => acc(nodes, grads, *a, |s| {
            for k in 0..s.len() {
                s[k] += g[k] * m[k];
            }
        }),
        Op::MatMul { a, b, m, k, n } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            acc(nodes, grads, *a, |s| gemm_nt_acc(g, bv, s, *m, *n, *k));
            acc(nodes, grads, *b, |s| gemm_tn_acc(av, g, s, *m, *k, *n));
        }
        Op::Bmm { a, b, g: batches, m, k, n } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            let (sa, sb, so) = (m * k, k * n, m * n);
            acc(nodes, grads, *a, |s| {
                for t in 0..*batches {
                    gemm_nt_acc(&g[t * so..(t + 1) * so], &bv[t * sb..(t + 1) * sb], &mut s[t * sa..(t + 1) * sa], *m, *n, *k);
                }
            });
            acc(nodes, grads, *b, |s| {
                for t in 0..*batches {
                    gemm_tn_acc(&av[t * sa..(t + 1) * sa], &g[t * so..(t + 1) * so], &mut s[t * sb..(t + 1) * sb], *m, *k, *n);
                }
            });
        }
        Op::Transpose { a, m, n } => acc(nodes, grads, *a, |s| {
            for i in 0..*m {
                for j in 0..*n {
                    s[i * n + j] += g[j * m + i];
                }
            }
        }),
        Op::Sigmoid(a) => {
            let y = out.data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            });
        }
        Op::Tanh(a) => {
            let y = out.data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * (1.0 - y[k] * y[k]);
                }
            });
        }
        Op::Relu(a) => {
            let x = val(*a).data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    if x[k] > 0.0 {
                        s[k] += g[k];
                    }
                }
            });
        }
        Op::Softplus(a) => {
            let x = val(*a).data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * sigmoid(x[k]);
                }
            });
        }
        Op::Exp(a) => {
            let y = out.data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * y[k];
                }
            });
        }
        Op::Ln(a) => {
            let x = val(*a).data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += g[k] / x[k];
                }
            });
        }
        Op::Square(a) => {
            let x = val(*a).data();
            acc(nodes, grads, *a, |s| {
                for k in 0..s.len() {
                    s[k] += 2.0 * g[k] * x[k];
                }
            });
        }
        Op::Softmax { a, cols } => {
            let y = out.data();
            acc(nodes, grads, *a, |s| {
                for (r, yrow) in y.chunks(*cols).enumerate() {
                    let grow = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for c in 0..*cols {
                        s[r * cols + c] += yrow[c] * (grow[c] - dot);
                    }
                }
            });
        }
        Op::Concat { a, b, ca, cb } => {
            let w = ca + cb;
            acc(nodes, grads, *a, |s| {
                for (r, grow) in g.chunks(w).enumerate() {
                    for c in 0..*ca {
                        s[r * ca + c] += grow[c];
                    }
                }
            });
            acc(nodes, grads, *b, |s| {
                for (r, grow) in g.chunks(w).enumerate() {
                    for c in 0..*cb {
                        s[r * cb + c] += grow[ca + c];
                    }
                }
            });
        }
        Op::Slice { a, cols, start, len } => acc(nodes, grads, *a, |s| {
            for (r, grow) in g.chunks(*len).enumerate() {
                for c in 0..*len {
                    s[r * cols + start + c] += grow[c];
                }
            }
        }),
        Op::Gather { a, cols, index } => acc(nodes, grads, *a, |s| {
            for (r, &src) in index.iter().enumerate() {
                for c in 0..*cols {
                    s[src * cols + c] += g[r * cols + c];
                }
            }
        }),
        Op::Sum(a) => acc(nodes, grads, *a, |s| s.iter_mut().for_each(|v| *v += g[0])),
        Op::Mean(a) => acc(nodes, grads, *a, |s| {
            let n = s.len() as f64;
            s.iter_mut().for_each(|v| *v += g[0] / n)
        }),
        Op::SumLast { a, cols } => acc(nodes, grads, *a, |s| {
            for (k, v) in s.iter_mut().enumerate() {
                *v += g[k / cols];
            }
        }),
        Op::MeanAxis1 { a, p, q, r } => acc(nodes, grads, *a, |s| {
            let inv = 1.0 / *q as f64;
            for i in 0..*p {
                for j in 0..*q {
                    for k in 0..*r {
                        s[(i * q + j) * r + k] += g[i * r + k] * inv;
                    }
                }
            }
        }),
        Op::SymNormalize { a, g: batches, n } => {
            let av = val(*a).data();
            acc(nodes, grads, *a, |s| sym_normalize_backward(av, g, s, *batches, *n));
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            cols,
            training,
        } => {
            let cols = *cols;
            let rows = g.len() / cols;
            let gam = val(*gamma).data();
            let mut sum_dy = vec![0.0; cols];
            let mut sum_dy_xhat = vec![0.0; cols];
            for r in 0..rows {
                for c in 0..cols {
                    let k = r * cols + c;
                    sum_dy[c] += g[k];
                    sum_dy_xhat[c] += g[k] * xhat[k];
                }
            }
            acc(nodes, grads, *gamma, |s| {
                for c in 0..cols {
                    s[c] += sum_dy_xhat[c];
                }
            });
            acc(nodes, grads, *beta, |s| {
                for c in 0..cols {
                    s[c] += sum_dy[c];
                }
            });
            acc(nodes, grads, *x, |s| {
                let nr = rows as f64;
                for r in 0..rows {
                    for c in 0..cols {
                        let k = r * cols + c;
                        let scale = gam[c] * inv_std[c];
                        if *training {
                            s[k] += scale
                                * (g[k] - sum_dy[c] / nr - xhat[k] * sum_dy_xhat[c] / nr);
                        } else {
                            s[k] += scale * g[k];
                        }
                    }
                }
            });
        }
    }
}

fn sym_normalize_backward(a: &[f64], g: &[f64], s: &mut [f64], batches: usize, n: usize) {
    let mut deg = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut dd = vec![0.0; n];
    for t in 0..batches {
        let base = t * n * n;
        let at = |i: usize, j: usize| a[base + i * n + j] + if i == j { 1.0 } else { 0.0 };
        for i in 0..n {
            deg[i] = (0..n).map(|j| at(i, j)).sum();
            r[i] = deg[i].powf(-0.5);
        }
        for i in 0..n {
            let mut as_row = 0.0;
            let mut as_col = 0.0;
            for j in 0..n {
                as_row += g[base + i * n + j] * at(i, j) * r[j];
                as_col += g[base + j * n + i] * at(j, i) * r[j];
            }
            dd[i] = -0.5 * deg[i].powf(-1.5) * (as_row + as_col);
        }
        for i in 0..n {
            for j in 0..n {
                s[base + i * n + j] += g[base + i * n + j] * r[i] * r[j] + dd[i];
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn elementwise(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return shape_err(name, format!("{:?} vs {:?}", a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(a.shape().to_vec(), data)?;
        self.tape.push(name, t, op, &[self.id, other.id])
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "div", |x, y| x / y, Op::Div(self.id, other.id))
    }

    fn tiled(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return shape_err(name, format!("{sb:?} is not a trailing block of {sa:?}"));
        }
        let lb = b.len();
        let bd = b.data();
        let data = a.data().iter().enumerate().map(|(k, &x)| f(x, bd[k % lb])).collect();
        let t = Tensor::new(sa.to_vec(), data)?;
        self.tape.push(name, t, op, &[self.id, other.id])
    }

    /// Adds `other` repeated over the leading axes (e.g. a bias row).
    pub fn add_tile(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tiled(other, "add_tile", |x, y| x + y, Op::AddTile(self.id, other.id))
    }

    /// Multiplies by `other` repeated over the leading axes.
    pub fn mul_tile(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tiled(other, "mul_tile", |x, y| x * y, Op::MulTile(self.id, other.id))
    }

    fn unary(self, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var<'t>> {
        let t = self.value().map(f);
        self.tape.push(name, t, op, &[self.id])
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary("scale", |x| c * x, Op::Scale(self.id, c))
    }

    pub fn shift(self, c: f64) -> Result<Var<'t>> {
        self.unary("shift", |x| x + c, Op::Shift(self.id))
    }

    /// `1 - x`
    pub fn one_minus(self) -> Result<Var<'t>> {
        self.scale(-1.0)?.shift(1.0)
    }

    /// Adds a constant tensor of identical shape.
    pub fn add_const(self, c: &Tensor) -> Result<Var<'t>> {
        let a = self.value();
        if a.shape() != c.shape() {
            return shape_err("add_const", format!("{:?} vs {:?}", a.shape(), c.shape()));
        }
        let data = a.data().iter().zip(c.data()).map(|(x, y)| x + y).collect();
        self.tape.push("add_const", Tensor::new(a.shape().to_vec(), data)?, Op::Shift(self.id), &[self.id])
    }

    /// Multiplies by a constant tensor of identical shape (masks).
    pub fn mul_const(self, c: &Tensor) -> Result<Var<'t>> {
        let a = self.value();
        if a.shape() != c.shape() {
            return shape_err("mul_const", format!("{:?} vs {:?}", a.shape(), c.shape()));
        }
        let data = a.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let op = Op::MulConst(self.id, Rc::new(c.data().to_vec()));
        self.tape.push("mul_const", Tensor::new(a.shape().to_vec(), data)?, op, &[self.id])
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary("sigmoid", sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary("tanh", f64::tanh, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary("relu", |x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        self.unary("softplus", softplus, Op::Softplus(self.id))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary("exp", f64::exp, Op::Exp(self.id))
    }

    pub fn ln(self) -> Result<Var<'t>> {
        self.unary("ln", f64::ln, Op::Ln(self.id))
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.unary("square", |x| x * x, Op::Square(self.id))
    }

    /// `a[m×k] · b[k×n]`
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return shape_err("matmul", format!("{:?} · {:?}", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(a.data(), b.data(), &mut out, m, k, n);
        let op = Op::MatMul { a: self.id, b: other.id, m, k, n };
        self.tape.push("matmul", Tensor::new(vec![m, n], out)?, op, &[self.id, other.id])
    }

    /// Batched product `a[g×m×k] · b[g×k×n]`.
    pub fn bmm(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return shape_err("bmm", format!("{sa:?} · {sb:?}"));
        }
        let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; g * m * n];
        for t in 0..g {
            gemm_acc(
                &a.data()[t * m * k..(t + 1) * m * k],
                &b.data()[t * k * n..(t + 1) * k * n],
                &mut out[t * m * n..(t + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let op = Op::Bmm { a: self.id, b: other.id, g, m, k, n };
        self.tape.push("bmm", Tensor::new(vec![g, m, n], out)?, op, &[self.id, other.id])
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 2 {
            return shape_err("transpose", format!("rank {} input", a.rank()));
        }
        let (m, n) = (a.shape()[0], a.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a.data()[i * n + j];
            }
        }
        let op = Op::Transpose { a: self.id, m, n };
        self.tape.push("transpose", Tensor::new(vec![n, m], out)?, op, &[self.id])
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax_lastdim(self) -> Result<Var<'t>> {
        let a = self.value();
        let cols = a.cols();
        let mut out = a.data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let op = Op::Softmax { a: self.id, cols };
        self.tape.push("softmax", Tensor::new(a.shape().to_vec(), out)?, op, &[self.id])
    }

    pub fn concat_lastdim(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return shape_err("concat", format!("{sa:?} || {sb:?}"));
        }
        let (ca, cb) = (a.cols(), b.cols());
        let mut out = Vec::with_capacity(a.len() + b.len());
        for (ra, rb) in a.data().chunks(ca).zip(b.data().chunks(cb)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let op = Op::Concat { a: self.id, b: other.id, ca, cb };
        self.tape.push("concat", Tensor::new(shape, out)?, op, &[self.id, other.id])
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_lastdim(self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        let cols = a.cols();
        if start + len > cols || len == 0 {
            return shape_err("slice", format!("{start}+{len} of {cols}"));
        }
        let out: Vec<f64> = a
            .data()
            .chunks(cols)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let op = Op::Slice { a: self.id, cols, start, len };
        self.tape.push("slice", Tensor::new(shape, out)?, op, &[self.id])
    }

    /// Selects rows (last-axis vectors) by index; result is `[index.len() × cols]`.
    pub fn gather_rows(self, index: Rc<Vec<usize>>) -> Result<Var<'t>> {
        let a = self.value();
        let (rows, cols) = (a.rows(), a.cols());
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return shape_err("gather_rows", format!("row {bad} of {rows}"));
        }
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            out.extend_from_slice(&a.data()[i * cols..(i + 1) * cols]);
        }
        let shape = vec![index.len(), cols];
        let op = Op::Gather { a: self.id, cols, index };
        self.tape.push("gather_rows", Tensor::new(shape, out)?, op, &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let t = (*self.value()).clone().reshape(shape)?;
        self.tape.push("reshape", t, Op::Reshape(self.id), &[self.id])
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let s = self.value().sum();
        self.tape.push("sum", Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.is_empty() {
            return shape_err("mean", "empty tensor");
        }
        let s = a.sum() / a.len() as f64;
        self.tape.push("mean", Tensor::scalar(s), Op::Mean(self.id), &[self.id])
    }

    /// Sums the last axis away.
    pub fn sum_lastdim(self) -> Result<Var<'t>> {
        let a = self.value();
        let cols = a.cols();
        let out: Vec<f64> = a.data().chunks(cols).map(|r| r.iter().sum()).collect();
        let mut shape = a.shape().to_vec();
        shape.pop();
        if shape.is_empty() {
            shape.push(1);
        }
        let op = Op::SumLast { a: self.id, cols };
        self.tape.push("sum_lastdim", Tensor::new(shape, out)?, op, &[self.id])
    }

    /// Mean over the middle axis of a `[p×q×r]` tensor, giving `[p×r]`.
    pub fn mean_axis1(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 3 {
            return shape_err("mean_axis1", format!("rank {} input", a.rank()));
        }
        let (p, q, r) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            for j in 0..q {
                for k in 0..r {
                    out[i * r + k] += a.data()[(i * q + j) * r + k];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= q as f64);
        let op = Op::MeanAxis1 { a: self.id, p, q, r };
        self.tape.push("mean_axis1", Tensor::new(vec![p, r], out)?, op, &[self.id])
    }

    /// GCN propagation matrix for a batch of adjacencies `[g×n×n]`:
    /// `Ã = A + I`, `d_i = Σ_j Ã_ij`, output `Ã_ij / √(d_i d_j)`.
    pub fn sym_normalize(self) -> Result<Var<'t>> {
        let a = self.value();
        let s = a.shape();
        if s.len() != 3 || s[1] != s[2] {
            return shape_err("sym_normalize", format!("{s:?} is not [g×n×n]"));
        }
        if a.data().iter().any(|&v| v < 0.0) {
            return Err(BgnError::InvalidArgument("adjacency entries must be non-negative".into()));
        }
        let (g, n) = (s[0], s[1]);
        let mut out = vec![0.0; g * n * n];
        let mut r = vec![0.0; n];
        for t in 0..g {
            let base = t * n * n;
            for i in 0..n {
                let deg: f64 = (0..n).map(|j| a.data()[base + i * n + j]).sum::<f64>() + 1.0;
                r[i] = 1.0 / deg.sqrt();
            }
            for i in 0..n {
                for j in 0..n {
                    let at = a.data()[base + i * n + j] + if i == j { 1.0 } else { 0.0 };
                    out[base + i * n + j] = at * r[i] * r[j];
                }
            }
        }
        let op = Op::SymNormalize { a: self.id, g, n };
        self.tape.push("sym_normalize", Tensor::new(s.to_vec(), out)?, op, &[self.id])
    }
}

impl<'t> Tape {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push_batchnorm(
        &'t self,
        x: Var<'t>,
        gamma: Var<'t>,
        beta: Var<'t>,
        out: Tensor,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        training: bool,
    ) -> Result<Var<'t>> {
        let cols = out.cols();
        let op = Op::BatchNorm {
            x: x.id,
            gamma: gamma.id,
            beta: beta.id,
            xhat: Rc::new(xhat),
            inv_std: Rc::new(inv_std),
            cols,
            training,
        };
        self.push("batchnorm", out, op, &[x.id, gamma.id, beta.id])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(shape: &[usize], d: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), d.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let m = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        assert_eq!(i2.matmul(m).unwrap().value().data(), &[1., 2., 3., 4.]);
        let a = tape.constant(t(&[1, 2], &[1., 2.]));
        let b = tape.constant(t(&[2, 1], &[3., 4.]));
        assert_eq!(a.matmul(b).unwrap().item(), 11.0);
        assert!(a.matmul(a).is_err());
    }

    #[test]
    fn matmul_grad_hand_case() {
        let tape = Tape::new();
        let a = tape.leaf(t(&[1, 2], &[1., 1.]));
        let b = tape.constant(t(&[2, 1], &[2., 5.]));
        let y = a.matmul(b).unwrap().sum().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[2., 5.]);
        assert!(g.get(b).is_none());
    }

    #[test]
    fn sigmoid_values() {
        let tape = Tape::new();
        let x = tape.constant(t(&[3], &[0., -100., 2.]));
        let y = x.sigmoid().unwrap().value();
        assert_eq!(y.data()[0], 0.5);
        assert!(y.data()[1] > 0.0 && y.data()[1] <= 1e-30);
        assert_abs_diff_eq!(y.data()[2], 0.8807970779778823, epsilon = 1e-12);
    }

    #[test]
    fn relu_values_and_subgradient() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[4], &[-1., 0., 2., 3.]));
        let y = x.relu().unwrap();
        assert_eq!(y.value().data(), &[0., 0., 2., 3.]);
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0., 0., 1., 1.]);
    }

    #[test]
    fn softmax_cases() {
        let tape = Tape::new();
        let x = tape.constant(t(&[3, 2], &[0., 0., 1000., 0., 1., 2.]));
        let y = x.softmax_lastdim().unwrap().value();
        assert_eq!(&y.data()[0..2], &[0.5, 0.5]);
        assert_abs_diff_eq!(y.data()[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.data()[3], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.data()[4], 0.2689414213699951, epsilon = 1e-12);
        assert_abs_diff_eq!(y.data()[5], 0.7310585786300049, epsilon = 1e-12);
    }

    #[test]
    fn concat_and_split_grad() {
        let tape = Tape::new();
        let a = tape.leaf(t(&[1], &[1.]));
        let b = tape.leaf(t(&[1], &[2.]));
        let c = a.concat_lastdim(b).unwrap();
        assert_eq!(c.value().data(), &[1., 2.]);
        let a2 = tape.leaf(t(&[2], &[1., 2.]));
        let c2 = a2.concat_lastdim(b).unwrap();
        assert_eq!(c2.value().data(), &[1., 2., 2.]);
        let g = tape.backward(c2.sum().unwrap()).unwrap();
        assert_eq!(g.get(a2).unwrap().data(), &[1., 1.]);
        assert_eq!(g.get(b).unwrap().data(), &[1.]);
        assert!(a.concat_lastdim(tape.leaf(Tensor::zeros(&[2, 1]))).is_err());
    }

    #[test]
    fn diamond_accumulates_both_paths() {
        // y = x*x + 3x, dy/dx = 2x + 3
        let tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.5, -2.0]));
        let y = x.mul(x).unwrap().add(x.scale(3.0).unwrap()).unwrap().sum().unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0, -1.0]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1], &[-1.0]));
        assert!(matches!(x.ln(), Err(BgnError::NonFinite { .. })));
    }

    #[test]
    fn sym_normalize_two_node_hand_case() {
        let tape = Tape::new();
        let a = tape.constant(t(&[1, 2, 2], &[0., 1., 1., 0.]));
        let n = a.sym_normalize().unwrap().value();
        for &v in n.data() {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        }
    }
}
