//! Embedding-gated mean pooling and the two prediction heads.

use crate::error::{shape_err, Result};
use crate::init::{add_bias, add_weight};
use crate::rng::StreamRng;
use crate::tensor::nn::linear;
use crate::tensor::{Bound, ParamId, ParamStore, Var};

pub const VAR_FLOOR: f64 = 1e-6;

/// `h_g = (1/n) Σ_i h_i ⊙ b_i` for `h[B×n×d]`, `b[n×d]`; returns `[B×d]`.
pub fn graph_readout<'t>(h: Var<'t>, embeddings: Var<'t>) -> Result<Var<'t>> {
    let (hs, bs) = (h.shape(), embeddings.shape());
    if hs.len() != 3 || bs != hs[1..] {
        return shape_err("graph_readout", format!("h {hs:?} vs embeddings {bs:?}"));
    }
    h.mul_tile(embeddings)?.mean_axis1()
}

#[derive(Debug, Clone, Copy)]
pub struct PointHeadParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl PointHeadParams {
    pub fn init(store: &mut ParamStore, rng: &mut StreamRng, prefix: &str, d: usize) -> Self {
        Self {
            w: add_weight(store, rng, &format!("{prefix}.w"), d, 1),
            b: add_bias(store, &format!("{prefix}.b"), 1),
        }
    }
}

/// `σ(h_g W + b)`, shape `[B]`.
pub fn point_head<'t>(h_g: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let rows = h_g.shape()[0];
    linear(h_g, w, Some(b))?.sigmoid()?.reshape(&[rows])
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianHeadParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl GaussianHeadParams {
    pub fn init(store: &mut ParamStore, rng: &mut StreamRng, prefix: &str, d: usize, hidden: usize) -> Self {
        Self {
            w1: add_weight(store, rng, &format!("{prefix}.w1"), d, hidden),
            b1: add_bias(store, &format!("{prefix}.b1"), hidden),
            w2: add_weight(store, rng, &format!("{prefix}.w2"), hidden, 2),
            b2: add_bias(store, &format!("{prefix}.b2"), 2),
        }
    }

    pub fn bind<'t>(&self, p: &Bound<'t>) -> [Var<'t>; 4] {
        [p[self.w1], p[self.b1], p[self.w2], p[self.b2]]
    }
}

/// Two-layer MLP to `(mu, var)`: `mu = σ(o_0)`, `var = softplus(o_1) + 1e-6`.
pub fn gaussian_head<'t>(h_g: Var<'t>, params: [Var<'t>; 4]) -> Result<(Var<'t>, Var<'t>)> {
    let [w1, b1, w2, b2] = params;
    let rows = h_g.shape()[0];
    let hid = linear(h_g, w1, Some(b1))?.relu()?;
    let out = linear(hid, w2, Some(b2))?;
    let mu = out.slice_lastdim(0, 1)?.sigmoid()?.reshape(&[rows])?;
    let var = out.slice_lastdim(1, 1)?.softplus()?.shift(VAR_FLOOR)?.reshape(&[rows])?;
    Ok((mu, var))
}
