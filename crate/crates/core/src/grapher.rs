//! Node encoder: two stacked GCN blocks per window, then a two-layer GRU
//! running across the windows of a sample.

use std::rc::Rc;

use crate::error::{invalid, shape_err, BgnError, Result};
use crate::init::{add_bias, add_weight};
use crate::rng::StreamRng;
use crate::tensor::nn::{batchnorm, dropout, gru_cell, BatchNormState, GruWeights};
use crate::tensor::{Bound, ParamId, ParamStore, Tensor, Var};

/// One GCN layer with symmetric normalization and self-loops:
/// `out_i = ReLU(Σ_j Ã_ij / √(d_i d_j) · h_j · W_g)` with `Ã = A + I`.
///
/// `h` is `[G×n×d]`, `adjacency` is `[G×n×n]`, `w_g` is `[d×d_out]`.
pub fn gcn_layer<'t>(h: Var<'t>, adjacency: Var<'t>, w_g: Var<'t>) -> Result<Var<'t>> {
    let (hs, as_) = (h.shape(), adjacency.shape());
    if hs.len() != 3 || as_ != [hs[0], hs[1], hs[1]] {
        return shape_err("gcn_layer", format!("h {hs:?} vs adjacency {as_:?}"));
    }
    if !adjacency.value().all_finite() {
        return Err(BgnError::NonFinite { op: "gcn_layer adjacency".into() });
    }
    let (g, n, d) = (hs[0], hs[1], hs[2]);
    let d_out = w_g.shape()[1];
    adjacency
        .sym_normalize()?
        .bmm(h)?
        .reshape(&[g * n, d])?
        .matmul(w_g)?
        .relu()?
        .reshape(&[g, n, d_out])
}

#[derive(Debug, Clone, Copy)]
pub struct GcnBlockParams {
    pub w_g: ParamId,
    pub bn_gamma: ParamId,
    pub bn_beta: ParamId,
}

impl GcnBlockParams {
    pub fn init(store: &mut ParamStore, rng: &mut StreamRng, prefix: &str, d: usize) -> Self {
        Self {
            w_g: add_weight(store, rng, &format!("{prefix}.w_g"), d, d),
            bn_gamma: store.add(format!("{prefix}.bn.gamma"), Tensor::ones(&[d])),
            bn_beta: add_bias(store, &format!("{prefix}.bn.beta"), d),
        }
    }

    pub fn bind<'t>(&self, p: &Bound<'t>) -> GcnBlockVars<'t> {
        GcnBlockVars {
            w_g: p[self.w_g],
            gamma: p[self.bn_gamma],
            beta: p[self.bn_beta],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GcnBlockVars<'t> {
    pub w_g: Var<'t>,
    pub gamma: Var<'t>,
    pub beta: Var<'t>,
}

/// Stochastic-regularization context for one forward pass.
pub struct Regularization<'a> {
    pub training: bool,
    pub dropout: f64,
    pub rng: &'a mut StreamRng,
}

/// GCN layer, then batch norm over the `G·n` node rows, then dropout.
pub fn gnn_block<'t>(
    h: Var<'t>,
    adjacency: Var<'t>,
    params: &GcnBlockVars<'t>,
    bn: &mut BatchNormState,
    reg: &mut Regularization<'_>,
) -> Result<Var<'t>> {
    let shape = h.shape();
    let out = gcn_layer(h, adjacency, params.w_g)?;
    let d = out.shape()[2];
    let flat = out.reshape(&[shape[0] * shape[1], d])?;
    let normed = batchnorm(flat, params.gamma, params.beta, bn, reg.training)?;
    dropout(normed, reg.dropout, reg.training, reg.rng)?.reshape(&[shape[0], shape[1], d])
}

/// Two blocks in sequence; their outputs are concatenated on the feature
/// axis, giving `[G×n×2d]`.
pub fn stacked_gnn<'t>(
    h0: Var<'t>,
    adjacency: Var<'t>,
    blocks: [&GcnBlockVars<'t>; 2],
    bn: &mut [BatchNormState; 2],
    reg: &mut Regularization<'_>,
) -> Result<Var<'t>> {
    let [bn1, bn2] = bn;
    let out1 = gnn_block(h0, adjacency, blocks[0], bn1, reg)?;
    let out2 = gnn_block(out1, adjacency, blocks[1], bn2, reg)?;
    out1.concat_lastdim(out2)
}

#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    pub fn init(store: &mut ParamStore, rng: &mut StreamRng, prefix: &str, input: usize, hidden: usize) -> Self {
        let w = |s: &mut ParamStore, r: &mut StreamRng, gate: &str| {
            (
                add_weight(s, r, &format!("{prefix}.w_{gate}"), input, hidden),
                add_weight(s, r, &format!("{prefix}.u_{gate}"), hidden, hidden),
                add_bias(s, &format!("{prefix}.b_{gate}"), hidden),
            )
        };
        let (w_z, u_z, b_z) = w(store, rng, "z");
        let (w_r, u_r, b_r) = w(store, rng, "r");
        let (w_h, u_h, b_h) = w(store, rng, "h");
        Self { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h }
    }

    pub fn bind<'t>(&self, p: &Bound<'t>) -> GruWeights<'t> {
        GruWeights {
            w_z: p[self.w_z],
            u_z: p[self.u_z],
            b_z: p[self.b_z],
            w_r: p[self.w_r],
            u_r: p[self.u_r],
            b_r: p[self.b_r],
            w_h: p[self.w_h],
            u_h: p[self.u_h],
            b_h: p[self.b_h],
        }
    }
}

/// Runs both GRU layers across the `S` steps of `seq[B×S×n×F]`, each node
/// independently, from zero initial states. Returns the layer-2 state after
/// every step, each `[B×n×H]`.
pub fn temporal_gru_steps<'t>(
    seq: Var<'t>,
    gru1: &GruWeights<'t>,
    gru2: &GruWeights<'t>,
) -> Result<Vec<Var<'t>>> {
    let s = seq.shape();
    if s.len() != 4 {
        return shape_err("temporal_gru", format!("expected [B×S×n×F], got {s:?}"));
    }
    let (b, steps, n, f) = (s[0], s[1], s[2], s[3]);
    if steps == 0 {
        return invalid("temporal GRU needs at least one step");
    }
    let hidden = gru1.u_z.shape()[0];
    let hidden2 = gru2.u_z.shape()[0];
    let flat = seq.reshape(&[b * steps * n, f])?;
    let tape = seq.tape();
    let mut h1 = tape.constant(Tensor::zeros(&[b * n, hidden]));
    let mut h2 = tape.constant(Tensor::zeros(&[b * n, hidden2]));
    let mut outs = Vec::with_capacity(steps);
    for t in 0..steps {
        let rows: Vec<usize> = (0..b)
            .flat_map(|bi| (0..n).map(move |i| (bi * steps + t) * n + i))
            .collect();
        let x = flat.gather_rows(Rc::new(rows))?;
        h1 = gru_cell(x, h1, gru1)?;
        h2 = gru_cell(h1, h2, gru2)?;
        outs.push(h2.reshape(&[b, n, hidden2])?);
    }
    Ok(outs)
}

/// Final layer-2 state of [`temporal_gru_steps`], `[B×n×H]`.
pub fn temporal_gru<'t>(seq: Var<'t>, gru1: &GruWeights<'t>, gru2: &GruWeights<'t>) -> Result<Var<'t>> {
    Ok(*temporal_gru_steps(seq, gru1, gru2)?.last().expect("at least one step"))
}
