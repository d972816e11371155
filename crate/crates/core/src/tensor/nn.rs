//! Layer primitives composed from tape operations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tensor, Var};
use crate::error::{invalid, shape_err, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// `x[R×in] · w[in×out] (+ b[out])`
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Option<Var<'t>>) -> Result<Var<'t>> {
    let y = x.matmul(w)?;
    match b {
        Some(b) => y.add_tile(b),
        None => Ok(y),
    }
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Rows absorbed so far while re-estimating the statistics; `None`
    /// outside [`BatchNormState::begin_calibration`].
    #[serde(skip)]
    calibrated_rows: Option<usize>,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        Self {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            calibrated_rows: None,
        }
    }

    /// Until [`BatchNormState::end_calibration`], training-mode batches
    /// replace the running statistics with the mean and population variance
    /// of all rows seen since this call.
    pub fn begin_calibration(&mut self) {
        self.calibrated_rows = Some(0);
    }

    pub fn end_calibration(&mut self) {
        self.calibrated_rows = None;
    }

    fn absorb(&mut self, mean: &[f64], var: &[f64], rows: usize) {
        match self.calibrated_rows.as_mut() {
            Some(seen) => {
                let (n, m) = (*seen as f64, rows as f64);
                let total = n + m;
                for c in 0..mean.len() {
                    let delta = mean[c] - self.running_mean[c];
                    self.running_mean[c] += delta * m / total;
                    self.running_var[c] = (n * self.running_var[c] + m * var[c] + delta * delta * n * m / total) / total;
                }
                *seen += rows;
            }
            None => {
                for c in 0..mean.len() {
                    self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * mean[c];
                    self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * var[c];
                }
            }
        }
    }
}

/// Batch normalization over the rows of `x` (last axis = features).
///
/// Training mode normalizes with the batch mean and population variance and
/// folds them into `state` with momentum 0.1 (or averages them while `state`
/// is calibrating); evaluation mode uses `state`.
pub fn batchnorm<'t>(
    x: Var<'t>,
    gamma: Var<'t>,
    beta: Var<'t>,
    state: &mut BatchNormState,
    training: bool,
) -> Result<Var<'t>> {
    let xv = x.value();
    let (rows, cols) = (xv.rows(), xv.cols());
    if gamma.value().len() != cols || beta.value().len() != cols || state.running_mean.len() != cols {
        return shape_err("batchnorm", format!("{cols} features vs affine params"));
    }
    if training && rows < 2 {
        return invalid(format!("batchnorm needs at least 2 rows in training, got {rows}"));
    }
    let (mean, var) = if training {
        let mut mean = vec![0.0; cols];
        let mut var = vec![0.0; cols];
        for row in xv.data().chunks(cols) {
            for c in 0..cols {
                mean[c] += row[c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        for row in xv.data().chunks(cols) {
            for c in 0..cols {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= rows as f64);
        state.absorb(&mean, &var, rows);
        (mean, var)
    } else {
        (state.running_mean.clone(), state.running_var.clone())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let (g, b) = (gamma.value(), beta.value());
    let mut xhat = Vec::with_capacity(xv.len());
    let mut out = Vec::with_capacity(xv.len());
    for row in xv.data().chunks(cols) {
        for c in 0..cols {
            let h = (row[c] - mean[c]) * inv_std[c];
            xhat.push(h);
            out.push(g.data()[c] * h + b.data()[c]);
        }
    }
    let out = Tensor::new(xv.shape().to_vec(), out)?;
    x.tape().push_batchnorm(x, gamma, beta, out, xhat, inv_std, training)
}

/// Inverted dropout: survivors are scaled by `1/(1-p)`; identity when not
/// training.
pub fn dropout<'t, R: Rng + ?Sized>(x: Var<'t>, p: f64, training: bool, rng: &mut R) -> Result<Var<'t>> {
    if !(0.0..1.0).contains(&p) {
        return invalid(format!("dropout probability {p} outside [0,1)"));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let keep = 1.0 / (1.0 - p);
    let mask = Tensor::from_fn(&shape, |_| if rng.random::<f64>() < p { 0.0 } else { keep });
    x.mul_const(&mask)
}

/// Weights of one GRU cell, row-vector convention (`x · W`).
#[derive(Clone, Copy, Debug)]
pub struct GruWeights<'t> {
    pub w_z: Var<'t>,
    pub u_z: Var<'t>,
    pub b_z: Var<'t>,
    pub w_r: Var<'t>,
    pub u_r: Var<'t>,
    pub b_r: Var<'t>,
    pub w_h: Var<'t>,
    pub u_h: Var<'t>,
    pub b_h: Var<'t>,
}

/// One GRU step:
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ h~
/// ```
pub fn gru_cell<'t>(x: Var<'t>, h: Var<'t>, w: &GruWeights<'t>) -> Result<Var<'t>> {
    let gate = |wx: Var<'t>, uh: Var<'t>, b: Var<'t>| -> Result<Var<'t>> {
        x.matmul(wx)?.add(h.matmul(uh)?)?.add_tile(b)
    };
    let z = gate(w.w_z, w.u_z, w.b_z)?.sigmoid()?;
    let r = gate(w.w_r, w.u_r, w.b_r)?.sigmoid()?;
    let cand = x
        .matmul(w.w_h)?
        .add(r.mul(h)?.matmul(w.u_h)?)?
        .add_tile(w.b_h)?
        .tanh()?;
    z.one_minus()?.mul(h)?.add(z.mul(cand)?)
}
