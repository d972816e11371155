//! Variational autoencoder over window sequences.
//!
//! The encoder is the BGN stack (graph inference, grapher, gated readout)
//! followed by a linear map to the latent mean and scale. The decoder maps
//! `z` to node states for every window, infers a graph over them with its
//! own edge network and the shared node embeddings, runs two GCN blocks and
//! the two-layer GRU, and reconstructs each window as
//! `σ(W_o (h_i ⊙ b_i) + c)`. A head on the readout of the last decoder step
//! predicts the normalized RUL so generated samples come labelled.
//!
//! The graph term of the loss scores the decoder's edge probabilities
//! (`softmax(θ)` channel 0, no noise) against the encoder's sampled graph.

use crate::config::{Ablation, EvalGraph, TrainConfig};
use crate::data::{collate, WindowSequenceSample};
use crate::error::{invalid, shape_err, BgnError, Result};
use crate::grapher::{stacked_gnn, temporal_gru_steps, GcnBlockParams, GruParams, Regularization};
use crate::graph_inference::{gumbel_noise, gumbel_softmax_adjacency, pairwise_logits, EdgeMlp, LogitVariant};
use crate::init::{add_bias, add_weight};
use crate::model::{BgnModel, Pass};
use crate::objectives::mse_loss;
use crate::readout::graph_readout;
use crate::rng::{normal, permutation, stream, Purpose, StreamRng};
use crate::tensor::nn::{linear, BatchNormState};
use crate::tensor::optim::{adam_step, clip_global_norm, AdamState};
use crate::tensor::{Bound, ParamId, Tape, Tensor, Var};

/// Added to the softplus output so the latent scale stays positive.
pub const SIGMA_FLOOR: f64 = 1e-6;
const BCE_EPS: f64 = 1e-7;
/// Stream counter reserved for generation draws.
const GENERATE_COUNTER: u64 = 1 << 62;

/// Reparameterized latent draw `z = μ + σ ⊙ ε`.
pub struct LatentSample<'t> {
    pub mu: Var<'t>,
    pub sigma: Var<'t>,
    pub z: Var<'t>,
    pub epsilon: Tensor,
}

/// Splits `[B × 2·d_z]` statistics into `μ` and `σ = softplus(·) + floor`
/// and forms `z`.
pub fn reparameterize<'t>(stats: Var<'t>, epsilon: Tensor) -> Result<LatentSample<'t>> {
    let s = stats.shape();
    if s.len() != 2 || s[1] % 2 != 0 || epsilon.shape() != [s[0], s[1] / 2] {
        return shape_err("reparameterize", format!("stats {s:?}, epsilon {:?}", epsilon.shape()));
    }
    let dz = s[1] / 2;
    let mu = stats.slice_lastdim(0, dz)?;
    let sigma = stats.slice_lastdim(dz, dz)?.softplus()?.shift(SIGMA_FLOOR)?;
    let z = mu.add(sigma.mul_const(&epsilon)?)?;
    Ok(LatentSample { mu, sigma, z, epsilon })
}

/// `0.5 Σ (μ² + σ² − ln σ² − 1)` over latent dims, averaged over rows.
pub fn kl_divergence<'t>(mu: Var<'t>, sigma: Var<'t>) -> Result<Var<'t>> {
    if mu.shape() != sigma.shape() {
        return shape_err("kl_divergence", format!("mu {:?} vs sigma {:?}", mu.shape(), sigma.shape()));
    }
    if sigma.value().data().iter().any(|&v| !(v > 0.0)) {
        return invalid("kl_divergence needs strictly positive sigma");
    }
    let shape = mu.shape();
    let rows = if shape.len() == 2 { shape[0] } else { 1 };
    let terms = mu
        .square()?
        .add(sigma.square()?)?
        .sub(sigma.ln()?.scale(2.0)?)?
        .shift(-1.0)?;
    terms.sum()?.scale(0.5 / rows.max(1) as f64)
}

/// Binary cross-entropy of `pred` against `target`, averaged over entries
/// where `mask` is 1 (all entries when `mask` is `None`). Predictions are
/// squeezed into `[1e-7, 1 − 1e-7]` first.
pub fn bce_loss<'t>(pred: Var<'t>, target: &Tensor, mask: Option<&Tensor>) -> Result<Var<'t>> {
    if pred.value().len() != target.len() || mask.is_some_and(|m| m.len() != target.len()) {
        return shape_err("bce_loss", format!("pred {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let ones;
    let w = match mask {
        Some(m) => m,
        None => {
            ones = Tensor::ones(target.shape());
            &ones
        }
    };
    let count = w.sum();
    if !(count > 0.0) {
        return invalid("bce_loss over zero entries");
    }
    let t = target.data();
    let wd = w.data();
    let pos = Tensor::from_fn(target.shape(), |k| t[k] * wd[k] / count);
    let neg = Tensor::from_fn(target.shape(), |k| (1.0 - t[k]) * wd[k] / count);
    let p = pred.reshape(target.shape())?.scale(1.0 - 2.0 * BCE_EPS)?.shift(BCE_EPS)?;
    p.ln()?
        .mul_const(&pos)?
        .add(p.one_minus()?.ln()?.mul_const(&neg)?)?
        .sum()?
        .scale(-1.0)
}

/// Negative ELBO and its parts.
pub struct ElboTerms<'t> {
    pub loss: Var<'t>,
    pub recon: f64,
    pub kl: f64,
    pub bce: f64,
}

/// Reconstruction MSE plus the KL term, plus (when both graphs are given)
/// the binary cross-entropy between the decoder's soft adjacency and the
/// encoder's adjacency on off-diagonal entries. The encoder graph is a
/// fixed target.
pub fn vae_elbo<'t>(
    x: &Tensor,
    recon: Var<'t>,
    mu: Var<'t>,
    sigma: Var<'t>,
    adjacency: Option<(&Tensor, Var<'t>)>,
) -> Result<ElboTerms<'t>> {
    let rec = mse_loss(recon, &x.clone().reshape(&[x.len()])?)?;
    let kl = kl_divergence(mu, sigma)?;
    let mut loss = rec.add(kl)?;
    let mut bce_value = 0.0;
    if let Some((a, a_recon)) = adjacency {
        let s = a.shape();
        if s.len() != 3 || s[1] != s[2] || a_recon.shape() != s {
            return shape_err("vae_elbo", format!("adjacency {s:?} vs {:?}", a_recon.shape()));
        }
        let n = s[1];
        let off = Tensor::from_fn(s, |k| if (k / n) % n == k % n { 0.0 } else { 1.0 });
        let target = a.map(|v| v.clamp(0.0, 1.0));
        let bce = bce_loss(a_recon, &target, Some(&off))?;
        bce_value = bce.item();
        loss = loss.add(bce)?;
    }
    Ok(ElboTerms {
        loss,
        recon: rec.item(),
        kl: kl.item(),
        bce: bce_value,
    })
}

/// `[B·S·n × W]` (batch, window, node) to `[B·n × S·W]` (batch, node; window, step).
pub fn to_node_major(x: &Tensor, batch: usize, s: usize, n: usize, w: usize) -> Result<Tensor> {
    if x.len() != batch * s * n * w {
        return shape_err("to_node_major", format!("{:?} for B={batch} S={s} n={n} W={w}", x.shape()));
    }
    let d = x.data();
    let mut out = vec![0.0; d.len()];
    for b in 0..batch {
        for si in 0..s {
            for i in 0..n {
                let src = ((b * s + si) * n + i) * w;
                let dst = (b * n + i) * s * w + si * w;
                out[dst..dst + w].copy_from_slice(&d[src..src + w]);
            }
        }
    }
    Tensor::new(vec![batch * n, s * w], out)
}

/// Inverse of [`to_node_major`], returning one `[S × n × W]` tensor per sample.
pub fn to_window_major(x: &Tensor, batch: usize, s: usize, n: usize, w: usize) -> Result<Vec<Tensor>> {
    if x.len() != batch * s * n * w {
        return shape_err("to_window_major", format!("{:?} for B={batch} S={s} n={n} W={w}", x.shape()));
    }
    let d = x.data();
    (0..batch)
        .map(|b| {
            let mut out = vec![0.0; s * n * w];
            for si in 0..s {
                for i in 0..n {
                    let src = (b * n + i) * s * w + si * w;
                    let dst = (si * n + i) * w;
                    out[dst..dst + w].copy_from_slice(&d[src..src + w]);
                }
            }
            Tensor::new(vec![s, n, w], out)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct DecoderParams {
    w_in: ParamId,
    b_in: ParamId,
    fc1_w: ParamId,
    fc1_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
    gnn: [GcnBlockParams; 2],
    gru: [GruParams; 2],
    w_out: ParamId,
    b_out: ParamId,
    rul_w: ParamId,
    rul_b: ParamId,
}

pub struct VaeModel {
    /// Encoder network. Its parameter store also holds the latent head and
    /// the decoder.
    pub backbone: BgnModel,
    enc_w: ParamId,
    enc_b: ParamId,
    dec: DecoderParams,
    pub dec_bn: [BatchNormState; 2],
}

/// Output of one encode/decode pass.
pub struct VaeForward<'t> {
    pub latent: LatentSample<'t>,
    /// `[B·n × S·W]`, see [`to_node_major`].
    pub recon: Var<'t>,
    /// `[B]`, normalized RUL.
    pub rul: Var<'t>,
    /// Decoder adjacency `[B·S × n × n]` used for message passing.
    pub adjacency: Var<'t>,
    /// Decoder edge probabilities `softmax(θ)` channel 0, `[B·S × n × n]`.
    pub edge_probs: Var<'t>,
    /// Encoder adjacency values `[B·S × n × n]`.
    pub enc_adjacency: Option<Tensor>,
}

/// Randomness of a decoder pass.
struct DecodePass<'a> {
    training: bool,
    gumbel: Option<&'a mut StreamRng>,
    dropout: &'a mut StreamRng,
}

impl VaeModel {
    /// Needs `ablation = none`; the latent size is `config.latent_dim`.
    pub fn new(config: &TrainConfig, n: usize) -> Result<Self> {
        if config.ablation != Ablation::None {
            return Err(BgnError::Config("the VAE needs the full model (ablation = none)".into()));
        }
        let mut backbone = BgnModel::new(config, n)?;
        let (d, dz, s, w, hidden) = (config.d, config.latent_dim, config.seq_len, config.window, config.hidden);
        let mut rng = stream(config.seed, Purpose::Init, 1);
        let st = &mut backbone.store;
        let enc_w = add_weight(st, &mut rng, "vae.enc.w", d, 2 * dz);
        let enc_b = add_bias(st, "vae.enc.b", 2 * dz);
        let dec = DecoderParams {
            w_in: add_weight(st, &mut rng, "vae.dec.in.w", dz, s * n * d),
            b_in: add_bias(st, "vae.dec.in.b", s * n * d),
            fc1_w: add_weight(st, &mut rng, "vae.dec.fc1.w", 2 * d, hidden),
            fc1_b: add_bias(st, "vae.dec.fc1.b", hidden),
            fc2_w: add_weight(st, &mut rng, "vae.dec.fc2.w", hidden, 2),
            fc2_b: add_bias(st, "vae.dec.fc2.b", 2),
            gnn: [
                GcnBlockParams::init(st, &mut rng, "vae.dec.gnn1", d),
                GcnBlockParams::init(st, &mut rng, "vae.dec.gnn2", d),
            ],
            gru: [
                GruParams::init(st, &mut rng, "vae.dec.gru1", 2 * d, d),
                GruParams::init(st, &mut rng, "vae.dec.gru2", d, d),
            ],
            w_out: add_weight(st, &mut rng, "vae.dec.out.w", d, w),
            b_out: add_bias(st, "vae.dec.out.b", w),
            rul_w: add_weight(st, &mut rng, "vae.dec.rul.w", d, 1),
            rul_b: add_bias(st, "vae.dec.rul.b", 1),
        };
        Ok(Self {
            backbone,
            enc_w,
            enc_b,
            dec,
            dec_bn: [BatchNormState::new(d), BatchNormState::new(d)],
        })
    }

    pub fn config(&self) -> &TrainConfig {
        self.backbone.config()
    }

    pub fn n(&self) -> usize {
        self.backbone.arch.n
    }

    /// Latent statistics of `x` (`[B·S·n × W]`) and the encoder adjacency.
    pub fn encode<'t>(
        &mut self,
        p: &Bound<'t>,
        x: &Tensor,
        batch: usize,
        pass: Pass<'_>,
        epsilon: Tensor,
    ) -> Result<(LatentSample<'t>, Option<Tensor>)> {
        let out = self.backbone.arch.forward(p, &mut self.backbone.bn, x, batch, pass)?;
        let stats = linear(out.h_g, p[self.enc_w], Some(p[self.enc_b]))?;
        let adjacency = out.adjacency.map(|a| (*a.value()).clone());
        Ok((reparameterize(stats, epsilon)?, adjacency))
    }

    /// Reconstruction `[B·n × S·W]`, RUL `[B]` and adjacency `[B·S×n×n]` from `z`.
    fn decode<'t>(
        &mut self,
        p: &Bound<'t>,
        z: Var<'t>,
        pass: DecodePass<'_>,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>, Var<'t>)> {
        let cfg = self.backbone.config();
        let (n, d, s) = (self.backbone.arch.n, cfg.d, cfg.seq_len);
        let batch = z.shape()[0];
        let graphs = batch * s;
        let dec = self.dec;
        let h0 = linear(z, p[dec.w_in], Some(p[dec.b_in]))?.reshape(&[graphs * n, d])?;
        let emb = p[self.backbone.arch.dgi.embeddings];
        let mlp = EdgeMlp {
            w1: p[dec.fc1_w],
            b1: p[dec.fc1_b],
            w2: p[dec.fc2_w],
            b2: p[dec.fc2_b],
        };
        let logits = pairwise_logits(emb, Some(h0), graphs, LogitVariant::Full, &mlp)?;
        let noise = pass.gumbel.map(|r| gumbel_noise(r, graphs, n));
        let gamma = match (&noise, cfg.eval_graph) {
            (None, EvalGraph::Expected) => 1.0,
            _ => cfg.gamma,
        };
        let adj = gumbel_softmax_adjacency(&logits, gamma, noise.as_ref())?;
        let probs = gumbel_softmax_adjacency(&logits, 1.0, None)?;
        let blocks = [dec.gnn[0].bind(p), dec.gnn[1].bind(p)];
        let mut reg = Regularization {
            training: pass.training,
            dropout: cfg.dropout,
            rng: pass.dropout,
        };
        let nodes = stacked_gnn(h0.reshape(&[graphs, n, d])?, adj, [&blocks[0], &blocks[1]], &mut self.dec_bn, &mut reg)?;
        let steps = temporal_gru_steps(
            nodes.reshape(&[batch, s, n, 2 * d])?,
            &dec.gru[0].bind(p),
            &dec.gru[1].bind(p),
        )?;
        let mut recon: Option<Var<'t>> = None;
        for h in &steps {
            let gated = h.mul_tile(emb)?.reshape(&[batch * n, d])?;
            let out = linear(gated, p[dec.w_out], Some(p[dec.b_out]))?.sigmoid()?;
            recon = Some(match recon {
                None => out,
                Some(r) => r.concat_lastdim(out)?,
            });
        }
        let last = *steps.last().expect("seq_len is positive");
        let rul = linear(graph_readout(last, emb)?, p[dec.rul_w], Some(p[dec.rul_b]))?
            .sigmoid()?
            .reshape(&[batch])?;
        Ok((recon.expect("seq_len is positive"), rul, adj, probs))
    }

    /// Full pass on a collated batch. `counter` keys the Gumbel, dropout and
    /// latent streams; `training = false` gives the deterministic path with
    /// `ε = 0`.
    pub fn forward<'t>(
        &mut self,
        p: &Bound<'t>,
        x: &Tensor,
        batch: usize,
        training: bool,
        counter: u64,
    ) -> Result<VaeForward<'t>> {
        let seed = self.config().seed;
        let dz = self.config().latent_dim;
        let epsilon = if training {
            let mut rng = stream(seed, Purpose::Latent, counter);
            Tensor::from_fn(&[batch, dz], |_| normal(&mut rng))
        } else {
            Tensor::zeros(&[batch, dz])
        };
        let mut g_enc = stream(seed, Purpose::Gumbel, counter);
        let mut d_enc = stream(seed, Purpose::Dropout, counter);
        let mut g_dec = stream(seed, Purpose::Gumbel, counter | (1 << 40));
        let mut d_dec = stream(seed, Purpose::Dropout, counter | (1 << 40));
        let pass = Pass {
            training,
            gumbel: training.then_some(&mut g_enc),
            dropout: &mut d_enc,
        };
        let (latent, enc_adjacency) = self.encode(p, x, batch, pass, epsilon)?;
        let dpass = DecodePass {
            training,
            gumbel: training.then_some(&mut g_dec),
            dropout: &mut d_dec,
        };
        let (recon, rul, adjacency, edge_probs) = self.decode(p, latent.z, dpass)?;
        Ok(VaeForward {
            latent,
            recon,
            rul,
            adjacency,
            edge_probs,
            enc_adjacency,
        })
    }
}

/// Eval-mode latent statistics (`ε = 0`, so `z = μ`) of `samples`.
pub fn vae_encode(model: &mut VaeModel, samples: &[&WindowSequenceSample]) -> Result<(Tensor, Tensor)> {
    if samples.is_empty() {
        return invalid("vae_encode on no samples");
    }
    let (x, _) = collate(samples);
    let tape = Tape::new();
    let p = model.backbone.store.bind(&tape);
    let dz = model.config().latent_dim;
    let mut unused = stream(0, Purpose::Dropout, 0);
    let (lat, _) = model.encode(&p, &x, samples.len(), Pass::eval(&mut unused), Tensor::zeros(&[samples.len(), dz]))?;
    Ok(((*lat.mu.value()).clone(), (*lat.sigma.value()).clone()))
}

/// Negative ELBO plus the squared error of the RUL head. Returns the total
/// and the parts `(recon, kl, bce, label)`.
fn batch_loss<'t>(
    model: &mut VaeModel,
    p: &Bound<'t>,
    batch: &[&WindowSequenceSample],
    counter: u64,
) -> Result<(Var<'t>, [f64; 4])> {
    let cfg = model.config().clone();
    let (x, y) = collate(batch);
    let out = model.forward(p, &x, batch.len(), true, counter)?;
    let target = to_node_major(&x, batch.len(), cfg.seq_len, model.n(), cfg.window)?;
    let enc_adj = out.enc_adjacency.as_ref();
    let elbo = vae_elbo(
        &target,
        out.recon,
        out.latent.mu,
        out.latent.sigma,
        enc_adj.map(|a| (a, out.edge_probs)),
    )?;
    let label = mse_loss(out.rul, &y)?;
    let parts = [elbo.recon, elbo.kl, elbo.bce, label.item()];
    Ok((elbo.loss.add(label)?, parts))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
    pub bce: f64,
    pub label: f64,
}

pub struct VaeRun {
    pub model: VaeModel,
    pub curve: Vec<VaeEpoch>,
}

fn recalibrate(model: &mut VaeModel, samples: &[&WindowSequenceSample], batch_size: usize, counter: u64) -> Result<()> {
    let mut enc = model.backbone.bn.clone();
    let mut dec = model.dec_bn.clone();
    enc.iter_mut().chain(dec.iter_mut()).for_each(BatchNormState::begin_calibration);
    std::mem::swap(&mut model.backbone.bn, &mut enc);
    std::mem::swap(&mut model.dec_bn, &mut dec);
    let result = samples.chunks(batch_size).enumerate().try_for_each(|(i, chunk)| {
        let (x, _) = collate(chunk);
        let tape = Tape::new();
        let p = model.backbone.store.bind(&tape);
        model.forward(&p, &x, chunk.len(), true, counter + i as u64).map(|_| ())
    });
    if let Err(e) = result {
        model.backbone.bn = enc;
        model.dec_bn = dec;
        return Err(e);
    }
    model
        .backbone
        .bn
        .iter_mut()
        .chain(model.dec_bn.iter_mut())
        .for_each(BatchNormState::end_calibration);
    Ok(())
}

/// Trains for `config.max_epochs` epochs with Adam at `config.lr`.
pub fn train_vae(config: &TrainConfig, samples: &[WindowSequenceSample]) -> Result<VaeRun> {
    config.validate()?;
    let first = samples.first().ok_or_else(|| BgnError::Data("no training samples for the VAE".into()))?;
    let fs = first.features.shape();
    if fs.len() != 3 || fs[0] != config.seq_len || fs[2] != config.window {
        return Err(BgnError::Data(format!(
            "samples are {fs:?}, config expects [{} × n × {}]",
            config.seq_len, config.window
        )));
    }
    if samples.iter().any(|s| s.features.shape() != fs) {
        return Err(BgnError::Data("samples differ in shape".into()));
    }
    let mut model = VaeModel::new(config, fs[1])?;
    let mut adam = AdamState::new(&model.backbone.store, config.lr);
    let mut curve = Vec::with_capacity(config.max_epochs);
    let all: Vec<&WindowSequenceSample> = samples.iter().collect();
    for epoch in 1..=config.max_epochs {
        let order = permutation(&mut stream(config.seed, Purpose::Shuffle, epoch as u64), samples.len());
        let mut sums = [0.0; 5];
        let mut batches = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&WindowSequenceSample> = idx.iter().map(|&i| &samples[i]).collect();
            let counter = ((epoch as u64) << 24) | b as u64;
            let diverged = |e: BgnError| match e {
                BgnError::NonFinite { op } => BgnError::Divergence {
                    epoch,
                    batch: b,
                    msg: format!("non-finite {op}"),
                },
                other => other,
            };
            let tape = Tape::new();
            let p = model.backbone.store.bind(&tape);
            let (loss, parts) = batch_loss(&mut model, &p, &batch, counter).map_err(diverged)?;
            let value = loss.item();
            let mut grads = p.grads(&tape.backward(loss).map_err(diverged)?);
            if let Some(c) = config.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_step(&mut model.backbone.store, &grads, &mut adam)?;
            sums[0] += value;
            for (s, v) in sums[1..].iter_mut().zip(parts) {
                *s += v;
            }
            batches += 1;
        }
        if config.bn_recalibration {
            recalibrate(&mut model, &all, config.batch_size, ((epoch as u64) << 24) | (1 << 23))?;
        }
        let k = batches as f64;
        let point = VaeEpoch {
            epoch,
            loss: sums[0] / k,
            recon: sums[1] / k,
            kl: sums[2] / k,
            bce: sums[3] / k,
            label: sums[4] / k,
        };
        log::debug!("vae epoch {epoch}: loss {:.6}", point.loss);
        curve.push(point);
    }
    Ok(VaeRun { model, curve })
}

/// `count` labelled window sequences decoded from `z ~ N(0, I)` drawn from
/// the latent stream of `seed`, in normalized feature space. Battery ids
/// are `vae00000`, `vae00001`, …
pub fn vae_generate(model: &mut VaeModel, count: usize, seed: u64) -> Result<Vec<WindowSequenceSample>> {
    let cfg = model.config().clone();
    let (n, dz) = (model.n(), cfg.latent_dim);
    let mut rng = stream(seed, Purpose::Latent, GENERATE_COUNTER);
    let z_all: Vec<f64> = (0..count * dz).map(|_| normal(&mut rng)).collect();
    let mut out = Vec::with_capacity(count);
    for start in (0..count).step_by(cfg.batch_size) {
        let b = cfg.batch_size.min(count - start);
        let z = Tensor::new(vec![b, dz], z_all[start * dz..(start + b) * dz].to_vec())?;
        let tape = Tape::new();
        let p = model.backbone.store.bind(&tape);
        let mut unused = stream(seed, Purpose::Dropout, GENERATE_COUNTER);
        let pass = DecodePass {
            training: false,
            gumbel: None,
            dropout: &mut unused,
        };
        let (recon, rul, _, _) = model.decode(&p, tape.constant(z), pass)?;
        let windows = to_window_major(&recon.value(), b, cfg.seq_len, n, cfg.window)?;
        let rul = rul.value();
        for (k, features) in windows.into_iter().enumerate() {
            let idx = start + k;
            out.push(WindowSequenceSample {
                features,
                target: rul.data()[k],
                battery_id: format!("vae{idx:05}"),
                end_index: idx,
            });
        }
    }
    Ok(out)
}
