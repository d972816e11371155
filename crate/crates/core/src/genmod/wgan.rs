//! Adversarial imputation of missing sensor readings.
//!
//! The generator sees one window at a time: node `i` gets `[x̃_i ‖ m_i]`
//! (observed values with noise in the holes, then the mask), projected to
//! `d` dimensions. A graph is inferred over the projected nodes with the
//! usual edge network and node embeddings, one GCN layer mixes them, and a
//! linear map from `[GCN output ‖ projection]` followed by a sigmoid gives a
//! full window. The discriminator is an MLP over the flattened composed
//! window that predicts, per entry, the probability that it was observed.
//!
//! Losses per batch:
//! * D: binary cross-entropy of `D(x̂)` against `m`.
//! * G: `−mean((1 − m) ⊙ ln D(x̂)) + λ · mean(m ⊙ (x − G)²)`.

use serde::{Deserialize, Serialize};

use crate::data::{group_by_battery, BatteryRecord, NormalizationStats, N_PARAMS};
use crate::error::{invalid, shape_err, BgnError, Result};
use crate::grapher::gcn_layer;
use crate::graph_inference::{gumbel_noise, gumbel_softmax_adjacency, pairwise_logits, EdgeMlp, LogitVariant};
use crate::init::{add_bias, add_embeddings, add_weight};
use crate::rng::{stream, uniform, Purpose, StreamRng};
use crate::tensor::nn::linear;
use crate::tensor::optim::{adam_step, clip_global_norm, AdamState};
use crate::tensor::{Bound, ParamId, ParamStore, Tape, Tensor, Var};

use super::vae::bce_loss;

/// Value given to missing entries at imputation time (the midpoint of the
/// training noise range).
const IMPUTE_FILL: f64 = 0.005;
const LN_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WganConfig {
    pub d: usize,
    /// Width of the edge network and of the discriminator's hidden layer.
    pub hidden: usize,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Probability that an entry stays observed in a training mask.
    pub observed_rate: f64,
    /// Upper end of the uniform noise put into missing entries.
    pub noise_scale: f64,
    /// Weight of the reconstruction term in the generator loss.
    pub alpha: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for WganConfig {
    fn default() -> Self {
        Self {
            d: 32,
            hidden: 32,
            gamma: crate::graph_inference::DEFAULT_TEMPERATURE,
            lr: 1e-3,
            batch_size: 48,
            steps: 200,
            observed_rate: 0.8,
            noise_scale: 0.01,
            alpha: 10.0,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl WganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(BgnError::Config("`d`, `hidden` and `batch_size` must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.gamma > 0.0) || !(self.alpha >= 0.0) || !(self.noise_scale >= 0.0) {
            return Err(BgnError::Config("`lr` and `gamma` must be positive, `alpha` and `noise_scale` non-negative".into()));
        }
        if !(self.observed_rate > 0.0 && self.observed_rate <= 1.0) {
            return Err(BgnError::Config(format!("`observed_rate` must lie in (0, 1], got {}", self.observed_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct GenParams {
    w_in: ParamId,
    b_in: ParamId,
    embeddings: ParamId,
    fc1_w: ParamId,
    fc1_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
    w_g: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct DiscParams {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Generator and discriminator with separate parameter stores.
pub struct WganModel {
    pub config: WganConfig,
    pub n: usize,
    pub window: usize,
    pub g_store: ParamStore,
    pub d_store: ParamStore,
    g: GenParams,
    d: DiscParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WganStep {
    pub step: usize,
    pub d_loss: f64,
    pub g_adversarial: f64,
    pub g_reconstruction: f64,
    /// Mean discriminator output on observed entries minus the mean on
    /// imputed entries.
    pub critic_gap: f64,
}

fn check_binary(m: &Tensor) -> Result<()> {
    if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return invalid("mask entries must be 0 or 1");
    }
    Ok(())
}

impl WganModel {
    pub fn new(config: &WganConfig, n: usize, window: usize) -> Result<Self> {
        config.validate()?;
        if n < 2 || window == 0 {
            return invalid(format!("imputation needs n ≥ 2 nodes and a positive window, got n={n}, W={window}"));
        }
        let (d, h) = (config.d, config.hidden);
        let mut rng = stream(config.seed, Purpose::Init, 2);
        let mut g_store = ParamStore::new();
        let s = &mut g_store;
        let g = GenParams {
            w_in: add_weight(s, &mut rng, "gen.in.w", 2 * window, d),
            b_in: add_bias(s, "gen.in.b", d),
            embeddings: add_embeddings(s, &mut rng, "gen.embeddings", n, d),
            fc1_w: add_weight(s, &mut rng, "gen.fc1.w", 2 * d, h),
            fc1_b: add_bias(s, "gen.fc1.b", h),
            fc2_w: add_weight(s, &mut rng, "gen.fc2.w", h, 2),
            fc2_b: add_bias(s, "gen.fc2.b", 2),
            w_g: add_weight(s, &mut rng, "gen.gcn.w", d, d),
            w_out: add_weight(s, &mut rng, "gen.out.w", 2 * d, window),
            b_out: add_bias(s, "gen.out.b", window),
        };
        let mut d_store = ParamStore::new();
        let flat = n * window;
        let dp = DiscParams {
            w1: add_weight(&mut d_store, &mut rng, "disc.w1", flat, h),
            b1: add_bias(&mut d_store, "disc.b1", h),
            w2: add_weight(&mut d_store, &mut rng, "disc.w2", h, flat),
            b2: add_bias(&mut d_store, "disc.b2", flat),
        };
        Ok(Self {
            config: config.clone(),
            n,
            window,
            g_store,
            d_store,
            g,
            d: dp,
        })
    }

    fn check(&self, x: &Tensor, m: &Tensor) -> Result<usize> {
        let (n, w) = (self.n, self.window);
        if x.rank() != 3 || x.shape()[1..] != [n, w] || m.shape() != x.shape() {
            return shape_err("wgan", format!("x {:?}, m {:?}, expected [B × {n} × {w}]", x.shape(), m.shape()));
        }
        check_binary(m)?;
        Ok(x.shape()[0])
    }

    /// Raw generator output `[B·n × W]` for inputs `x̃` and masks `m`
    /// (`[B × n × W]`). Gumbel noise is drawn when `gumbel` is set.
    fn generate<'t>(&self, p: &Bound<'t>, x_tilde: &Tensor, m: &Tensor, gumbel: Option<&mut StreamRng>) -> Result<Var<'t>> {
        let (n, w, d) = (self.n, self.window, self.config.d);
        let b = x_tilde.shape()[0];
        let (xd, md) = (x_tilde.data(), m.data());
        let input = Tensor::from_fn(&[b * n, 2 * w], |k| {
            let (row, col) = (k / (2 * w), k % (2 * w));
            if col < w {
                xd[row * w + col]
            } else {
                md[row * w + col - w]
            }
        });
        let tape = p[self.g.w_in].tape();
        let h0 = linear(tape.constant(input), p[self.g.w_in], Some(p[self.g.b_in]))?;
        let mlp = EdgeMlp {
            w1: p[self.g.fc1_w],
            b1: p[self.g.fc1_b],
            w2: p[self.g.fc2_w],
            b2: p[self.g.fc2_b],
        };
        let logits = pairwise_logits(p[self.g.embeddings], Some(h0), b, LogitVariant::Full, &mlp)?;
        let noise = gumbel.map(|r| gumbel_noise(r, b, n));
        let adj = gumbel_softmax_adjacency(&logits, self.config.gamma, noise.as_ref())?;
        let h1 = gcn_layer(h0.reshape(&[b, n, d])?, adj, p[self.g.w_g])?.reshape(&[b * n, d])?;
        linear(h1.concat_lastdim(h0)?, p[self.g.w_out], Some(p[self.g.b_out]))?.sigmoid()
    }

    /// Per-entry probability of being observed, `[B × n·W]`.
    fn discriminate<'t>(&self, q: &Bound<'t>, x_hat: Var<'t>) -> Result<Var<'t>> {
        let b = x_hat.shape()[0] / self.n;
        let flat = x_hat.reshape(&[b, self.n * self.window])?;
        let h = linear(flat, q[self.d.w1], Some(q[self.d.b1]))?.relu()?;
        linear(h, q[self.d.w2], Some(q[self.d.b2]))?.sigmoid()
    }

    /// Discriminator probabilities for complete windows `x` (`[B × n × W]`).
    pub fn discriminator_probs(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let q = self.d_store.bind(&tape);
        let xv = tape.constant(x.clone().reshape(&[x.len() / self.window, self.window])?);
        Ok((*self.discriminate(&q, xv)?.value()).clone())
    }
}

/// Bernoulli mask with `P(1) = observed_rate`.
pub fn bernoulli_mask(shape: &[usize], observed_rate: f64, rng: &mut StreamRng) -> Tensor {
    Tensor::from_fn(shape, |_| if uniform(rng, 0.0, 1.0) < observed_rate { 1.0 } else { 0.0 })
}

/// Composition `m ⊙ x + (1 − m) ⊙ g`, exact on observed entries.
pub fn compose(x: &Tensor, m: &Tensor, g: &Tensor) -> Result<Tensor> {
    if x.shape() != m.shape() || x.len() != g.len() {
        return shape_err("compose", format!("x {:?}, m {:?}, g {:?}", x.shape(), m.shape(), g.shape()));
    }
    check_binary(m)?;
    let (xd, md, gd) = (x.data(), m.data(), g.data());
    Ok(Tensor::from_fn(x.shape(), |k| if md[k] == 1.0 { xd[k] } else { gd[k] }))
}

/// Fills the entries of `x` (`[B × n × W]`) where `m` is 0 with generator
/// output. Entries where `m` is 1 are copied unchanged.
pub fn wgan_impute(x: &Tensor, m: &Tensor, model: &WganModel) -> Result<Tensor> {
    model.check(x, m)?;
    let (xd, md) = (x.data(), m.data());
    let x_tilde = Tensor::from_fn(x.shape(), |k| if md[k] == 1.0 { xd[k] } else { IMPUTE_FILL });
    let tape = Tape::new();
    let p = model.g_store.bind(&tape);
    let g = model.generate(&p, &x_tilde, m, None)?;
    compose(x, m, &g.value())
}

/// Complete windows, their mask (1 = observed) and the noise put into the
/// holes, all `[B × n × W]`.
#[derive(Debug, Clone)]
pub struct MaskedBatch {
    pub x: Tensor,
    pub m: Tensor,
    pub z_noise: Tensor,
}

impl MaskedBatch {
    pub fn new(x: Tensor, m: Tensor, z_noise: Tensor) -> Result<Self> {
        if x.rank() != 3 || m.shape() != x.shape() || z_noise.shape() != x.shape() {
            return shape_err(
                "MaskedBatch",
                format!("x {:?}, m {:?}, z {:?}", x.shape(), m.shape(), z_noise.shape()),
            );
        }
        check_binary(&m)?;
        Ok(Self { x, m, z_noise })
    }

    /// Draws hole noise `U(0, scale)` for every entry.
    pub fn with_uniform_noise(x: Tensor, m: Tensor, scale: f64, rng: &mut StreamRng) -> Result<Self> {
        let z = Tensor::from_fn(x.shape(), |_| uniform(rng, 0.0, scale));
        Self::new(x, m, z)
    }

    /// Generator input `m ⊙ x + (1 − m) ⊙ z`.
    pub fn generator_input(&self) -> Tensor {
        let (xd, md, zd) = (self.x.data(), self.m.data(), self.z_noise.data());
        Tensor::from_fn(self.x.shape(), |k| if md[k] == 1.0 { xd[k] } else { zd[k] })
    }
}

/// Adam states of both networks.
pub struct WganOptim {
    pub g: AdamState,
    pub d: AdamState,
}

impl WganOptim {
    pub fn new(model: &WganModel) -> Self {
        Self {
            g: AdamState::new(&model.g_store, model.config.lr),
            d: AdamState::new(&model.d_store, model.config.lr),
        }
    }
}

/// One discriminator update followed by one generator update. `counter`
/// keys the Gumbel streams.
pub fn wgan_train_step(model: &mut WganModel, batch: &MaskedBatch, opt: &mut WganOptim, counter: u64) -> Result<WganStep> {
    model.check(&batch.x, &batch.m)?;
    let (mut gg, mut dg, stats) = step_gradients(model, batch, counter)?;
    if !(stats.d_loss.is_finite() && stats.g_adversarial.is_finite() && stats.g_reconstruction.is_finite()) {
        return Err(BgnError::NonFinite { op: "imputation loss".into() });
    }
    if let Some(c) = model.config.clip_norm {
        clip_global_norm(&mut gg, c);
        clip_global_norm(&mut dg, c);
    }
    adam_step(&mut model.d_store, &dg, &mut opt.d)?;
    adam_step(&mut model.g_store, &gg, &mut opt.g)?;
    Ok(stats)
}

/// Gradients of both networks on one batch. Returns `(g_grads, d_grads, stats)`.
fn step_gradients(model: &WganModel, batch: &MaskedBatch, counter: u64) -> Result<(Vec<Tensor>, Vec<Tensor>, WganStep)> {
    let cfg = &model.config;
    let (x, m) = (&batch.x, &batch.m);
    let x_tilde = batch.generator_input();
    let b = x.shape()[0];
    let rows = [b * model.n, model.window];
    let inv = m.map(|v| 1.0 - v);
    let xm = Tensor::from_fn(x.shape(), |k| x.data()[k] * m.data()[k]);
    let m_flat = m.clone().reshape(&[b, model.n * model.window])?;

    // Discriminator step on a detached composition.
    let (d_grads, d_loss, gap) = {
        let tape = Tape::new();
        let p = model.g_store.bind(&tape);
        let q = model.d_store.bind(&tape);
        let mut gumbel = stream(cfg.seed, Purpose::Gumbel, counter);
        let g = model.generate(&p, &x_tilde, m, Some(&mut gumbel))?;
        let x_hat = tape.constant(compose(x, m, &g.value())?.reshape(&rows)?);
        let probs = model.discriminate(&q, x_hat)?;
        let loss = bce_loss(probs, &m_flat, None)?;
        let pv = probs.value();
        let (mut obs, mut miss, mut n_obs, mut n_miss) = (0.0, 0.0, 0.0, 0.0);
        for (&pr, &mk) in pv.data().iter().zip(m.data()) {
            if mk == 1.0 {
                obs += pr;
                n_obs += 1.0;
            } else {
                miss += pr;
                n_miss += 1.0;
            }
        }
        let gap = if n_obs > 0.0 && n_miss > 0.0 { obs / n_obs - miss / n_miss } else { 0.0 };
        let value = loss.item();
        (q.grads(&tape.backward(loss)?), value, gap)
    };

    // Generator step through the discriminator.
    let tape = Tape::new();
    let p = model.g_store.bind(&tape);
    let q = model.d_store.bind(&tape);
    let mut gumbel = stream(cfg.seed, Purpose::Gumbel, counter | (1 << 40));
    let g = model.generate(&p, &x_tilde, m, Some(&mut gumbel))?;
    let inv_rows = inv.clone().reshape(&rows)?;
    let x_hat = g.mul_const(&inv_rows)?.add_const(&xm.clone().reshape(&rows)?)?;
    let probs = model.discriminate(&q, x_hat)?;
    let total = inv.len() as f64;
    let adversarial = probs
        .scale(1.0 - 2.0 * LN_EPS)?
        .shift(LN_EPS)?
        .ln()?
        .mul_const(&inv.clone().reshape(&[b, model.n * model.window])?)?
        .sum()?
        .scale(-1.0 / total)?;
    let m_rows = m.clone().reshape(&rows)?;
    let reconstruction = g
        .mul_const(&m_rows)?
        .add_const(&xm.reshape(&rows)?.map(|v| -v))?
        .square()?
        .mean()?;
    let loss = adversarial.add(reconstruction.scale(cfg.alpha)?)?;
    let stats = WganStep {
        step: 0,
        d_loss,
        g_adversarial: adversarial.item(),
        g_reconstruction: reconstruction.item(),
        critic_gap: gap,
    };
    let g_grads = p.grads(&tape.backward(loss)?);
    Ok((g_grads, d_grads, stats))
}

/// Trains on windows `data` (`[N × n × W]`). Each step draws a batch of
/// windows, a Bernoulli training mask and hole noise from seeded streams.
/// When `observed` is given, entries where it is 0 are never shown to
/// either network: the training mask is its product with the random mask.
pub fn train_wgan(model: &mut WganModel, data: &Tensor, observed: Option<&Tensor>) -> Result<Vec<WganStep>> {
    let (n, w) = (model.n, model.window);
    if data.rank() != 3 || data.shape()[1..] != [n, w] || data.shape()[0] == 0 {
        return Err(BgnError::Data(format!("imputation data {:?}, expected [N × {n} × {w}]", data.shape())));
    }
    if let Some(o) = observed {
        if o.shape() != data.shape() {
            return shape_err("train_wgan", format!("mask {:?} vs data {:?}", o.shape(), data.shape()));
        }
        check_binary(o)?;
    }
    let cfg = model.config.clone();
    let count = data.shape()[0];
    let per = n * w;
    let mut opt = WganOptim::new(model);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let counter = step as u64;
        let mut pick = stream(cfg.seed, Purpose::Shuffle, counter);
        let b = cfg.batch_size.min(count);
        let idx: Vec<usize> = (0..b).map(|_| (uniform(&mut pick, 0.0, count as f64) as usize).min(count - 1)).collect();
        let gather = |t: &Tensor| {
            let mut v = Vec::with_capacity(b * per);
            for &i in &idx {
                v.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
            }
            Tensor::new(vec![b, n, w], v)
        };
        let x = gather(data)?;
        let mut m = bernoulli_mask(&[b, n, w], cfg.observed_rate, &mut stream(cfg.seed, Purpose::Mask, counter));
        if let Some(o) = observed {
            let o = gather(o)?;
            m = Tensor::from_fn(m.shape(), |k| m.data()[k] * o.data()[k]);
        }
        let diverged = |e: BgnError| match e {
            BgnError::NonFinite { op } => BgnError::Divergence {
                epoch: 1,
                batch: step,
                msg: format!("non-finite {op}"),
            },
            other => other,
        };
        let batch = MaskedBatch::with_uniform_noise(x, m, cfg.noise_scale, &mut stream(cfg.seed, Purpose::Noise, counter))?;
        let mut stats = wgan_train_step(model, &batch, &mut opt, counter).map_err(diverged)?;
        stats.step = step;
        log.push(stats);
    }
    Ok(log)
}

/// Root mean squared error over entries where `m` is 0.
pub fn masked_rmse(truth: &Tensor, estimate: &Tensor, m: &Tensor) -> Result<f64> {
    if truth.shape() != estimate.shape() || truth.shape() != m.shape() {
        return shape_err("masked_rmse", format!("{:?}, {:?}, {:?}", truth.shape(), estimate.shape(), m.shape()));
    }
    let (mut s, mut c) = (0.0, 0usize);
    for k in 0..truth.len() {
        if m.data()[k] == 0.0 {
            s += (truth.data()[k] - estimate.data()[k]).powi(2);
            c += 1;
        }
    }
    if c == 0 {
        return invalid("no missing entries");
    }
    Ok((s / c as f64).sqrt())
}

/// Baseline fill: each node's mean over its observed entries across all
/// windows (0.5 when a node has none).
pub fn mean_impute(x: &Tensor, m: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 || m.shape() != x.shape() {
        return shape_err("mean_impute", format!("x {:?}, m {:?}", x.shape(), m.shape()));
    }
    check_binary(m)?;
    let (n, w) = (x.shape()[1], x.shape()[2]);
    let mut sums = vec![(0.0, 0.0); n];
    for k in 0..x.len() {
        if m.data()[k] == 1.0 {
            let node = (k / w) % n;
            sums[node].0 += x.data()[k];
            sums[node].1 += 1.0;
        }
    }
    let means: Vec<f64> = sums.iter().map(|&(s, c)| if c > 0.0 { s / c } else { 0.5 }).collect();
    let fill = Tensor::from_fn(x.shape(), |k| means[(k / w) % n]);
    compose(x, m, &fill)
}

/// Normalized windows cut from battery records for imputation.
#[derive(Debug, Clone)]
pub struct RecordWindows {
    /// `[N × n × W]`, channels as nodes.
    pub x: Tensor,
    /// Record index behind each (window, step), `N·W` entries.
    pub rows: Vec<usize>,
}

/// Non-overlapping windows of `window` steps per battery; a final partial
/// window is aligned to the battery's last step, so it overlaps its
/// predecessor. Batteries shorter than `window` are skipped.
pub fn record_windows(records: &[BatteryRecord], stats: &NormalizationStats, window: usize) -> Result<RecordWindows> {
    if window == 0 {
        return invalid("window must be positive");
    }
    let mut data = Vec::new();
    let mut rows = Vec::new();
    let mut offset = 0;
    for battery in group_by_battery(records) {
        let len = battery.len();
        if len >= window {
            let mut starts: Vec<usize> = (0..=len - window).step_by(window).collect();
            if starts.last() != Some(&(len - window)) {
                starts.push(len - window);
            }
            for s in starts {
                for k in 0..N_PARAMS {
                    data.extend(battery[s..s + window].iter().map(|r| stats.normalize(k, r.features()[k]).0));
                }
                rows.extend(offset + s..offset + s + window);
            }
        }
        offset += len;
    }
    if rows.is_empty() {
        return Err(BgnError::Data(format!("no battery has {window} records")));
    }
    let count = rows.len() / window;
    Ok(RecordWindows {
        x: Tensor::new(vec![count, N_PARAMS, window], data)?,
        rows,
    })
}

/// Writes windows (`[N × n × W]`, normalized) back into copies of the
/// records, denormalizing. When windows overlap, the later one wins.
pub fn records_from_windows(
    records: &[BatteryRecord],
    windows: &RecordWindows,
    values: &Tensor,
    stats: &NormalizationStats,
) -> Result<Vec<BatteryRecord>> {
    if values.shape() != windows.x.shape() {
        return shape_err("records_from_windows", format!("{:?} vs {:?}", values.shape(), windows.x.shape()));
    }
    let w = windows.x.shape()[2];
    let mut out = records.to_vec();
    for (c, chunk) in windows.rows.chunks(w).enumerate() {
        for (t, &r) in chunk.iter().enumerate() {
            let rec = out.get_mut(r).ok_or_else(|| BgnError::Data("window refers to a missing record".into()))?;
            let mut f = rec.features();
            for (k, v) in f.iter_mut().enumerate() {
                *v = stats.denormalize(k, values.get(&[c, k, t]));
            }
            rec.set_features(f);
        }
    }
    Ok(out)
}

/// Smooth multichannel test signal in `[0.1, 0.9]`, `[count × n × W]`.
/// Each window has its own phase and amplitude; channel `i` is shifted by
/// `i·π/3`.
pub fn sinusoid_windows(count: usize, n: usize, window: usize, seed: u64) -> Tensor {
    let mut rng = stream(seed, Purpose::Synth, 0);
    let params: Vec<(f64, f64)> = (0..count)
        .map(|_| (uniform(&mut rng, 0.0, std::f64::consts::TAU), uniform(&mut rng, 0.2, 0.4)))
        .collect();
    Tensor::from_fn(&[count, n, window], |k| {
        let (c, i, t) = (k / (n * window), (k / window) % n, k % window);
        let (phase, amp) = params[c];
        let arg = std::f64::consts::TAU * t as f64 / window as f64 + phase + i as f64 * std::f64::consts::FRAC_PI_3;
        0.5 + amp * arg.sin()
    })
}
