//! Acceptance suite: one test per criterion, each printing a single
//! `[PASS]`/`[FAIL]` line (written straight to stdout so it shows without
//! `--nocapture`).
//!
//! `cargo test --release -p bgn-cli --test acceptance`

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::rc::Rc;
use std::time::Instant;

use bgn::checkpoint;
use bgn::config::{Ablation, TrainConfig, Variant};
use bgn::data::{
    inject_label_noise, make_windows, select_batteries, synth_degradation, NormalizationStats,
    WindowSequenceSample,
};
use bgn::genmod::{
    bernoulli_mask, kl_divergence, masked_rmse, mean_impute, sinusoid_windows, train_vae, train_wgan, vae_generate,
    wgan_impute, WganConfig, WganModel,
};
use bgn::grapher::{gcn_layer, stacked_gnn, temporal_gru, GcnBlockParams, GruParams, Regularization};
use bgn::graph_inference::{gumbel_noise, gumbel_softmax_adjacency, gumbel_softmax_channels, EdgeLogits, DEFAULT_TEMPERATURE};
use bgn::model::{BgnModel, Pass};
use bgn::objectives::{approximation_error_table, gaussian_nll_loss, mae, mse_loss, rmse, APPROX_THRESHOLDS};
use bgn::parallel::available_jobs;
use bgn::readout::graph_readout;
use bgn::rng::{normal, permutation, stream, uniform, Purpose, StreamRng};
use bgn::tensor::nn::{batchnorm, dropout, gru_cell, linear, BatchNormState, GruWeights};
use bgn::tensor::{grad_check, ParamStore, Tape, Tensor, Var};
use bgn::trainer::{evaluate, predict, prepare_splits, run_ablations, train_one};

fn report(id: u32, name: &str, pass: bool, detail: String, started: Instant) {
    let line = format!(
        "[{}] criterion {id:>2} {name}: {detail} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    assert!(pass, "{line}");
}

fn random(rng: &mut StreamRng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| normal(rng))
}

/// Scalar probe of a non-scalar output: a fixed, uneven weighted sum.
fn probe(v: Var<'_>) -> bgn::Result<Var<'_>> {
    let w = Tensor::from_fn(&v.shape(), |k| ((k * 7919 % 13) as f64 - 6.0) / 6.0 + 0.05);
    v.mul_const(&w)?.sum()
}

// ---------------------------------------------------------------------------
// 1. gradients

type Op = Box<dyn for<'t> Fn(&'t Tape, Var<'t>) -> bgn::Result<Var<'t>>>;

fn op<F>(f: F) -> Op
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> bgn::Result<Var<'t>> + 'static,
{
    Box::new(f)
}

#[derive(Clone, Copy)]
enum Domain {
    Any,
    Positive,
    /// Kept away from the ReLU kink.
    OffZero,
}

fn draw(rng: &mut StreamRng, shape: &[usize], domain: Domain) -> Tensor {
    Tensor::from_fn(shape, |_| match domain {
        Domain::Any => normal(rng),
        Domain::Positive => uniform(rng, 0.2, 2.0),
        Domain::OffZero => {
            let v = uniform(rng, 0.1, 2.0);
            if uniform(rng, 0.0, 1.0) < 0.5 {
                -v
            } else {
                v
            }
        }
    })
}

fn gru_weights<'t>(t: &'t Tape, w: &[Tensor]) -> GruWeights<'t> {
    let v: Vec<Var<'t>> = w.iter().map(|p| t.leaf(p.clone())).collect();
    GruWeights {
        w_z: v[0],
        u_z: v[1],
        b_z: v[2],
        w_r: v[3],
        u_r: v[4],
        b_r: v[5],
        w_h: v[6],
        u_h: v[7],
        b_h: v[8],
    }
}

/// Every differentiable primitive, with fixed side operands drawn from `rng`.
fn primitive_ops(rng: &mut StreamRng) -> Vec<(&'static str, Vec<usize>, Domain, Op)> {
    let a34 = random(rng, &[3, 4]);
    let pos34 = draw(rng, &[3, 4], Domain::Positive);
    let row4 = random(rng, &[4]);
    let m45 = random(rng, &[4, 5]);
    let m35 = random(rng, &[3, 4]);
    let g243 = random(rng, &[2, 4, 3]);
    let g254 = random(rng, &[2, 5, 4]);
    let w44 = random(rng, &[4, 4]);
    let gru: Vec<Tensor> = [&[4, 3][..], &[3, 3], &[3]]
        .iter()
        .cycle()
        .take(9)
        .map(|s| random(rng, s).map(|v| 0.5 * v))
        .collect();
    let h23 = random(rng, &[2, 3]).map(|v| 0.5 * v);
    let x24 = random(rng, &[2, 4]);
    let y5 = random(rng, &[5]);
    let var5 = draw(rng, &[5], Domain::Positive);
    let mu5 = random(rng, &[5]);
    let y6 = random(rng, &[6]);
    let emb43 = random(rng, &[4, 3]);
    let adj = Tensor::from_fn(&[2, 4, 4], |k| if (k / 4) % 4 == k % 4 { 0.0 } else { uniform(rng, 0.0, 1.0) });
    let w33 = random(rng, &[3, 3]);
    let gum = gumbel_noise(rng, 1, 3);
    let gamma4 = draw(rng, &[4], Domain::Positive);
    let beta4 = random(rng, &[4]);

    macro_rules! with {
        ($($v:ident),* => $body:expr) => {{
            $(let $v = $v.clone();)*
            op($body)
        }};
    }

    vec![
        ("add", vec![3, 4], Domain::Any, with!(a34 => move |t, x| probe(x.add(t.leaf(a34.clone()))?))),
        ("sub", vec![3, 4], Domain::Any, with!(a34 => move |t, x| probe(t.leaf(a34.clone()).sub(x)?))),
        ("mul", vec![3, 4], Domain::Any, with!(a34 => move |t, x| probe(x.mul(x.add(t.leaf(a34.clone()))?)?))),
        ("div/num", vec![3, 4], Domain::Any, with!(pos34 => move |t, x| probe(x.div(t.leaf(pos34.clone()))?))),
        ("div/den", vec![3, 4], Domain::Positive, with!(a34 => move |t, x| probe(t.leaf(a34.clone()).div(x)?))),
        ("add_tile/tile", vec![4], Domain::Any, with!(a34 => move |t, x| probe(t.leaf(a34.clone()).add_tile(x)?.square()?))),
        ("mul_tile/base", vec![3, 4], Domain::Any, with!(row4 => move |t, x| probe(x.mul_tile(t.leaf(row4.clone()))?))),
        ("mul_tile/tile", vec![4], Domain::Any, with!(a34 => move |t, x| probe(t.leaf(a34.clone()).mul_tile(x)?))),
        ("scale+shift", vec![3, 4], Domain::Any, op(|_, x| probe(x.scale(-1.7)?.shift(0.3)?.square()?))),
        ("one_minus", vec![3, 4], Domain::Any, op(|_, x| probe(x.one_minus()?.square()?))),
        ("add_const", vec![3, 4], Domain::Any, with!(pos34 => move |_, x| probe(x.add_const(&pos34)?.square()?))),
        ("mul_const", vec![3, 4], Domain::Any, with!(a34 => move |_, x| probe(x.mul_const(&a34)?))),
        ("sigmoid", vec![3, 4], Domain::Any, op(|_, x| probe(x.sigmoid()?))),
        ("tanh", vec![3, 4], Domain::Any, op(|_, x| probe(x.tanh()?))),
        ("relu", vec![3, 4], Domain::OffZero, op(|_, x| probe(x.relu()?))),
        ("softplus", vec![3, 4], Domain::Any, op(|_, x| probe(x.softplus()?))),
        ("exp", vec![3, 4], Domain::Any, op(|_, x| probe(x.scale(0.5)?.exp()?))),
        ("ln", vec![3, 4], Domain::Positive, op(|_, x| probe(x.ln()?))),
        ("square", vec![3, 4], Domain::Any, op(|_, x| probe(x.square()?))),
        ("matmul/left", vec![3, 4], Domain::Any, with!(m45 => move |t, x| probe(x.matmul(t.leaf(m45.clone()))?))),
        ("matmul/right", vec![4, 5], Domain::Any, with!(m35 => move |t, x| probe(t.leaf(m35.clone()).matmul(x)?))),
        ("bmm/left", vec![2, 5, 4], Domain::Any, with!(g243 => move |t, x| probe(x.bmm(t.leaf(g243.clone()))?))),
        ("bmm/right", vec![2, 4, 3], Domain::Any, with!(g254 => move |t, x| probe(t.leaf(g254.clone()).bmm(x)?))),
        ("transpose", vec![3, 4], Domain::Any, op(|_, x| probe(x.transpose()?))),
        ("softmax_lastdim", vec![3, 4], Domain::Any, op(|_, x| probe(x.softmax_lastdim()?))),
        ("concat_lastdim", vec![3, 4], Domain::Any, op(|_, x| probe(x.concat_lastdim(x.square()?)?))),
        ("slice_lastdim", vec![3, 4], Domain::Any, op(|_, x| probe(x.slice_lastdim(1, 2)?.square()?))),
        ("gather_rows", vec![3, 4], Domain::Any, op(|_, x| probe(x.gather_rows(Rc::new(vec![2, 0, 2, 1]))?))),
        ("reshape", vec![3, 4], Domain::Any, op(|_, x| probe(x.reshape(&[2, 6])?.square()?))),
        ("sum", vec![3, 4], Domain::Any, op(|_, x| x.square()?.sum())),
        ("mean", vec![3, 4], Domain::Any, op(|_, x| x.square()?.mean())),
        ("sum_lastdim", vec![3, 4], Domain::Any, op(|_, x| probe(x.square()?.sum_lastdim()?))),
        ("mean_axis1", vec![2, 3, 4], Domain::Any, op(|_, x| probe(x.mean_axis1()?))),
        ("sym_normalize", vec![2, 4, 4], Domain::Positive, op(|_, x| probe(x.sym_normalize()?))),
        ("linear/weight", vec![4, 4], Domain::Any, with!(a34, row4 => move |t, x| probe(linear(t.leaf(a34.clone()), x, Some(t.leaf(row4.clone())))?))),
        ("linear/input", vec![3, 4], Domain::Any, with!(w44, row4 => move |t, x| probe(linear(x, t.leaf(w44.clone()), Some(t.leaf(row4.clone())))?))),
        ("batchnorm/input", vec![5, 4], Domain::Any, with!(gamma4, beta4 => move |t, x| {
            let mut st = BatchNormState::new(4);
            probe(batchnorm(x, t.leaf(gamma4.clone()), t.leaf(beta4.clone()), &mut st, true)?)
        })),
        ("batchnorm/gamma", vec![4], Domain::Positive, with!(beta4 => move |t, x| {
            let mut st = BatchNormState::new(4);
            let inp = t.leaf(Tensor::from_fn(&[5, 4], |k| (k as f64 * 0.77).sin()));
            probe(batchnorm(inp, x, t.leaf(beta4.clone()), &mut st, true)?)
        })),
        ("dropout", vec![3, 4], Domain::Any, op(|_, x| probe(dropout(x, 0.3, true, &mut stream(11, Purpose::Dropout, 0))?))),
        ("gru_cell/input", vec![2, 4], Domain::Any, with!(gru, h23 => move |t, x| {
            probe(gru_cell(x, t.leaf(h23.clone()), &gru_weights(t, &gru))?)
        })),
        ("gru_cell/state", vec![2, 3], Domain::Any, with!(gru, x24 => move |t, x| {
            probe(gru_cell(t.leaf(x24.clone()), x, &gru_weights(t, &gru))?)
        })),
        ("gru_cell/u_h", vec![3, 3], Domain::Any, with!(gru, x24, h23 => move |t, x| {
            let mut w = gru_weights(t, &gru);
            w.u_h = x;
            probe(gru_cell(t.leaf(x24.clone()), t.leaf(h23.clone()), &w)?)
        })),
        ("mse_loss", vec![6], Domain::Any, with!(y6 => move |_, x| mse_loss(x, &y6))),
        ("gaussian_nll/mu", vec![5], Domain::Any, with!(var5, y5 => move |t, x| gaussian_nll_loss(x, t.leaf(var5.clone()), &y5))),
        ("gaussian_nll/var", vec![5], Domain::Positive, with!(mu5, y5 => move |t, x| gaussian_nll_loss(t.leaf(mu5.clone()), x, &y5))),
        ("gcn_layer/h", vec![2, 4, 3], Domain::Any, with!(adj, w33 => move |t, x| {
            probe(gcn_layer(x, t.leaf(adj.clone()), t.leaf(w33.clone()))?)
        })),
        ("gcn_layer/adjacency", vec![2, 4, 4], Domain::Positive, with!(g243, w33 => move |t, x| {
            probe(gcn_layer(t.leaf(g243.clone()), x, t.leaf(w33.clone()))?)
        })),
        ("gcn_layer/weight", vec![3, 3], Domain::Any, with!(g243, adj => move |t, x| {
            probe(gcn_layer(t.leaf(g243.clone()), t.leaf(adj.clone()), x)?)
        })),
        ("graph_readout/h", vec![2, 4, 3], Domain::Any, with!(emb43 => move |t, x| probe(graph_readout(x, t.leaf(emb43.clone()))?))),
        ("graph_readout/b", vec![4, 3], Domain::Any, with!(g243 => move |t, x| probe(graph_readout(t.leaf(g243.clone()), x)?))),
        ("gumbel_softmax", vec![9, 2], Domain::Any, with!(gum => move |_, x| {
            let logits = EdgeLogits { theta: x.sigmoid()?, graphs: 1, n: 3 };
            probe(gumbel_softmax_adjacency(&logits, 0.5, Some(&gum))?)
        })),
    ]
}

const GRAD_TOL: f64 = 1e-3;
const GRAD_POINTS: u64 = 20;

/// Worst relative gradient error of the assembled network over every
/// parameter tensor, at one seeded point (n=6, d=8, S=3, batch 4).
fn model_grad_error(point: u64) -> f64 {
    let variant = if point % 2 == 0 { Variant::Bgn } else { Variant::BgnUe };
    let cfg = TrainConfig {
        variant,
        d: 8,
        hidden: 8,
        window: 8,
        stride: 8,
        seq_len: 3,
        seed: point,
        ..TrainConfig::default()
    };
    let (n, batch) = (6, 4);
    let model = BgnModel::new(&cfg, n).unwrap();
    let mut rng = stream(point, Purpose::Synth, 77);
    let x = Tensor::from_fn(&[batch * cfg.seq_len * n, cfg.window], |_| uniform(&mut rng, 0.0, 1.0));
    let y = Tensor::from_fn(&[batch], |_| uniform(&mut rng, 0.0, 1.0));
    let mut worst: f64 = 0.0;
    for name in model.store.names() {
        let id = model.store.id_of(name).unwrap();
        let err = grad_check(
            |tape, xv| {
                let mut p = model.store.bind(tape);
                p.replace(id, xv)?;
                let mut bn = model.bn.clone();
                let mut gumbel = stream(point, Purpose::Gumbel, 0);
                let mut drop = stream(point, Purpose::Dropout, 0);
                let pass = Pass {
                    training: true,
                    gumbel: Some(&mut gumbel),
                    dropout: &mut drop,
                };
                let out = model.arch.forward(&p, &mut bn, &x, batch, pass)?;
                match out.var {
                    Some(var) => gaussian_nll_loss(out.pred, var, &y),
                    None => mse_loss(out.pred, &y),
                }
            },
            model.store.get(id),
            1e-6,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

#[test]
fn criterion_01_gradients() {
    let t0 = Instant::now();
    let mut worst_prim = (0.0f64, "");
    let mut count = 0;
    for point in 0..GRAD_POINTS {
        let mut rng = stream(point, Purpose::Synth, 1);
        for (name, shape, domain, f) in primitive_ops(&mut rng) {
            let x = draw(&mut rng, &shape, domain);
            let err = grad_check(|t, v| f(t, v), &x, 1e-6).unwrap();
            if err > worst_prim.0 {
                worst_prim = (err, name);
            }
            count += 1;
        }
    }
    let worst_model = (0..GRAD_POINTS).map(model_grad_error).fold(0.0, f64::max);
    report(
        1,
        "gradient suite",
        worst_prim.0 < GRAD_TOL && worst_model < GRAD_TOL,
        format!(
            "{count} primitive checks, worst {:.2e} ({}); full network worst {worst_model:.2e} over {GRAD_POINTS} points; tol {GRAD_TOL:e}",
            worst_prim.0, worst_prim.1
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 2. Gumbel-softmax statistics

#[test]
fn criterion_02_gumbel_statistics() {
    let t0 = Instant::now();
    let draws = 10_000;
    let p = 1.0 / (1.0 + (-0.4f64).exp());
    let bound = 3.0 * (p * (1.0 - p) / draws as f64).sqrt();
    let mut ok = (p - 0.59869).abs() < 5e-6 && DEFAULT_TEMPERATURE == 0.05;
    let mut parts = Vec::new();
    for (k, gamma) in [1.0, 0.1, 0.05].into_iter().enumerate() {
        let tape = Tape::new();
        let theta = Tensor::from_fn(&[draws, 2], |i| if i % 2 == 0 { 0.7 } else { 0.3 });
        let logits = EdgeLogits { theta: tape.leaf(theta), graphs: 1, n: 100 };
        let noise = gumbel_noise(&mut stream(2024, Purpose::Gumbel, k as u64), 1, 100);
        let y = gumbel_softmax_channels(&logits, gamma, Some(&noise)).unwrap().value();
        let mut selected = 0usize;
        let mut worst_sum: f64 = 0.0;
        for row in y.data().chunks(2) {
            worst_sum = worst_sum.max((row[0] + row[1] - 1.0).abs());
            selected += (row[0] > row[1]) as usize;
        }
        let freq = selected as f64 / draws as f64;
        ok &= (freq - p).abs() <= bound && worst_sum <= 1e-12;
        parts.push(format!("γ={gamma}: {freq:.4} (sum err {worst_sum:.1e})"));
    }
    report(
        2,
        "Gumbel-softmax statistics",
        ok,
        format!("σ(0.4)={p:.5} ± {bound:.4}; {}", parts.join(", ")),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 3. oracle equivalence

#[test]
fn criterion_03_oracles() {
    let t0 = Instant::now();
    let mut rng = stream(3, Purpose::Synth, 0);
    let mut worst: f64 = 0.0;
    let mut table_ok = true;
    for case in 0..100 {
        let len = 1 + case % 17;
        let scale = uniform(&mut rng, 1.0, 200.0);
        let pred: Vec<f64> = (0..len).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let target: Vec<f64> = (0..len).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let var: Vec<f64> = (0..len).map(|_| uniform(&mut rng, 0.01, 2.0)).collect();

        let mut se = 0.0;
        let mut ae = 0.0;
        let mut nll = 0.0;
        for i in 0..len {
            let e = pred[i] - target[i];
            se += e * e;
            ae += e.abs();
            nll += 0.5 * var[i].ln() + e * e / (2.0 * var[i]);
        }
        let n = len as f64;
        let tape = Tape::new();
        let target_t = Tensor::from_vec(target.clone());
        let got_mse = mse_loss(tape.leaf(Tensor::from_vec(pred.clone())), &target_t).unwrap().item();
        let got_nll = gaussian_nll_loss(
            tape.leaf(Tensor::from_vec(pred.clone())),
            tape.leaf(Tensor::from_vec(var.clone())),
            &target_t,
        )
        .unwrap()
        .item();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        worst = worst
            .max(rel(got_mse, se / n))
            .max(rel(got_nll, nll))
            .max(rel(rmse(&pred, &target, scale).unwrap(), scale * (se / n).sqrt()))
            .max(rel(mae(&pred, &target, scale).unwrap(), scale * ae / n));

        let table = approximation_error_table(&pred, &target, scale, &APPROX_THRESHOLDS).unwrap();
        for &tau in &APPROX_THRESHOLDS {
            let hits = (0..len).filter(|&i| ((pred[i] - target[i]) * scale).abs() < tau).count();
            let want = 100.0 * hits as f64 / n;
            let got = table.get(tau).unwrap();
            worst = worst.max(rel(got, want));
            table_ok &= table.0.len() == APPROX_THRESHOLDS.len();
        }
    }

    // minimizer of the NLL over the variance, on a relative grid
    let step = 1e-3;
    let mut minimizer_ok = true;
    for _ in 0..20 {
        let (y, mu) = (uniform(&mut rng, -2.0, 2.0), uniform(&mut rng, -2.0, 2.0));
        let r = (y - mu).powi(2).max(1e-3);
        let mut best = (f64::INFINITY, 0.0);
        for j in 0..=1500 {
            let v = r * (0.5 + step * j as f64);
            let tape = Tape::new();
            let l = gaussian_nll_loss(
                tape.leaf(Tensor::from_vec(vec![mu])),
                tape.leaf(Tensor::from_vec(vec![v])),
                &Tensor::from_vec(vec![y]),
            )
            .unwrap()
            .item();
            if l < best.0 {
                best = (l, v);
            }
        }
        minimizer_ok &= (best.1 - r).abs() <= step * r + 1e-15;
    }
    report(
        3,
        "oracle equivalence",
        worst <= 1e-12 && table_ok && minimizer_ok,
        format!("worst relative difference {worst:.1e} over 100 vectors; NLL argmin on grid ok: {minimizer_ok}"),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 4. overfit smoke

fn all_samples(records: &[bgn::data::BatteryRecord], cfg: &TrainConfig) -> (Vec<WindowSequenceSample>, NormalizationStats) {
    let stats = NormalizationStats::fit(records).unwrap();
    (make_windows(records, &cfg.window_spec(), &stats).unwrap().samples, stats)
}

#[test]
fn criterion_04_overfit() {
    let t0 = Instant::now();
    let cfg = TrainConfig { max_epochs: 50, ..TrainConfig::default() };
    let records = synth_degradation(4, 2000, 0.01, 0);
    let (samples, stats) = all_samples(&records, &cfg);
    let a = train_one(&cfg, &samples, &samples, stats.rul_max).unwrap();
    let b = train_one(&cfg, &samples, &samples, stats.rul_max).unwrap();
    let deterministic = a.model.store.values() == b.model.store.values() && a.curve == b.curve;
    let fit = evaluate(&a.model, &samples, stats.rul_max, 1).unwrap();
    let frac = fit.rmse / stats.rul_max;
    report(
        4,
        "overfit smoke",
        frac < 0.05 && deterministic,
        format!(
            "training RMSE {:.3} = {:.4} of rul_max {:.1} (target < 0.05, best epoch {}); deterministic: {deterministic}",
            fit.rmse, frac, stats.rul_max, a.best_epoch
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 5. ablation direction

#[test]
fn criterion_05_ablation_direction() {
    let t0 = Instant::now();
    let cfg = TrainConfig { max_epochs: 40, ..TrainConfig::default() };
    let records = synth_degradation(8, 2000, 0.01, 0);
    let splits = prepare_splits(&records, &cfg).unwrap();
    let seeds = [0u64, 1, 2, 3, 4];
    let rows = run_ablations(
        &cfg,
        &splits,
        &[Ablation::None, Ablation::Fcg, Ablation::NoFeatures],
        &seeds,
        available_jobs(),
    )
    .unwrap();
    let (full, fcg, nofeat) = (&rows[0], &rows[1], &rows[2]);
    let wins = |other: &[f64]| full.test_rmse.iter().zip(other).filter(|(a, b)| a < b).count();
    let (w_fcg, w_nofeat) = (wins(&fcg.test_rmse), wins(&nofeat.test_rmse));
    report(
        5,
        "ablation direction",
        w_fcg >= 4 && w_nofeat >= 4,
        format!(
            "mean test RMSE BGN {:.3}, w/ fcg {:.3}, w/o x_i^t {:.3}; BGN better in {w_fcg}/5 and {w_nofeat}/5 seeds",
            full.rmse.mean, fcg.rmse.mean, nofeat.rmse.mean
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 6. BGN-UE sanity

#[test]
fn criterion_06_uncertainty() {
    let t0 = Instant::now();
    let cfg = TrainConfig { variant: Variant::BgnUe, max_epochs: 30, ..TrainConfig::default() };
    let clean = synth_degradation(8, 2000, 0.01, 0);
    let threshold = 60.0;
    let noisy = inject_label_noise(&clean, threshold, 1.0, 12.0, 0);
    let splits = prepare_splits(&noisy, &cfg).unwrap();
    let run = train_one(&cfg, &splits.train, &splits.val, splits.stats.rul_max).unwrap();

    let held: Vec<String> = splits.batteries.val.iter().chain(&splits.batteries.test).cloned().collect();
    let noisy_held = make_windows(&select_batteries(&noisy, &held), &cfg.window_spec(), &splits.stats).unwrap().samples;
    let clean_held = make_windows(&select_batteries(&clean, &held), &cfg.window_spec(), &splits.stats).unwrap().samples;
    let preds = predict(&run.model, &noisy_held, cfg.batch_size, 1).unwrap();
    let (mut hi, mut lo) = (Vec::new(), Vec::new());
    for (p, c) in preds.iter().zip(&clean_held) {
        let v = p.var.unwrap();
        if c.target * splits.stats.rul_max < threshold {
            hi.push(v);
        } else {
            lo.push(v);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (v_hi, v_lo) = (mean(&hi), mean(&lo));
    let first = run.curve.first().unwrap().train_loss;
    let last = run.curve.last().unwrap().train_loss;
    report(
        6,
        "BGN-UE sanity",
        !hi.is_empty() && !lo.is_empty() && v_hi > v_lo && last < first,
        format!(
            "mean predicted variance high-noise {v_hi:.3e} ({} samples) vs low-noise {v_lo:.3e} ({}); NLL {first:.4} → {last:.4} over {} epochs",
            hi.len(),
            lo.len(),
            run.curve.len()
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 7. imputation

#[test]
fn criterion_07_imputation() {
    let t0 = Instant::now();
    let mut rng = stream(7, Purpose::Mask, 0);
    let mut exact = true;
    let mut models = Vec::new();
    for (n, w) in [(3, 5), (4, 12), (6, 8)] {
        let cfg = WganConfig { d: 8, hidden: 16, seed: n as u64, ..WganConfig::default() };
        models.push(WganModel::new(&cfg, n, w).unwrap());
    }
    for trial in 0..1000 {
        let model = &models[trial % models.len()];
        let (n, w) = (model.n, model.window);
        let b = 1 + trial % 4;
        let x = Tensor::from_fn(&[b, n, w], |_| uniform(&mut rng, -1.0, 2.0));
        let rate = uniform(&mut rng, 0.0, 1.0);
        let m = bernoulli_mask(&[b, n, w], rate, &mut rng);
        let out = wgan_impute(&x, &m, model).unwrap();
        for k in 0..x.len() {
            if m.data()[k] == 1.0 {
                exact &= out.data()[k].to_bits() == x.data()[k].to_bits();
            }
        }
    }

    let cfg = WganConfig { d: 8, hidden: 16, batch_size: 16, steps: 200, lr: 3e-3, ..WganConfig::default() };
    let (n, w) = (4, 12);
    let train = sinusoid_windows(256, n, w, 0);
    let test = sinusoid_windows(64, n, w, 1);
    let mut model = WganModel::new(&cfg, n, w).unwrap();
    train_wgan(&mut model, &train, None).unwrap();
    let m = bernoulli_mask(test.shape(), 0.8, &mut stream(9, Purpose::Mask, 0));
    let ours = masked_rmse(&test, &wgan_impute(&test, &m, &model).unwrap(), &m).unwrap();
    let base = masked_rmse(&test, &mean_impute(&test, &m).unwrap(), &m).unwrap();
    report(
        7,
        "imputation",
        exact && ours < base,
        format!("observed entries bit-exact over 1000 masks: {exact}; masked RMSE {ours:.4} vs per-feature mean {base:.4}"),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 8. VAE

fn feature_means(samples: &[WindowSequenceSample]) -> Vec<f64> {
    let shape = samples[0].features.shape().to_vec();
    let (s, n, w) = (shape[0], shape[1], shape[2]);
    let mut sums = vec![0.0; n];
    for smp in samples {
        for si in 0..s {
            for k in 0..n {
                for t in 0..w {
                    sums[k] += smp.features.get(&[si, k, t]);
                }
            }
        }
    }
    sums.iter().map(|v| v / (samples.len() * s * w) as f64).collect()
}

#[test]
fn criterion_08_vae() {
    let t0 = Instant::now();
    let tape = Tape::new();
    let d = 5;
    let zero = tape.constant(Tensor::zeros(&[1, d]));
    let one = tape.constant(Tensor::ones(&[1, d]));
    let kl0 = kl_divergence(zero, one).unwrap().item();
    let kl1 = kl_divergence(one, one).unwrap().item() / d as f64;
    let kl_ok = kl0.abs() <= 1e-12 && (kl1 - 0.5).abs() <= 1e-12;

    let cfg = TrainConfig { max_epochs: 150, ..TrainConfig::default() };
    let records = synth_degradation(4, 2000, 0.01, 0);
    let splits = prepare_splits(&records, &cfg).unwrap();
    let mut run = train_vae(&cfg, &splits.train).unwrap();
    let generated = vae_generate(&mut run.model, 1000, 8).unwrap();
    let (want, got) = (feature_means(&splits.train), feature_means(&generated));
    let rel: Vec<f64> = want.iter().zip(&got).map(|(a, b)| (a - b).abs() / a.abs()).collect();
    let worst = rel.iter().cloned().fold(0.0, f64::max);
    report(
        8,
        "VAE",
        kl_ok && worst < 0.2,
        format!(
            "KL(N(0,1)) = {kl0:e}, KL(N(1,1))/dim = {kl1}; worst per-feature mean deviation {:.1}% over 1000 samples",
            100.0 * worst
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 9. equivariance / invariance

fn permute_nodes(t: &Tensor, perm: &[usize]) -> Tensor {
    let s = t.shape();
    let (g, n, d) = (s[0], s[1], s[2]);
    Tensor::from_fn(&[g, n, d], |k| t.get(&[k / (n * d), perm[(k / d) % n], k % d]))
}

fn permute_adjacency(a: &Tensor, perm: &[usize]) -> Tensor {
    let n = a.shape()[1];
    Tensor::from_fn(a.shape(), |k| a.get(&[k / (n * n), perm[(k / n) % n], perm[k % n]]))
}

#[test]
fn criterion_09_symmetry() {
    let t0 = Instant::now();
    let mut worst_eq: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for inst in 0..10u64 {
        let mut rng = stream(inst, Purpose::Synth, 9);
        let (b, s, n, d) = (2, 3, 4 + inst as usize % 3, 4);
        let g = b * s;
        let h = random(&mut rng, &[g, n, d]);
        let a = Tensor::from_fn(&[g, n, n], |k| if (k / n) % n == k % n { 0.0 } else { uniform(&mut rng, 0.0, 1.0) });
        let perm = permutation(&mut rng, n);
        let mut store = ParamStore::new();
        let blocks = [
            GcnBlockParams::init(&mut store, &mut rng, "g1", d),
            GcnBlockParams::init(&mut store, &mut rng, "g2", d),
        ];
        let grus = [
            GruParams::init(&mut store, &mut rng, "r1", 2 * d, d),
            GruParams::init(&mut store, &mut rng, "r2", d, d),
        ];
        let grapher = |h: &Tensor, a: &Tensor| -> Tensor {
            let tape = Tape::new();
            let p = store.bind(&tape);
            let mut bn = [BatchNormState::new(d), BatchNormState::new(d)];
            let mut r = stream(0, Purpose::Dropout, 0);
            let mut reg = Regularization { training: true, dropout: 0.0, rng: &mut r };
            let v = [blocks[0].bind(&p), blocks[1].bind(&p)];
            let nodes =
                stacked_gnn(tape.constant(h.clone()), tape.constant(a.clone()), [&v[0], &v[1]], &mut bn, &mut reg).unwrap();
            let seq = nodes.reshape(&[b, s, n, 2 * d]).unwrap();
            (*temporal_gru(seq, &grus[0].bind(&p), &grus[1].bind(&p)).unwrap().value()).clone()
        };
        let base = grapher(&h, &a);
        let moved = grapher(&permute_nodes(&h, &perm), &permute_adjacency(&a, &perm));
        let expect = permute_nodes(&base, &perm);
        for (x, y) in moved.data().iter().zip(expect.data()) {
            worst_eq = worst_eq.max((x - y).abs());
        }

        let emb = random(&mut rng, &[n, d]);
        let hb = random(&mut rng, &[b, n, d]);
        let readout = |h: &Tensor, e: &Tensor| -> Tensor {
            let tape = Tape::new();
            (*graph_readout(tape.constant(h.clone()), tape.constant(e.clone())).unwrap().value()).clone()
        };
        let r0 = readout(&hb, &emb);
        let emb_p = permute_nodes(&emb.clone().reshape(&[1, n, d]).unwrap(), &perm).reshape(&[n, d]).unwrap();
        let r1 = readout(&permute_nodes(&hb, &perm), &emb_p);
        for (x, y) in r0.data().iter().zip(r1.data()) {
            worst_inv = worst_inv.max((x - y).abs());
        }
    }
    report(
        9,
        "equivariance / invariance",
        worst_eq <= 1e-10 && worst_inv <= 1e-10,
        format!("grapher equivariance error {worst_eq:.1e}, readout invariance error {worst_inv:.1e} over 10 instances"),
        t0,
    );
}

// ---------------------------------------------------------------------------
// 10. reproducibility

fn bgn_train(data: &Path, out: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_bgn"))
        .args(["train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--set", "max_epochs=5", "--set", "seq_len=4"])
        .env_remove("BGN_SEED")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_10_reproducibility() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    bgn::data::write_csv(&data, &synth_degradation(5, 800, 0.01, 3)).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    bgn_train(&data, &a);
    bgn_train(&data, &b);
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let identical = same("metrics.json") && same("checkpoint.bgn");

    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("metrics.json")).unwrap()).unwrap();
    let recorded = metrics["val"]["rmse"].as_f64().unwrap();
    let (model, stats) = checkpoint::load(a.join("checkpoint.bgn")).unwrap();
    let stats = stats.unwrap();
    let records = bgn::data::load_csv(&data).unwrap();
    let splits = prepare_splits(&records, model.config()).unwrap();
    assert_eq!(splits.stats, stats);
    let reloaded = evaluate(&model, &splits.val, stats.rul_max, 1).unwrap().rmse;
    let diff = (reloaded - recorded).abs();
    report(
        10,
        "reproducibility",
        identical && diff <= 1e-12,
        format!("two `bgn train` runs byte-identical: {identical}; reloaded val RMSE {reloaded:.6} differs by {diff:.1e}"),
        t0,
    );
}
