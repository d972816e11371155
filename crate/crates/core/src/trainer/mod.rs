//! Supervised training, evaluation and the experiment drivers built on them.

mod experiments;

pub use experiments::{
    mean_std, prepare_splits, run_ablation_suite, run_ablations, run_ensemble, run_grid, run_kfold, AblationRow, EnsembleReport,
    GridRow, GridSpec, KfoldReport, MeanStd, Splits,
};

use serde::{Deserialize, Serialize};

use crate::config::{Ablation, TrainConfig, Variant};
use crate::data::{collate, WindowSequenceSample};
use crate::error::{invalid, BgnError, Result};
use crate::model::{BgnModel, Pass};
use crate::objectives::{gaussian_nll_loss, mse_loss, rmse, MetricsReport};
use crate::parallel;
use crate::rng::{permutation, stream, Purpose};
use crate::tensor::nn::BatchNormState;
use crate::tensor::optim::{adam_step, clip_global_norm, AdamState, EarlyStopping, PlateauScheduler};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub lr: f64,
}

pub struct RunResult {
    /// Parameters and batch-norm statistics of the best validation epoch.
    pub model: BgnModel,
    pub best_epoch: usize,
    pub curve: Vec<CurvePoint>,
    pub val: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub pred: f64,
    pub var: Option<f64>,
}

/// Loss and parameter gradients (store order) on one batch in training mode.
/// Batch-norm running statistics are updated. `counter` keys the Gumbel and
/// dropout streams.
pub fn batch_gradients(
    model: &mut BgnModel,
    batch: &[&WindowSequenceSample],
    counter: u64,
) -> Result<(f64, Vec<Tensor>)> {
    let cfg = model.config().clone();
    let (x, y) = collate(batch);
    let tape = Tape::new();
    let p = model.store.bind(&tape);
    let mut gumbel = stream(cfg.seed, Purpose::Gumbel, counter);
    let mut dropout = stream(cfg.seed, Purpose::Dropout, counter);
    let pass = Pass {
        training: true,
        gumbel: Some(&mut gumbel),
        dropout: &mut dropout,
    };
    let out = model.arch.forward(&p, &mut model.bn, &x, batch.len(), pass)?;
    let loss = match (cfg.variant, out.var) {
        (Variant::BgnUe, Some(var)) => {
            let nll = gaussian_nll_loss(out.pred, var, &y)?;
            if cfg.nll_batch_mean {
                nll.scale(1.0 / batch.len() as f64)?
            } else {
                nll
            }
        }
        _ => mse_loss(out.pred, &y)?,
    };
    let value = loss.item();
    let grads = tape.backward(loss)?;
    Ok((value, p.grads(&grads)))
}

fn train_step(
    model: &mut BgnModel,
    adam: &mut AdamState,
    batch: &[&WindowSequenceSample],
    counter: u64,
) -> Result<f64> {
    let (loss, mut grads) = batch_gradients(model, batch, counter)?;
    if !loss.is_finite() {
        return Err(BgnError::NonFinite { op: "loss".into() });
    }
    if let Some(c) = model.config().clip_norm {
        clip_global_norm(&mut grads, c);
    }
    adam_step(&mut model.store, &grads, adam)?;
    Ok(loss)
}

/// Replaces the batch-norm running statistics with the statistics of all
/// rows of a training-mode pass over `samples` (Gumbel noise and dropout
/// drawn from streams keyed by `counter`), without touching the parameters.
pub fn recalibrate_batchnorm(
    model: &mut BgnModel,
    samples: &[&WindowSequenceSample],
    batch_size: usize,
    counter: u64,
) -> Result<()> {
    if batch_size == 0 {
        return invalid("batch size must be positive");
    }
    if model.config().ablation == Ablation::NoGnn || samples.is_empty() {
        return Ok(());
    }
    let seed = model.config().seed;
    let mut bn = model.bn.clone();
    bn.iter_mut().for_each(BatchNormState::begin_calibration);
    for (i, chunk) in samples.chunks(batch_size).enumerate() {
        let (x, _) = collate(chunk);
        let tape = Tape::new();
        let p = model.store.bind(&tape);
        let mut gumbel = stream(seed, Purpose::Gumbel, counter + i as u64);
        let mut dropout = stream(seed, Purpose::Dropout, counter + i as u64);
        let pass = Pass {
            training: true,
            gumbel: Some(&mut gumbel),
            dropout: &mut dropout,
        };
        model.arch.forward(&p, &mut bn, &x, chunk.len(), pass)?;
    }
    bn.iter_mut().for_each(BatchNormState::end_calibration);
    model.bn = bn;
    Ok(())
}

/// Eval-mode predictions, batched and spread over `jobs` workers. Output
/// order follows `samples`.
pub fn predict(model: &BgnModel, samples: &[WindowSequenceSample], batch_size: usize, jobs: usize) -> Result<Vec<Prediction>> {
    let refs: Vec<&WindowSequenceSample> = samples.iter().collect();
    predict_refs(model, &refs, batch_size, jobs)
}

pub fn predict_refs(
    model: &BgnModel,
    samples: &[&WindowSequenceSample],
    batch_size: usize,
    jobs: usize,
) -> Result<Vec<Prediction>> {
    if batch_size == 0 {
        return invalid("batch size must be positive");
    }
    let chunks: Vec<&[&WindowSequenceSample]> = samples.chunks(batch_size).collect();
    let per = parallel::map_jobs(&chunks, jobs, |_, chunk| -> Result<Vec<Prediction>> {
        let (x, _) = collate(chunk);
        let tape = Tape::new();
        let p = model.store.bind(&tape);
        let mut bn: [BatchNormState; 2] = model.bn.clone();
        let mut unused = stream(0, Purpose::Dropout, 0);
        let pass = Pass::eval(&mut unused);
        let out = model.arch.forward(&p, &mut bn, &x, chunk.len(), pass)?;
        let pred = out.pred.value();
        let var = out.var.map(|v| v.value());
        Ok((0..chunk.len())
            .map(|i| Prediction {
                pred: pred.data()[i],
                var: var.as_ref().map(|v| v.data()[i]),
            })
            .collect())
    });
    let mut all = Vec::with_capacity(samples.len());
    for r in per {
        all.extend(r?);
    }
    Ok(all)
}

/// Metrics of the model on `samples` in RUL units.
pub fn evaluate(model: &BgnModel, samples: &[WindowSequenceSample], rul_max: f64, jobs: usize) -> Result<MetricsReport> {
    let preds = predict(model, samples, model.config().batch_size, jobs)?;
    let p: Vec<f64> = preds.iter().map(|p| p.pred).collect();
    let t: Vec<f64> = samples.iter().map(|s| s.target).collect();
    MetricsReport::compute(&p, &t, rul_max)
}

fn check_samples(config: &TrainConfig, samples: &[WindowSequenceSample], what: &str) -> Result<usize> {
    let Some(first) = samples.first() else {
        return Err(BgnError::Data(format!("{what} split has no samples")));
    };
    let s = first.features.shape();
    if s[0] != config.seq_len || s[2] != config.window {
        return Err(BgnError::Config(format!(
            "{what} samples are [{}×{}×{}] but the config expects seq_len {} and window {}",
            s[0], s[1], s[2], config.seq_len, config.window
        )));
    }
    Ok(s[1])
}

/// Mini-batch Adam with plateau halving and early stopping on validation
/// RMSE (in RUL units, `rul_max` per normalized unit). Returns the best
/// validation epoch's model.
pub fn train_one(
    config: &TrainConfig,
    train: &[WindowSequenceSample],
    val: &[WindowSequenceSample],
    rul_max: f64,
) -> Result<RunResult> {
    config.validate()?;
    let n = check_samples(config, train, "training")?;
    check_samples(config, val, "validation")?;
    let mut model = BgnModel::new(config, n)?;
    let mut adam = AdamState::new(&model.store, config.lr);
    let mut scheduler = PlateauScheduler::new(config.scheduler_patience);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut best = (model.store.values().to_vec(), model.bn.clone(), 0usize);
    let mut curve = Vec::new();
    let val_targets: Vec<f64> = val.iter().map(|s| s.target).collect();

    for epoch in 1..=config.max_epochs {
        let order = permutation(&mut stream(config.seed, Purpose::Shuffle, epoch as u64), train.len());
        let mut total = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&WindowSequenceSample> = idx.iter().map(|&i| &train[i]).collect();
            let counter = ((epoch as u64) << 24) | b as u64;
            let loss = train_step(&mut model, &mut adam, &batch, counter).map_err(|e| match e {
                BgnError::NonFinite { op } => BgnError::Divergence {
                    epoch,
                    batch: b,
                    msg: format!("non-finite {op}"),
                },
                other => other,
            })?;
            total += loss;
            batches += 1;
        }
        if config.bn_recalibration {
            let all: Vec<&WindowSequenceSample> = train.iter().collect();
            recalibrate_batchnorm(&mut model, &all, config.batch_size, ((epoch as u64) << 24) | (1 << 23))?;
        }
        let preds = predict(&model, val, config.batch_size, 1)?;
        let p: Vec<f64> = preds.iter().map(|p| p.pred).collect();
        let val_rmse = rmse(&p, &val_targets, rul_max)?;
        let lr = adam.lr;
        curve.push(CurvePoint {
            epoch,
            train_loss: total / batches as f64,
            val_rmse,
            lr,
        });
        log::debug!("epoch {epoch}: train loss {:.6}, val rmse {val_rmse:.4}, lr {lr:e}", total / batches as f64);
        adam.lr = scheduler.step(val_rmse, adam.lr);
        let (improved, stop) = stopper.step(val_rmse);
        if improved {
            best = (model.store.values().to_vec(), model.bn.clone(), epoch);
        }
        if stop {
            break;
        }
    }

    let (values, bn, best_epoch) = best;
    for (dst, src) in model.store.values_mut().iter_mut().zip(values) {
        *dst = src;
    }
    model.bn = bn;
    let val_report = evaluate(&model, val, rul_max, 1)?;
    Ok(RunResult {
        model,
        best_epoch,
        curve,
        val: val_report,
    })
}
