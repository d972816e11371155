use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use bgn::checkpoint;
use bgn::config::TrainConfig;
use bgn::data::{
    battery_ids, load_csv, make_windows, select_batteries, split_batteries, synth_degradation, write_csv, BatteryRecord,
    NormalizationStats, WindowSequenceSample,
};
use bgn::genmod::{
    bernoulli_mask, masked_rmse, mean_impute, record_windows, records_from_windows, retrain_with_generated, train_vae,
    train_wgan, vae_generate, wgan_impute, GenMode, WganConfig, WganModel,
};
use bgn::graph_inference::harden;
use bgn::model::{BgnModel, Pass};
use bgn::objectives::MetricsReport;
use bgn::rng::{stream, Purpose};
use bgn::rundir::{self, write_json, PredictionRow};
use bgn::tensor::Tape;
use bgn::trainer::{
    evaluate, predict as predict_samples, prepare_splits, run_ablation_suite, run_ensemble, run_grid, train_one, GridSpec,
};
use bgn::{BgnError, Result};

use crate::plot::render_svg;
use crate::records::{generated_records, write_mask_sidecar, Cadence};
use crate::{ConfigArgs, SplitArg};

/// Defaults, then the config file, then the seed, then `--set` overrides.
pub fn resolve_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BgnError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| BgnError::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn seeds(cfg: &TrainConfig, runs: Option<usize>) -> Vec<u64> {
    (0..runs.unwrap_or(cfg.runs) as u64).map(|k| cfg.seed + k).collect()
}

pub fn synth_data(out: &Path, batteries: usize, steps: usize, noise: f64, seed: u64) -> Result<()> {
    if batteries == 0 || steps == 0 || !(noise >= 0.0) {
        return Err(BgnError::InvalidArgument("batteries and steps must be positive and noise non-negative".into()));
    }
    let records = synth_degradation(batteries, steps, noise, seed);
    write_csv(out, &records)?;
    log::info!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

pub fn train(data: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let records = load_csv(data)?;
    let splits = prepare_splits(&records, &cfg)?;
    let rul_max = splits.stats.rul_max;
    let run = train_one(&cfg, &splits.train, &splits.val, rul_max)?;
    create_dir(out)?;
    write_json(out.join(rundir::CONFIG_FILE), &cfg)?;
    checkpoint::save(out.join(rundir::CHECKPOINT_FILE), &run.model, Some(&splits.stats))?;
    let mut metrics = BTreeMap::new();
    for (name, set) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if !set.is_empty() {
            metrics.insert(name.to_string(), evaluate(&run.model, set, rul_max, 1)?);
        }
    }
    rundir::write_metrics(out.join(rundir::METRICS_FILE), &metrics)?;
    rundir::write_curve(out.join(rundir::CURVE_FILE), &run.curve)?;
    let shown = if splits.test.is_empty() { &splits.val } else { &splits.test };
    let preds = predict_samples(&run.model, shown, cfg.batch_size, 1)?;
    rundir::write_predictions(
        out.join(rundir::PREDICTIONS_FILE),
        &rundir::prediction_rows(shown, &preds, rul_max)?,
    )?;
    for (k, m) in &metrics {
        eprintln!("{k}: rmse {:.4} mae {:.4} (n = {})", m.rmse, m.mae, m.n);
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(BgnModel, NormalizationStats)> {
    let (model, stats) = checkpoint::load(path)?;
    let stats = stats.ok_or_else(|| BgnError::Checkpoint("checkpoint has no normalization statistics".into()))?;
    Ok((model, stats))
}

fn checkpoint_samples(
    records: &[BatteryRecord],
    model: &BgnModel,
    stats: &NormalizationStats,
    split: SplitArg,
) -> Result<Vec<WindowSequenceSample>> {
    let cfg = model.config();
    let chosen = match split {
        SplitArg::All => records.to_vec(),
        _ => {
            let s = split_batteries(&battery_ids(records), cfg.val_fraction, cfg.test_fraction, cfg.seed)?;
            let ids = match split {
                SplitArg::Train => s.train,
                SplitArg::Val => s.val,
                _ => s.test,
            };
            select_batteries(records, &ids)
        }
    };
    let samples = make_windows(&chosen, &cfg.window_spec(), stats)?.samples;
    if samples.is_empty() {
        return Err(BgnError::Data("no samples: batteries are too short for the model's windows".into()));
    }
    Ok(samples)
}

pub fn eval(data: &Path, ckpt: &Path, out: &Path, split: SplitArg, jobs: usize) -> Result<()> {
    let (model, stats) = load_model(ckpt)?;
    let records = load_csv(data)?;
    let samples = checkpoint_samples(&records, &model, &stats, split)?;
    let preds = predict_samples(&model, &samples, model.config().batch_size, jobs)?;
    let p: Vec<f64> = preds.iter().map(|p| p.pred).collect();
    let t: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let report = MetricsReport::compute(&p, &t, stats.rul_max)?;
    create_dir(out)?;
    let name = format!("{split:?}").to_lowercase();
    eprintln!("{name}: rmse {:.4} mae {:.4} (n = {})", report.rmse, report.mae, report.n);
    rundir::write_metrics(out.join(rundir::METRICS_FILE), &BTreeMap::from([(name, report)]))?;
    rundir::write_predictions(
        out.join(rundir::PREDICTIONS_FILE),
        &rundir::prediction_rows(&samples, &preds, stats.rul_max)?,
    )
}

pub fn predict(data: &Path, ckpt: &Path, out: &Path, jobs: usize) -> Result<()> {
    let (model, stats) = load_model(ckpt)?;
    let records = load_csv(data)?;
    let samples = checkpoint_samples(&records, &model, &stats, SplitArg::All)?;
    let preds = predict_samples(&model, &samples, model.config().batch_size, jobs)?;
    rundir::write_predictions(out, &rundir::prediction_rows(&samples, &preds, stats.rul_max)?)
}

pub fn ablate(data: &Path, out: &Path, runs: Option<usize>, jobs: usize, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let splits = prepare_splits(&load_csv(data)?, &cfg)?;
    let rows = run_ablation_suite(&cfg, &splits, &seeds(&cfg, runs), jobs)?;
    create_dir(out)?;
    write_json(out.join(rundir::CONFIG_FILE), &cfg)?;
    write_json(out.join("ablations.json"), &rows)?;
    for r in &rows {
        eprintln!("{:<10} rmse {:.3} ± {:.3}", r.label, r.rmse.mean, r.rmse.std);
    }
    Ok(())
}

pub fn grid(data: &Path, out: &Path, grid: Option<&Path>, jobs: usize, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let spec: GridSpec = match grid {
        Some(p) => rundir::read_json(p).map_err(|e| BgnError::Config(format!("{}: {e}", p.display())))?,
        None => GridSpec::default(),
    };
    let splits = prepare_splits(&load_csv(data)?, &cfg)?;
    let rows = run_grid(&cfg, &splits, &spec, jobs)?;
    create_dir(out)?;
    write_json(out.join(rundir::CONFIG_FILE), &cfg)?;
    write_json(out.join("grid.json"), &rows)?;
    if let Some(best) = rows.iter().min_by(|a, b| a.test.rmse.total_cmp(&b.test.rmse)) {
        eprintln!("best: d={} hidden={} lr={} rmse {:.4}", best.d, best.hidden, best.lr, best.test.rmse);
    }
    Ok(())
}

pub fn ensemble(data: &Path, out: &Path, runs: Option<usize>, jobs: usize, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let splits = prepare_splits(&load_csv(data)?, &cfg)?;
    let report = run_ensemble(&cfg, &splits, &seeds(&cfg, runs), jobs)?;
    create_dir(out)?;
    write_json(out.join(rundir::CONFIG_FILE), &cfg)?;
    write_json(out.join("ensemble.json"), &report)?;
    eprintln!("test rmse {:.4} ± {:.4}, mae {:.4} ± {:.4}", report.rmse.mean, report.rmse.std, report.mae.mean, report.mae.std);
    Ok(())
}

pub fn export_graph(data: &Path, ckpt: &Path, out: &Path, count: usize, threshold: f64) -> Result<()> {
    let (model, stats) = load_model(ckpt)?;
    let records = load_csv(data)?;
    let samples = checkpoint_samples(&records, &model, &stats, SplitArg::All)?;
    let chosen: Vec<&WindowSequenceSample> = samples.iter().take(count.max(1)).collect();
    let (x, _) = bgn::data::collate(&chosen);
    let tape = Tape::new();
    let p = model.store.bind(&tape);
    let mut bn = model.bn.clone();
    let mut unused = stream(0, Purpose::Dropout, 0);
    let fwd = model.arch.forward(&p, &mut bn, &x, chosen.len(), Pass::eval(&mut unused))?;
    let adj = fwd
        .adjacency
        .ok_or_else(|| BgnError::Config("this model has no graph stage (ablation no_gnn)".into()))?
        .value();
    let hard = harden(&adj, threshold);
    let (graphs, n) = (adj.shape()[0], adj.shape()[1]);
    let per = graphs / chosen.len();
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["sample", "t", "i", "j", "weight", "hard"])?;
    for g in 0..graphs {
        for i in 0..n {
            for j in 0..n {
                w.write_record([
                    (g / per).to_string(),
                    (g % per).to_string(),
                    i.to_string(),
                    j.to_string(),
                    adj.get(&[g, i, j]).to_string(),
                    hard.get(&[g, i, j]).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Comparison<'a> {
    mode: GenMode,
    rows: &'a [bgn::genmod::ComparisonRow],
}

fn write_comparison(dir: &Path, cfg: &TrainConfig, mode: GenMode, rows: &[bgn::genmod::ComparisonRow]) -> Result<()> {
    create_dir(dir)?;
    write_json(dir.join(rundir::CONFIG_FILE), cfg)?;
    write_json(dir.join("comparison.json"), &Comparison { mode, rows })?;
    for r in rows {
        eprintln!("{:<5} rmse {:.3} ± {:.3}  mae {:.3} ± {:.3}", r.model, r.rmse.mean, r.rmse.std, r.mae.mean, r.mae.std);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn augment_vae(
    data: &Path,
    out: &Path,
    count: usize,
    compare: Option<&Path>,
    runs: Option<usize>,
    jobs: usize,
    args: &ConfigArgs,
) -> Result<()> {
    let cfg = resolve_config(args)?;
    if count == 0 {
        return Err(BgnError::InvalidArgument("--count must be positive".into()));
    }
    let records = load_csv(data)?;
    let splits = prepare_splits(&records, &cfg)?;
    let mut run = train_vae(&cfg, &splits.train)?;
    if let Some(last) = run.curve.last() {
        eprintln!("vae: loss {:.5} (recon {:.5}, kl {:.5}, graph {:.5}, label {:.5})", last.loss, last.recon, last.kl, last.bce, last.label);
    }
    let generated = vae_generate(&mut run.model, count, cfg.seed)?;
    let train_records = select_batteries(&records, &splits.batteries.train);
    let out_records = generated_records(&generated, &cfg.window_spec(), &splits.stats, Cadence::estimate(&train_records));
    write_csv(out, &out_records)?;
    if let Some(dir) = compare {
        let rows = retrain_with_generated(&cfg, &splits, &generated, GenMode::Augment, &seeds(&cfg, runs), jobs)?;
        write_comparison(dir, &cfg, GenMode::Augment, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ImputeReport {
    mask_rate: f64,
    windows: usize,
    masked_entries: usize,
    /// Over hidden entries, in normalized units.
    imputed_rmse: f64,
    mean_fill_rmse: f64,
    final_step: Option<bgn::genmod::WganStep>,
}

fn sidecar(out: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "imputed".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

#[allow(clippy::too_many_arguments)]
pub fn impute_wgan(
    data: &Path,
    out: &Path,
    mask_rate: f64,
    steps: usize,
    compare: Option<&Path>,
    runs: Option<usize>,
    jobs: usize,
    args: &ConfigArgs,
) -> Result<()> {
    let cfg = resolve_config(args)?;
    if !(0.0..1.0).contains(&mask_rate) {
        return Err(BgnError::InvalidArgument(format!("--mask-rate must lie in [0, 1), got {mask_rate}")));
    }
    let records = load_csv(data)?;
    let stats = NormalizationStats::fit(&records)?;
    let windows = record_windows(&records, &stats, cfg.window)?;
    let mask = bernoulli_mask(windows.x.shape(), 1.0 - mask_rate, &mut stream(cfg.seed, Purpose::Mask, 1 << 40));
    let wcfg = WganConfig {
        d: cfg.d,
        hidden: cfg.hidden,
        gamma: cfg.gamma,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        steps,
        clip_norm: cfg.clip_norm,
        seed: cfg.seed,
        ..WganConfig::default()
    };
    let mut model = WganModel::new(&wcfg, windows.x.shape()[1], cfg.window)?;
    let log = train_wgan(&mut model, &windows.x, Some(&mask))?;
    let imputed = wgan_impute(&windows.x, &mask, &model)?;
    let out_records = records_from_windows(&records, &windows, &imputed, &stats)?;
    write_csv(out, &out_records)?;
    write_mask_sidecar(&sidecar(out, "mask.csv"), &records, &windows, &mask)?;
    let masked = mask.data().iter().filter(|&&v| v == 0.0).count();
    let (imputed_rmse, mean_fill_rmse) = if masked > 0 {
        (
            masked_rmse(&windows.x, &imputed, &mask)?,
            masked_rmse(&windows.x, &mean_impute(&windows.x, &mask)?, &mask)?,
        )
    } else {
        (0.0, 0.0)
    };
    eprintln!("imputed rmse {imputed_rmse:.5} vs mean fill {mean_fill_rmse:.5} over {masked} hidden readings");
    write_json(
        sidecar(out, "report.json"),
        &ImputeReport {
            mask_rate,
            windows: windows.x.shape()[0],
            masked_entries: masked,
            imputed_rmse,
            mean_fill_rmse,
            final_step: log.last().copied(),
        },
    )?;
    if let Some(dir) = compare {
        let splits = prepare_splits(&records, &cfg)?;
        let imputed_splits = prepare_splits(&out_records, &cfg)?;
        let rows = retrain_with_generated(&cfg, &splits, &imputed_splits.train, GenMode::Impute, &seeds(&cfg, runs), jobs)?;
        write_comparison(dir, &cfg, GenMode::Impute, &rows)?;
    }
    Ok(())
}

pub fn plot_predictions(predictions: &Path, out: &Path) -> Result<()> {
    let rows: Vec<PredictionRow> = rundir::read_predictions(predictions)?;
    std::fs::write(out, render_svg(&rows))?;
    Ok(())
}
