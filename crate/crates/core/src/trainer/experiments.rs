use serde::{Deserialize, Serialize};

use super::{evaluate, train_one};
use crate::config::{Ablation, TrainConfig};
use crate::data::{
    battery_ids, kfold_split, make_windows, select_batteries, split_batteries, BatteryRecord, BatterySplit,
    NormalizationStats, WindowSequenceSample,
};
use crate::error::{invalid, BgnError, Result};
use crate::objectives::{MetricsReport, APPROX_THRESHOLDS};
use crate::parallel::map_jobs;

/// Windowed train/val/test samples with the statistics fitted on training
/// batteries.
#[derive(Debug, Clone)]
pub struct Splits {
    pub batteries: BatterySplit,
    pub stats: NormalizationStats,
    pub train: Vec<WindowSequenceSample>,
    pub val: Vec<WindowSequenceSample>,
    pub test: Vec<WindowSequenceSample>,
}

pub fn prepare_splits(records: &[BatteryRecord], config: &TrainConfig) -> Result<Splits> {
    config.validate()?;
    let ids = battery_ids(records);
    let batteries = split_batteries(&ids, config.val_fraction, config.test_fraction, config.seed)?;
    let stats = NormalizationStats::fit(&select_batteries(records, &batteries.train))?;
    let spec = config.window_spec();
    let window = |ids: &[String]| -> Result<Vec<WindowSequenceSample>> {
        Ok(make_windows(&select_batteries(records, ids), &spec, &stats)?.samples)
    };
    let (train, val, test) = (window(&batteries.train)?, window(&batteries.val)?, window(&batteries.test)?);
    if train.is_empty() {
        return Err(BgnError::Data(format!(
            "no training samples: batteries are shorter than {} windows of {} steps",
            config.seq_len, config.window
        )));
    }
    Ok(Splits { batteries, stats, train, val, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldEntry {
    pub fold: usize,
    pub val_batteries: Vec<String>,
    pub best_epoch: usize,
    pub val: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KfoldReport {
    pub folds: Vec<FoldEntry>,
    pub val_rmse: MeanStd,
}

/// Trains one model per battery fold; statistics are refitted on each fold's
/// training batteries.
pub fn run_kfold(config: &TrainConfig, records: &[BatteryRecord], k: usize, jobs: usize) -> Result<KfoldReport> {
    config.validate()?;
    let folds = kfold_split(&battery_ids(records), k, config.seed)?;
    let spec = config.window_spec();
    let results = map_jobs(&folds, jobs, |i, fold| -> Result<FoldEntry> {
        let train_recs = select_batteries(records, &fold.train);
        let stats = NormalizationStats::fit(&train_recs)?;
        let train = make_windows(&train_recs, &spec, &stats)?.samples;
        let val = make_windows(&select_batteries(records, &fold.val), &spec, &stats)?.samples;
        let run = train_one(config, &train, &val, stats.rul_max)?;
        Ok(FoldEntry {
            fold: i,
            val_batteries: fold.val.clone(),
            best_epoch: run.best_epoch,
            val: run.val,
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rmses: Vec<f64> = folds.iter().map(|f| f.val.rmse).collect();
    Ok(KfoldReport { val_rmse: mean_std(&rmses), folds })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxStat {
    pub threshold: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricsReport>,
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub approx_error: Vec<ApproxStat>,
}

impl EnsembleReport {
    pub fn from_runs(seeds: Vec<u64>, runs: Vec<MetricsReport>) -> Self {
        let col = |f: &dyn Fn(&MetricsReport) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        let approx_error = APPROX_THRESHOLDS
            .iter()
            .map(|&t| {
                let ms = col(&|r| r.approx_error.get(t).unwrap_or(f64::NAN));
                ApproxStat { threshold: t, mean: ms.mean, std: ms.std }
            })
            .collect();
        Self {
            rmse: col(&|r| r.rmse),
            mae: col(&|r| r.mae),
            approx_error,
            seeds,
            runs,
        }
    }
}

fn test_split<'a>(splits: &'a Splits) -> Result<&'a [WindowSequenceSample]> {
    if splits.test.is_empty() {
        return Err(BgnError::Data("test split has no samples".into()));
    }
    Ok(&splits.test)
}

fn train_and_test(config: &TrainConfig, splits: &Splits) -> Result<MetricsReport> {
    let run = train_one(config, &splits.train, &splits.val, splits.stats.rul_max)?;
    evaluate(&run.model, test_split(splits)?, splits.stats.rul_max, 1)
}

/// One training run per seed; test metrics are averaged across runs.
pub fn run_ensemble(config: &TrainConfig, splits: &Splits, seeds: &[u64], jobs: usize) -> Result<EnsembleReport> {
    if seeds.is_empty() {
        return invalid("an ensemble needs at least one run");
    }
    test_split(splits)?;
    let runs = map_jobs(seeds, jobs, |_, &seed| train_and_test(&TrainConfig { seed, ..config.clone() }, splits));
    Ok(EnsembleReport::from_runs(seeds.to_vec(), runs.into_iter().collect::<Result<_>>()?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub label: String,
    pub test_rmse: Vec<f64>,
    pub rmse: MeanStd,
    pub mae: MeanStd,
}

/// The full model and all five ablations, each trained once per seed on the
/// same splits.
pub fn run_ablation_suite(
    config: &TrainConfig,
    splits: &Splits,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    run_ablations(config, splits, &Ablation::ALL, seeds, jobs)
}

pub fn run_ablations(
    config: &TrainConfig,
    splits: &Splits,
    ablations: &[Ablation],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return invalid("ablation suite needs at least one seed");
    }
    test_split(splits)?;
    let tasks: Vec<(Ablation, u64)> = ablations.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let results = map_jobs(&tasks, jobs, |_, &(ablation, seed)| {
        train_and_test(&TrainConfig { ablation, seed, ..config.clone() }, splits)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ablations
        .iter()
        .enumerate()
        .map(|(i, &ablation)| {
            let rows = &results[i * seeds.len()..(i + 1) * seeds.len()];
            let test_rmse: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
            AblationRow {
                ablation,
                label: ablation.label().to_string(),
                rmse: mean_std(&test_rmse),
                mae: mean_std(&rows.iter().map(|r| r.mae).collect::<Vec<_>>()),
                test_rmse,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: Vec<usize>,
    pub hidden: Vec<usize>,
    pub lr: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            d: vec![16, 32, 48, 64, 96, 128],
            hidden: vec![16, 32, 48, 64, 96, 128],
            lr: vec![0.1, 0.01, 0.001, 0.0001],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub d: usize,
    pub hidden: usize,
    pub lr: f64,
    pub test: MetricsReport,
}

/// Evaluates every point of the grid; rows are sorted by `(d, hidden, lr)`.
pub fn run_grid(config: &TrainConfig, splits: &Splits, grid: &GridSpec, jobs: usize) -> Result<Vec<GridRow>> {
    let mut points = Vec::new();
    for &d in &grid.d {
        for &hidden in &grid.hidden {
            for &lr in &grid.lr {
                points.push((d, hidden, lr));
            }
        }
    }
    if points.is_empty() {
        return invalid("grid has no points");
    }
    test_split(splits)?;
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let results = map_jobs(&points, jobs, |_, &(d, hidden, lr)| {
        let cfg = TrainConfig { d, hidden, lr, ..config.clone() };
        train_and_test(&cfg, splits).map(|test| GridRow { d, hidden, lr, test })
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_degradation;
    use crate::trainer::tests::tiny_config;

    fn splits() -> (TrainConfig, Splits) {
        let cfg = TrainConfig {
            max_epochs: 1,
            val_fraction: 0.25,
            test_fraction: 0.25,
            ..tiny_config()
        };
        let recs = synth_degradation(4, 200, 0.01, 2);
        let s = prepare_splits(&recs, &cfg).unwrap();
        (cfg, s)
    }

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[8.0, 10.0]), MeanStd { mean: 9.0, std: 1.0 });
        assert_eq!(mean_std(&[3.0]).std, 0.0);
    }

    #[test]
    fn splits_are_disjoint() {
        let (_, s) = splits();
        for sample in &s.test {
            assert!(s.batteries.test.contains(&sample.battery_id));
            assert!(!s.batteries.train.contains(&sample.battery_id));
        }
        assert!(s.val.iter().all(|x| s.batteries.val.contains(&x.battery_id)));
    }

    #[test]
    fn ensemble_with_repeated_seed_has_zero_std() {
        let (cfg, s) = splits();
        let r = run_ensemble(&cfg, &s, &[4, 4], 2).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert_eq!(r.rmse.std, 0.0);
        assert_eq!(r.approx_error.len(), 6);
        assert!(run_ensemble(&cfg, &s, &[], 1).is_err());
    }

    #[test]
    fn ablation_table_has_six_rows() {
        let (cfg, s) = splits();
        let rows = run_ablation_suite(&cfg, &s, &[1], 3).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].label, "BGN");
        assert!(rows.iter().all(|r| r.test_rmse.len() == 1 && r.rmse.mean.is_finite()));
    }

    #[test]
    fn grid_rows_sorted() {
        let (cfg, s) = splits();
        let grid = GridSpec { d: vec![6, 4], hidden: vec![4], lr: vec![0.01, 0.001] };
        let rows = run_grid(&cfg, &s, &grid, 2).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.d, r.hidden, r.lr)).collect();
        assert_eq!(keys, vec![(4, 4, 0.001), (4, 4, 0.01), (6, 4, 0.001), (6, 4, 0.01)]);
        let one = GridSpec { d: vec![4], hidden: vec![4], lr: vec![0.01] };
        assert_eq!(run_grid(&cfg, &s, &one, 1).unwrap().len(), 1);
        let empty = GridSpec { d: vec![], hidden: vec![4], lr: vec![0.01] };
        assert!(run_grid(&cfg, &s, &empty, 1).is_err());
    }

    #[test]
    fn kfold_two_folds() {
        let cfg = TrainConfig { max_epochs: 1, ..tiny_config() };
        let recs = synth_degradation(4, 200, 0.01, 2);
        let r = run_kfold(&cfg, &recs, 2, 2).unwrap();
        assert_eq!(r.folds.len(), 2);
        let mean = (r.folds[0].val.rmse + r.folds[1].val.rmse) / 2.0;
        assert!((r.val_rmse.mean - mean).abs() < 1e-12);
        let again = run_kfold(&cfg, &recs, 2, 1).unwrap();
        assert_eq!(again.folds[0].val, r.folds[0].val);
    }
}
