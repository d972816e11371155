use serde::{Deserialize, Serialize};

use super::{group_by_battery, BatteryRecord, NormalizationStats, N_PARAMS};
use crate::error::{invalid, Result};
use crate::parallel;
use crate::tensor::Tensor;

/// Window geometry: `window` steps per window, windows start every `stride`
/// steps, and a sample is `seq_len` consecutive windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window: usize,
    pub stride: usize,
    pub seq_len: usize,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.seq_len == 0 {
            return invalid(format!("window geometry must be positive: {self:?}"));
        }
        Ok(())
    }
}

/// Samples a battery of `steps` records yields.
pub fn window_count(steps: usize, spec: &WindowSpec) -> usize {
    if steps < spec.window {
        return 0;
    }
    let windows = (steps - spec.window) / spec.stride + 1;
    windows.saturating_sub(spec.seq_len - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSequenceSample {
    /// `[S × n × W]`, normalized channels.
    pub features: Tensor,
    /// RUL at the last step of the last window over `rul_max`.
    pub target: f64,
    pub battery_id: String,
    /// Index of the last covered record within its battery.
    pub end_index: usize,
}

#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub samples: Vec<WindowSequenceSample>,
    /// Feature values clamped into the normalization band.
    pub clamped: usize,
}

fn battery_windows(
    recs: &[BatteryRecord],
    spec: &WindowSpec,
    stats: &NormalizationStats,
) -> (Vec<WindowSequenceSample>, usize) {
    let (w, s) = (spec.window, spec.seq_len);
    let mut clamped = 0;
    let norm: Vec<[f64; N_PARAMS]> = recs
        .iter()
        .map(|r| {
            let mut out = [0.0; N_PARAMS];
            for (k, v) in r.features().into_iter().enumerate() {
                let (x, c) = stats.normalize(k, v);
                out[k] = x;
                clamped += c as usize;
            }
            out
        })
        .collect();
    let count = window_count(recs.len(), spec);
    let mut samples = Vec::with_capacity(count);
    for first in 0..count {
        let mut data = Vec::with_capacity(s * N_PARAMS * w);
        for win in first..first + s {
            let start = win * spec.stride;
            for k in 0..N_PARAMS {
                data.extend(norm[start..start + w].iter().map(|row| row[k]));
            }
        }
        let end_index = (first + s - 1) * spec.stride + w - 1;
        samples.push(WindowSequenceSample {
            features: Tensor::new(vec![s, N_PARAMS, w], data).expect("window layout"),
            target: stats.target(recs[end_index].rul),
            battery_id: recs[0].battery_id.clone(),
            end_index,
        });
    }
    (samples, clamped)
}

/// Sliding window sequences per battery, ordered by `(battery_id,
/// end_index)`. Records must be sorted as [`super::load_csv`] returns them.
pub fn make_windows(
    records: &[BatteryRecord],
    spec: &WindowSpec,
    stats: &NormalizationStats,
) -> Result<WindowSet> {
    spec.validate()?;
    let groups = group_by_battery(records);
    let per = parallel::map(&groups, |g| battery_windows(g, spec, stats));
    let mut set = WindowSet::default();
    for (samples, clamped) in per {
        set.samples.extend(samples);
        set.clamped += clamped;
    }
    if set.clamped > 0 {
        log::warn!("{} feature values clamped to [{}, {}]", set.clamped, super::CLAMP_LO, super::CLAMP_HI);
    }
    Ok(set)
}

/// Stacks samples into a `[B·S·n × W]` feature matrix (rows ordered
/// batch, window, node) and the target vector.
pub fn collate(samples: &[&WindowSequenceSample]) -> (Tensor, Tensor) {
    let w = samples.first().map(|s| s.features.cols()).unwrap_or(0);
    let mut data = Vec::with_capacity(samples.iter().map(|s| s.features.len()).sum());
    for s in samples {
        data.extend_from_slice(s.features.data());
    }
    let rows = if w == 0 { 0 } else { data.len() / w };
    let x = Tensor::new(vec![rows, w], data).expect("collate layout");
    let y = Tensor::from_vec(samples.iter().map(|s| s.target).collect());
    (x, y)
}
