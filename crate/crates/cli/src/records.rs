//! Conversions between window samples and CSV records.

use std::path::Path;

use bgn::data::{group_by_battery, BatteryRecord, NormalizationStats, WindowSequenceSample, WindowSpec, HEADER, N_PARAMS};
use bgn::genmod::RecordWindows;
use bgn::tensor::Tensor;
use bgn::Result;

/// Average RUL decrease per record and records per cycle, estimated from
/// real batteries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cadence {
    pub rul_per_step: f64,
    pub steps_per_cycle: f64,
}

impl Cadence {
    pub fn estimate(records: &[BatteryRecord]) -> Self {
        let mut slopes = Vec::new();
        let mut cycles = 0usize;
        for b in group_by_battery(records) {
            if b.len() > 1 {
                slopes.push((b[0].rul - b[b.len() - 1].rul) / (b.len() - 1) as f64);
            }
            cycles += 1 + b.windows(2).filter(|w| w[0].cycle != w[1].cycle).count();
        }
        let rul_per_step = if slopes.is_empty() { 0.0 } else { slopes.iter().sum::<f64>() / slopes.len() as f64 };
        Self {
            rul_per_step: rul_per_step.max(0.0),
            steps_per_cycle: (records.len() as f64 / cycles.max(1) as f64).max(1.0),
        }
    }
}

/// Lays a generated sample's windows out on a step axis (window `s` starts
/// at `s·stride`; where windows overlap the earlier one is kept) and turns
/// it into denormalized records of battery `synthetic_{index:05}`. The
/// sample's target gives the RUL of the last step; earlier steps count up
/// at the estimated cadence.
pub fn generated_records(
    samples: &[WindowSequenceSample],
    spec: &WindowSpec,
    stats: &NormalizationStats,
    cadence: Cadence,
) -> Vec<BatteryRecord> {
    let mut out = Vec::new();
    for (idx, s) in samples.iter().enumerate() {
        let shape = s.features.shape();
        let (windows, n, w) = (shape[0], shape[1], shape[2]);
        let mut steps: Vec<(usize, [f64; N_PARAMS])> = Vec::new();
        for si in 0..windows {
            for t in 0..w {
                let p = si * spec.stride + t;
                if steps.last().is_some_and(|&(q, _)| q >= p) {
                    continue;
                }
                let mut f = [0.0; N_PARAMS];
                for (k, v) in f.iter_mut().enumerate().take(n) {
                    *v = stats.denormalize(k, s.features.get(&[si, k, t]));
                }
                steps.push((p, f));
            }
        }
        let last = steps.last().map(|s| s.0).unwrap_or(0);
        let rul_end = s.target * stats.rul_max;
        for (p, f) in steps {
            let mut rec = BatteryRecord {
                battery_id: format!("synthetic_{idx:05}"),
                cycle: 1 + (p as f64 / cadence.steps_per_cycle) as u32,
                step: p as u32,
                voltage: 0.0,
                current: 0.0,
                charge_capacity: 0.0,
                discharge_capacity: 0.0,
                charge_energy: 0.0,
                discharge_energy: 0.0,
                rul: rul_end + (last - p) as f64 * cadence.rul_per_step,
            };
            rec.set_features(f);
            out.push(rec);
        }
    }
    out
}

/// Per-record observed flags (1 = kept, 0 = imputed), with the same key
/// columns as the data.
pub fn write_mask_sidecar(path: &Path, records: &[BatteryRecord], windows: &RecordWindows, mask: &Tensor) -> Result<()> {
    let w = windows.x.shape()[2];
    let mut flags = vec![[1u8; N_PARAMS]; records.len()];
    for (c, chunk) in windows.rows.chunks(w).enumerate() {
        for (t, &r) in chunk.iter().enumerate() {
            for (k, f) in flags[r].iter_mut().enumerate() {
                *f = mask.get(&[c, k, t]) as u8;
            }
        }
    }
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(HEADER[..3].iter().chain(&HEADER[3..3 + N_PARAMS]))?;
    for (r, f) in records.iter().zip(&flags) {
        let mut row = vec![r.battery_id.clone(), r.cycle.to_string(), r.step.to_string()];
        row.extend(f.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
