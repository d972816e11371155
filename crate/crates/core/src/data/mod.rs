//! Battery time-series ingestion, windowing and splitting.

mod norm;
mod split;
mod synth;
mod windows;

pub use norm::{NormalizationStats, CLAMP_HI, CLAMP_LO};
pub use split::{kfold_split, samples_for, split_batteries, BatterySplit, Fold};
pub use synth::{inject_label_noise, synth_degradation, STEPS_PER_CYCLE};
pub use windows::{collate, make_windows, window_count, WindowSequenceSample, WindowSet, WindowSpec};

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BgnError, Result};

/// Column order of the CSV schema.
pub const HEADER: [&str; 10] = [
    "battery_id",
    "cycle",
    "step",
    "voltage",
    "current",
    "charge_capacity",
    "discharge_capacity",
    "charge_energy",
    "discharge_energy",
    "rul",
];

/// The measured channels, one graph node each.
pub const PARAMETERS: [&str; 6] = [
    "voltage",
    "current",
    "charge_capacity",
    "discharge_capacity",
    "charge_energy",
    "discharge_energy",
];

pub const N_PARAMS: usize = PARAMETERS.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRecord {
    pub battery_id: String,
    pub cycle: u32,
    pub step: u32,
    pub voltage: f64,
    pub current: f64,
    pub charge_capacity: f64,
    pub discharge_capacity: f64,
    pub charge_energy: f64,
    pub discharge_energy: f64,
    pub rul: f64,
}

impl BatteryRecord {
    pub fn features(&self) -> [f64; N_PARAMS] {
        [
            self.voltage,
            self.current,
            self.charge_capacity,
            self.discharge_capacity,
            self.charge_energy,
            self.discharge_energy,
        ]
    }

    pub fn set_features(&mut self, f: [f64; N_PARAMS]) {
        [
            self.voltage,
            self.current,
            self.charge_capacity,
            self.discharge_capacity,
            self.charge_energy,
            self.discharge_energy,
        ] = f;
    }

    fn key(&self) -> (&str, u32, u32) {
        (&self.battery_id, self.cycle, self.step)
    }
}

/// Reads a CSV in the canonical schema. Records come back sorted by
/// `(battery_id, cycle, step)`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<BatteryRecord>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    for (k, want) in HEADER.iter().enumerate() {
        match header.get(k) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(BgnError::Schema(format!(
                    "{shown}: column {} is `{got}`, expected `{want}`",
                    k + 1
                )))
            }
            None => return Err(BgnError::Schema(format!("{shown}: missing column `{want}`"))),
        }
    }
    if header.len() > HEADER.len() {
        return Err(BgnError::Schema(format!(
            "{shown}: unexpected extra column `{}`",
            &header[HEADER.len()]
        )));
    }
    let mut records = Vec::new();
    for row in rdr.deserialize::<BatteryRecord>() {
        let rec = row.map_err(|e| BgnError::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = records.len() as u64 + 2;
        let bad = |msg: String| BgnError::Parse { path: path.to_path_buf(), line, msg };
        if rec.cycle < 1 {
            return Err(bad("cycle must be >= 1".into()));
        }
        if !(rec.rul >= 0.0) || !rec.rul.is_finite() {
            return Err(bad(format!("rul must be finite and >= 0, got {}", rec.rul)));
        }
        if let Some(k) = rec.features().iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("non-finite {}", PARAMETERS[k])));
        }
        records.push(rec);
    }
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    if let Some(w) = records.windows(2).find(|w| w[0].key() == w[1].key()) {
        let (id, c, s) = w[0].key();
        return Err(BgnError::Data(format!(
            "{shown}: duplicate record battery `{id}` cycle {c} step {s}"
        )));
    }
    Ok(records)
}

pub fn write_csv(path: impl AsRef<Path>, records: &[BatteryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Distinct battery ids in sorted order.
pub fn battery_ids(records: &[BatteryRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.battery_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(String::from)
        .collect()
}

/// Records of the given batteries, order preserved.
pub fn select_batteries(records: &[BatteryRecord], ids: &[String]) -> Vec<BatteryRecord> {
    let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    records.iter().filter(|r| set.contains(r.battery_id.as_str())).cloned().collect()
}

/// Splits sorted records into per-battery slices.
pub fn group_by_battery(records: &[BatteryRecord]) -> Vec<&[BatteryRecord]> {
    records.chunk_by(|a, b| a.battery_id == b.battery_id).collect()
}
