use serde::{Deserialize, Serialize};

use super::{BatteryRecord, N_PARAMS, PARAMETERS};
use crate::error::{BgnError, Result};

/// Normalized values outside the training range are clamped to this band.
pub const CLAMP_LO: f64 = -0.5;
pub const CLAMP_HI: f64 = 1.5;

/// Per-channel min/max and the RUL scale, fitted on training records only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: [f64; N_PARAMS],
    pub max: [f64; N_PARAMS],
    pub rul_max: f64,
}

impl NormalizationStats {
    pub fn fit(records: &[BatteryRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(BgnError::Data("cannot fit normalization on no records".into()));
        }
        let mut min = [f64::INFINITY; N_PARAMS];
        let mut max = [f64::NEG_INFINITY; N_PARAMS];
        let mut rul_max = 0.0f64;
        for r in records {
            for (k, v) in r.features().into_iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
            rul_max = rul_max.max(r.rul);
        }
        if let Some(k) = (0..N_PARAMS).find(|&k| !(max[k] > min[k])) {
            return Err(BgnError::Data(format!(
                "parameter `{}` is constant ({}) in the training records",
                PARAMETERS[k], min[k]
            )));
        }
        if !(rul_max > 0.0) {
            return Err(BgnError::Data("rul is zero for every training record".into()));
        }
        Ok(Self { min, max, rul_max })
    }

    /// Min-max scales channel `k`; the flag is set when the value had to be
    /// clamped.
    pub fn normalize(&self, k: usize, v: f64) -> (f64, bool) {
        let x = (v - self.min[k]) / (self.max[k] - self.min[k]);
        let c = x.clamp(CLAMP_LO, CLAMP_HI);
        (c, c != x)
    }

    pub fn denormalize(&self, k: usize, x: f64) -> f64 {
        self.min[k] + x * (self.max[k] - self.min[k])
    }

    pub fn target(&self, rul: f64) -> f64 {
        (rul / self.rul_max).clamp(0.0, 1.0)
    }
}
