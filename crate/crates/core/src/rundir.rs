//! Files of a training run directory.
//!
//! ```text
//! config.json      resolved configuration
//! checkpoint.bgn   parameters, batch-norm statistics, normalization
//! metrics.json     split name → metrics in RUL units
//! curve.csv        epoch,train_loss,val_rmse,lr
//! predictions.csv  battery_id,end_index,y_true,y_pred[,var]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::WindowSequenceSample;
use crate::error::{shape_err, BgnError, Result};
use crate::objectives::MetricsReport;
use crate::trainer::{CurvePoint, Prediction};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bgn";
pub const METRICS_FILE: &str = "metrics.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_metrics(path: impl AsRef<Path>, metrics: &BTreeMap<String, MetricsReport>) -> Result<()> {
    write_json(path, metrics)
}

pub fn write_curve(path: impl AsRef<Path>, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_rmse", "lr"])?;
    for c in curve {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// One line of `predictions.csv`, in RUL units (`var` in RUL units squared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub battery_id: String,
    pub end_index: usize,
    pub y_true: f64,
    pub y_pred: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<f64>,
}

/// Joins samples with their normalized predictions and scales by `rul_max`.
pub fn prediction_rows(samples: &[WindowSequenceSample], preds: &[Prediction], rul_max: f64) -> Result<Vec<PredictionRow>> {
    if samples.len() != preds.len() {
        return shape_err("prediction_rows", format!("{} samples vs {} predictions", samples.len(), preds.len()));
    }
    Ok(samples
        .iter()
        .zip(preds)
        .map(|(s, p)| PredictionRow {
            battery_id: s.battery_id.clone(),
            end_index: s.end_index,
            y_true: s.target * rul_max,
            y_pred: p.pred * rul_max,
            var: p.var.map(|v| v * rul_max * rul_max),
        })
        .collect())
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<()> {
    let with_var = rows.first().is_some_and(|r| r.var.is_some());
    if rows.iter().any(|r| r.var.is_some() != with_var) {
        return Err(BgnError::InvalidArgument("rows disagree on the var column".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["battery_id", "end_index", "y_true", "y_pred"];
    if with_var {
        header.push("var");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.battery_id.clone(), r.end_index.to_string(), r.y_true.to_string(), r.y_pred.to_string()];
        if let Some(v) = r.var {
            rec.push(v.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `predictions.csv`; the `var` column is optional.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let want = ["battery_id", "end_index", "y_true", "y_pred"];
    let ok = header.len() >= 4
        && header.len() <= 5
        && want.iter().zip(header.iter()).all(|(a, b)| *a == b)
        && (header.len() == 4 || &header[4] == "var");
    if !ok {
        return Err(BgnError::Schema(format!(
            "{}: expected columns battery_id,end_index,y_true,y_pred[,var], got {}",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize::<PredictionRow>().enumerate() {
        let row = r.map_err(|e| BgnError::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 2,
            msg: e.to_string(),
        })?;
        if !(row.y_true.is_finite() && row.y_pred.is_finite() && row.var.is_none_or(|v| v.is_finite() && v >= 0.0)) {
            return Err(BgnError::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                msg: "non-finite value or negative variance".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}
