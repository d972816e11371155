//! Losses (normalized units) and evaluation metrics (RUL units).

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Tensor, Var};

/// Report columns for the approximation-error table, in cycles.
pub const APPROX_THRESHOLDS: [f64; 6] = [1.0, 2.0, 3.0, 10.0, 20.0, 40.0];

fn check_pair(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return shape_err(op, format!("{a} predictions vs {b} targets"));
    }
    if a == 0 {
        return invalid(format!("{op} on an empty batch"));
    }
    Ok(())
}

/// `(1/β) Σ (pred − target)²`
pub fn mse_loss<'t>(pred: Var<'t>, target: &Tensor) -> Result<Var<'t>> {
    check_pair("mse_loss", pred.value().len(), target.len())?;
    pred.reshape(target.shape())?.add_const(&target.map(|v| -v))?.square()?.mean()
}

/// `Σ log(var)/2 + (y − mu)² / (2 var)` summed over the batch.
pub fn gaussian_nll_loss<'t>(mu: Var<'t>, var: Var<'t>, target: &Tensor) -> Result<Var<'t>> {
    check_pair("gaussian_nll_loss", mu.value().len(), target.len())?;
    check_pair("gaussian_nll_loss", var.value().len(), target.len())?;
    if var.value().data().iter().any(|&v| !(v > 0.0)) {
        return invalid("gaussian_nll_loss needs strictly positive variance");
    }
    let shape = target.shape();
    let (mu, var) = (mu.reshape(shape)?, var.reshape(shape)?);
    let sq = mu.add_const(&target.map(|v| -v))?.square()?;
    var.ln()?.scale(0.5)?.add(sq.div(var.scale(2.0)?)?)?.sum()
}

/// Root mean squared error after multiplying both sides by `scale`.
pub fn rmse(pred: &[f64], target: &[f64], scale: f64) -> Result<f64> {
    check_pair("rmse", pred.len(), target.len())?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| ((p - t) * scale).powi(2)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], target: &[f64], scale: f64) -> Result<f64> {
    check_pair("mae", pred.len(), target.len())?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| ((p - t) * scale).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Percentage of samples whose absolute error is strictly below each
/// threshold, in threshold order.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxErrorTable(pub Vec<(f64, f64)>);

impl ApproxErrorTable {
    pub fn get(&self, threshold: f64) -> Option<f64> {
        self.0.iter().find(|(t, _)| *t == threshold).map(|&(_, p)| p)
    }
}

impl Serialize for ApproxErrorTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (t, p) in &self.0 {
            map.serialize_entry(&t.to_string(), p)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ApproxErrorTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ApproxErrorTable;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from threshold to percentage")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> std::result::Result<Self::Value, A::Error> {
                let mut rows = Vec::new();
                while let Some((k, v)) = m.next_entry::<String, f64>()? {
                    let t = k.parse::<f64>().map_err(serde::de::Error::custom)?;
                    rows.push((t, v));
                }
                rows.sort_by(|a, b| a.0.total_cmp(&b.0));
                Ok(ApproxErrorTable(rows))
            }
        }
        d.deserialize_map(V)
    }
}

pub fn approximation_error_table(
    pred: &[f64],
    target: &[f64],
    scale: f64,
    thresholds: &[f64],
) -> Result<ApproxErrorTable> {
    check_pair("approximation_error_table", pred.len(), target.len())?;
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return invalid("thresholds must be sorted ascending");
    }
    let errs: Vec<f64> = pred.iter().zip(target).map(|(p, t)| ((p - t) * scale).abs()).collect();
    let n = errs.len() as f64;
    Ok(ApproxErrorTable(
        thresholds
            .iter()
            .map(|&tau| (tau, 100.0 * errs.iter().filter(|&&e| e < tau).count() as f64 / n))
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub approx_error: ApproxErrorTable,
    pub n: usize,
}

impl MetricsReport {
    /// Metrics of normalized predictions, reported in units of `scale`.
    pub fn compute(pred: &[f64], target: &[f64], scale: f64) -> Result<Self> {
        Ok(Self {
            rmse: rmse(pred, target, scale)?,
            mae: mae(pred, target, scale)?,
            approx_error: approximation_error_table(pred, target, scale, &APPROX_THRESHOLDS)?,
            n: pred.len(),
        })
    }
}
