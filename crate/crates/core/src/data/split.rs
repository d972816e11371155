use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::WindowSequenceSample;
use crate::error::{BgnError, Result};
use crate::rng::{permutation, stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Partitions battery ids into `k` folds of near-equal size (differing by at
/// most one battery). Fold `f` holds out its own batteries as validation.
pub fn kfold_split(battery_ids: &[String], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(BgnError::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    let ids = sorted_unique(battery_ids);
    if ids.len() < k {
        return Err(BgnError::Data(format!("{} batteries cannot fill {k} folds", ids.len())));
    }
    let order = permutation(&mut stream(seed, Purpose::Split, 0), ids.len());
    let mut held = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        held[pos % k].push(ids[i].clone());
    }
    Ok(held
        .into_iter()
        .map(|mut val| {
            val.sort();
            let train = ids.iter().filter(|id| !val.contains(id)).cloned().collect();
            Fold { train, val }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Random battery-level train/val/test split. Each non-zero fraction gets at
/// least one battery; training keeps at least one.
pub fn split_batteries(battery_ids: &[String], val_fraction: f64, test_fraction: f64, seed: u64) -> Result<BatterySplit> {
    let ids = sorted_unique(battery_ids);
    let n = ids.len();
    let take = |f: f64| if f > 0.0 { ((n as f64 * f).round() as usize).max(1) } else { 0 };
    let (n_val, n_test) = (take(val_fraction), take(test_fraction));
    if n_val + n_test >= n {
        return Err(BgnError::Data(format!(
            "{n} batteries leave none for training with {n_val} validation and {n_test} test"
        )));
    }
    let order = permutation(&mut stream(seed, Purpose::Split, 1), n);
    let pick = |r: std::ops::Range<usize>| {
        let mut v: Vec<String> = order[r].iter().map(|&i| ids[i].clone()).collect();
        v.sort();
        v
    };
    Ok(BatterySplit {
        test: pick(0..n_test),
        val: pick(n_test..n_test + n_val),
        train: pick(n_test + n_val..n),
    })
}

/// Indices of the samples belonging to the given batteries.
pub fn samples_for(samples: &[WindowSequenceSample], ids: &[String]) -> Vec<usize> {
    let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| set.contains(s.battery_id.as_str()))
        .map(|(i, _)| i)
        .collect()
}

fn sorted_unique(ids: &[String]) -> Vec<String> {
    ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}
