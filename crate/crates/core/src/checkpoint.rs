//! Binary checkpoint format.
//!
//! ```text
//! "BGN1" | version u32 | meta_len u64 | meta JSON
//! count u64 | count × (name_len u64 | name | rank u64 | dims u64… | values f64…)
//! ```
//!
//! All integers and floats are little-endian. The JSON metadata carries the
//! configuration, node count, batch-norm running statistics and the
//! normalization statistics of the training split.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::NormalizationStats;
use crate::error::{BgnError, Result};
use crate::model::BgnModel;
use crate::tensor::nn::BatchNormState;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"BGN1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    n: usize,
    bn: [BatchNormState; 2],
    stats: Option<NormalizationStats>,
}

fn corrupt(msg: impl Into<String>) -> BgnError {
    BgnError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &BgnModel, stats: Option<&NormalizationStats>) -> Result<()> {
    let meta = Meta {
        config: model.config().clone(),
        n: model.arch.n,
        bn: model.bn.clone(),
        stats: stats.cloned(),
    };
    let json = serde_json::to_vec(&meta)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(model.store.len() as u64).to_le_bytes())?;
    for (name, t) in model.store.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| corrupt(format!("truncated checkpoint: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_len<R: Read>(r: &mut R, limit: u64, what: &str) -> Result<usize> {
    let v = read_u64(r)?;
    if v > limit {
        return Err(corrupt(format!("{what} {v} exceeds {limit}")));
    }
    Ok(v as usize)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(BgnModel, Option<NormalizationStats>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("file too short"))?;
    if &magic != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb).map_err(|_| corrupt("file too short"))?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = read_len(&mut r, 1 << 24, "metadata length")?;
    let mut json = vec![0u8; meta_len];
    r.read_exact(&mut json).map_err(|_| corrupt("truncated metadata"))?;
    let meta: Meta = serde_json::from_slice(&json)?;
    let mut model = BgnModel::new(&meta.config, meta.n)?;
    let count = read_len(&mut r, 1 << 20, "parameter count")?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_len(&mut r, 1 << 12, "name length")?;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| corrupt("truncated name"))?;
        let name = String::from_utf8(name).map_err(|_| corrupt("parameter name is not UTF-8"))?;
        let rank = read_len(&mut r, 8, "rank")?;
        let shape = (0..rank).map(|_| read_len(&mut r, 1 << 28, "dimension")).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b).map_err(|_| corrupt(format!("truncated values of `{name}`")))?;
            data.push(f64::from_le_bytes(b));
        }
        records.push((name, Tensor::new(shape, data)?));
    }
    model.store.load_from(records.iter().map(|(n, t)| (n.as_str(), t)))?;
    let d = meta.config.d;
    if meta.bn.iter().any(|s| s.running_mean.len() != d || s.running_var.len() != d) {
        return Err(corrupt("batch-norm statistics do not match the embedding size"));
    }
    model.bn = meta.bn;
    Ok((model, meta.stats))
}

pub fn save(path: impl AsRef<Path>, model: &BgnModel, stats: Option<&NormalizationStats>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), model, stats)
}

pub fn load(path: impl AsRef<Path>) -> Result<(BgnModel, Option<NormalizationStats>)> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
