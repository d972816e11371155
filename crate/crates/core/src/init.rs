//! Parameter initialization.
//!
//! Weights are drawn from `U(-√(1/fan_in), √(1/fan_in))`, biases start at
//! zero, node embeddings from `N(0, 1/√d)` (standard deviation `1/√d`).

use crate::rng::{normal, StreamRng};
use crate::tensor::{ParamId, ParamStore, Tensor};
use rand::Rng;

pub fn fan_in_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in.max(1) as f64).sqrt()
}

pub fn uniform_weight(rng: &mut StreamRng, shape: &[usize], fan_in: usize) -> Tensor {
    let a = fan_in_bound(fan_in);
    Tensor::from_fn(shape, |_| rng.random_range(-a..=a))
}

/// Adds an `[fan_in × fan_out]` weight (row-vector convention).
pub fn add_weight(store: &mut ParamStore, rng: &mut StreamRng, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
    store.add(name, uniform_weight(rng, &[fan_in, fan_out], fan_in))
}

pub fn add_bias(store: &mut ParamStore, name: &str, size: usize) -> ParamId {
    store.add(name, Tensor::zeros(&[size]))
}

pub fn add_embeddings(store: &mut ParamStore, rng: &mut StreamRng, name: &str, n: usize, d: usize) -> ParamId {
    let std = 1.0 / (d as f64).sqrt();
    store.add(name, Tensor::from_fn(&[n, d], |_| std * normal(rng)))
}
