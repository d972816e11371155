//! Seeded random streams.
//!
//! Every draw in the library comes from a `(seed, stream)` pair so that the
//! numbers a consumer sees do not depend on the order in which other
//! consumers were evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Well-known stream tags. The final stream id mixes a tag with a counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Gumbel = 3,
    Dropout = 4,
    Split = 5,
    Latent = 6,
    Mask = 7,
    Synth = 8,
    Noise = 9,
}

/// Independent stream for `(seed, purpose, counter)`.
pub fn stream(seed: u64, purpose: Purpose, counter: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ counter);
    rng
}

/// Standard Gumbel(0, 1) draw, `-ln(-ln U)` with `U` kept away from 0 and 1.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u = u.min(1.0 - f64::EPSILON);
    -(-u.ln()).ln()
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
