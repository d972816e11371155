//! Synthetic degradation data.
//!
//! Every battery `b` runs `steps` records of `STEPS_PER_CYCLE` steps per
//! cycle; step `t` belongs to cycle `c = t / P + 1` at phase `u = (t mod P)/P`
//! (charge for `u < 1/2`, discharge after). With life fraction
//! `l = (c - 1) / n_cycles`, per-battery draws `Q0 ~ U(1.98, 2.02)` and
//! `r0 ~ U(0.048, 0.052)`, and `k = ln 1.25` so that every battery ends its
//! life at 80% of its initial capacity:
//!
//! ```text
//! Q(c)   = Q0 · exp(-k · l)                      capacity
//! R(c)   = r0 · (1 + 4 (1 - Q/Q0))               internal resistance
//! I      = 1.5 (charge), -2 (1 + 0.1 sin 2πu) (discharge)
//! V      = OCV(u) + R · I,  OCV rising 3.4→4.2 on charge, falling 4.2→3.2 on discharge
//! Qc     = Q · (charged fraction of the cycle)   cumulative within the cycle
//! Qd     = 0.98 Q · (discharged fraction)         zero while charging
//! Ec     = Qc · (3.8 + 1.5 R)
//! Ed     = Qd · (3.7 - 2 R)
//! rul    = (steps - 1 - t) / P                   exact, in cycles
//! ```
//!
//! Gaussian noise with standard deviation `noise · scale` is then added to
//! each channel (scales 4, 2, 2, 2, 8, 8). The label is never perturbed.

use super::BatteryRecord;
use crate::rng::{normal, stream, uniform, Purpose};

pub const STEPS_PER_CYCLE: usize = 16;

const NOISE_SCALE: [f64; 6] = [4.0, 2.0, 2.0, 2.0, 8.0, 8.0];

pub fn synth_degradation(n_batteries: usize, steps: usize, noise: f64, seed: u64) -> Vec<BatteryRecord> {
    let p = STEPS_PER_CYCLE;
    let half = p / 2;
    let n_cycles = steps.div_ceil(p).max(1) as f64;
    let kappa = 1.25f64.ln();
    let mut out = Vec::with_capacity(n_batteries * steps);
    for b in 0..n_batteries {
        let mut rng = stream(seed, Purpose::Synth, b as u64);
        let q0 = uniform(&mut rng, 1.98, 2.02);
        let r0 = uniform(&mut rng, 0.048, 0.052);
        let id = format!("syn{b:03}");
        for t in 0..steps {
            let (c, s) = (t / p, t % p);
            let u = s as f64 / p as f64;
            let life = c as f64 / n_cycles;
            let q = q0 * (-kappa * life).exp();
            let r = r0 * (1.0 + 4.0 * (1.0 - q / q0));
            let (current, ocv, qc, qd) = if s < half {
                let frac = (s + 1) as f64 / half as f64;
                (1.5, 3.4 + 0.8 * u / 0.5, q * frac, 0.0)
            } else {
                let frac = (s - half + 1) as f64 / (p - half) as f64;
                let i = -2.0 * (1.0 + 0.1 * (2.0 * std::f64::consts::PI * u).sin());
                (i, 4.2 - 1.0 * (u - 0.5) / 0.5, q, 0.98 * q * frac)
            };
            let mut rec = BatteryRecord {
                battery_id: id.clone(),
                cycle: c as u32 + 1,
                step: s as u32,
                voltage: ocv + r * current,
                current,
                charge_capacity: qc,
                discharge_capacity: qd,
                charge_energy: qc * (3.8 + 1.5 * r),
                discharge_energy: qd * (3.7 - 2.0 * r),
                rul: (steps - 1 - t) as f64 / p as f64,
            };
            if noise > 0.0 {
                let mut f = rec.features();
                for (v, scale) in f.iter_mut().zip(NOISE_SCALE) {
                    *v += noise * scale * normal(&mut rng);
                }
                rec.set_features(f);
            }
            out.push(rec);
        }
    }
    out
}

/// Adds Gaussian noise to the labels: `high_std` for records whose clean RUL
/// is below `threshold`, `low_std` otherwise. Labels stay non-negative.
pub fn inject_label_noise(
    records: &[BatteryRecord],
    threshold: f64,
    low_std: f64,
    high_std: f64,
    seed: u64,
) -> Vec<BatteryRecord> {
    let mut rng = stream(seed, Purpose::Noise, 0);
    records
        .iter()
        .map(|r| {
            let std = if r.rul < threshold { high_std } else { low_std };
            BatteryRecord { rul: (r.rul + std * normal(&mut rng)).max(0.0), ..r.clone() }
        })
        .collect()
}
