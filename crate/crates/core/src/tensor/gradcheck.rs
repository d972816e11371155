use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Compares the tape gradient of a scalar function against central
/// differences `(f(x+h) - f(x-h)) / 2h`.
///
/// Returns the largest `|numeric - analytic| / max(1, |analytic|)` over all
/// coordinates of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let analytic = {
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = f(&tape, xv)?;
        tape.backward(y)?.get_or_zeros(xv)
    };
    let eval = |p: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let xv = tape.leaf(p.clone());
        Ok(f(&tape, xv)?.item())
    };
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[k] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let g = analytic.data()[k];
        worst = worst.max((numeric - g).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}
