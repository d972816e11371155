//! Dynamic graph inference.
//!
//! Each window gets its own soft adjacency over the battery parameters.
//! Node `i` is summarized by `e_i = b_i + W_s x_i` (trainable identity
//! embedding plus projected window features); every ordered pair is scored
//! by a small MLP on `e_i || e_j` squashed through a sigmoid, giving two
//! channels per edge (`0` = edge `i→j` present, `1` = absent). The adjacency
//! entry is channel 0 of a temperature-scaled Gumbel-softmax over the two
//! channels. Diagonal entries are always zero; self-connections come from
//! the GCN self-loop.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::init::{add_bias, add_embeddings, add_weight};
use crate::rng::{gumbel, StreamRng};
use crate::tensor::nn::linear;
use crate::tensor::{Bound, ParamId, ParamStore, Tensor, Var};

/// Temperature of the Gumbel-softmax relaxation.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Which inputs feed the pairwise edge scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitVariant {
    /// `σ(g_fc((b_i + W_s x_i) || (b_j + W_s x_j)))`
    Full,
    /// `σ(g_fc(W_s x_i || W_s x_j))`
    NoEmbeddings,
    /// `σ(g_fc(b_i || b_j))`: one static graph for every window.
    NoFeatures,
}

/// Parameter handles of the inference block.
#[derive(Debug, Clone, Copy)]
pub struct DgiParams {
    /// Node embeddings `b`, `[n×d]`.
    pub embeddings: ParamId,
    /// Feature projection `W_s`, `[d×W]`.
    pub w_s: ParamId,
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

impl DgiParams {
    /// `g_fc` is `2d → hidden → 2` with a ReLU in between.
    pub fn init(
        store: &mut ParamStore,
        rng: &mut StreamRng,
        prefix: &str,
        n: usize,
        d: usize,
        window: usize,
        hidden: usize,
    ) -> Self {
        let embeddings = add_embeddings(store, rng, &format!("{prefix}.embeddings"), n, d);
        let w_s = store.add(
            format!("{prefix}.w_s"),
            crate::init::uniform_weight(rng, &[d, window], window),
        );
        Self {
            embeddings,
            w_s,
            fc1_w: add_weight(store, rng, &format!("{prefix}.fc1.w"), 2 * d, hidden),
            fc1_b: add_bias(store, &format!("{prefix}.fc1.b"), hidden),
            fc2_w: add_weight(store, rng, &format!("{prefix}.fc2.w"), hidden, 2),
            fc2_b: add_bias(store, &format!("{prefix}.fc2.b"), 2),
        }
    }

    pub fn bind<'t>(&self, p: &Bound<'t>) -> DgiVars<'t> {
        DgiVars {
            embeddings: p[self.embeddings],
            w_s: p[self.w_s],
            mlp: EdgeMlp {
                w1: p[self.fc1_w],
                b1: p[self.fc1_b],
                w2: p[self.fc2_w],
                b2: p[self.fc2_b],
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EdgeMlp<'t> {
    pub w1: Var<'t>,
    pub b1: Var<'t>,
    pub w2: Var<'t>,
    pub b2: Var<'t>,
}

impl<'t> EdgeMlp<'t> {
    pub fn forward(&self, pairs: Var<'t>) -> Result<Var<'t>> {
        let h = linear(pairs, self.w1, Some(self.b1))?.relu()?;
        linear(h, self.w2, Some(self.b2))
    }

    /// Same as `forward` on the rows `nodes[left[k]] || nodes[right[k]]`,
    /// but the first layer is applied per node before pairing.
    pub fn forward_pairs(&self, nodes: Var<'t>, left: Rc<Vec<usize>>, right: Rc<Vec<usize>>) -> Result<Var<'t>> {
        let d = nodes.shape()[1];
        let wt = self.w1.transpose()?;
        let w_left = wt.slice_lastdim(0, d)?.transpose()?;
        let w_right = wt.slice_lastdim(d, d)?.transpose()?;
        let a = nodes.matmul(w_left)?.gather_rows(left)?;
        let b = nodes.matmul(w_right)?.gather_rows(right)?;
        let h = a.add(b)?.add_tile(self.b1)?.relu()?;
        linear(h, self.w2, Some(self.b2))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DgiVars<'t> {
    pub embeddings: Var<'t>,
    pub w_s: Var<'t>,
    pub mlp: EdgeMlp<'t>,
}

/// Pairwise edge probabilities for a batch of `graphs` windows.
#[derive(Clone, Copy, Debug)]
pub struct EdgeLogits<'t> {
    /// `[graphs·n·n × 2]`, row `(g·n + i)·n + j`, values in `(0,1)`.
    pub theta: Var<'t>,
    pub graphs: usize,
    pub n: usize,
}

/// Row `i` of the result is `W_s · x_i` for every row `x_i` of `x[R×W]`.
pub fn project_features<'t>(x: Var<'t>, w_s: Var<'t>) -> Result<Var<'t>> {
    let (xs, ws) = (x.shape(), w_s.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
        return shape_err("project_features", format!("x {xs:?} vs W_s {ws:?}"));
    }
    x.matmul(w_s.transpose()?)
}

/// Scores every ordered node pair of every window.
///
/// `xproj` is `[graphs·n × d]` (rows grouped by window) and must be given
/// unless the variant is [`LogitVariant::NoFeatures`], in which case it is
/// ignored and `graphs` copies of the single static score table are
/// returned.
pub fn pairwise_logits<'t>(
    embeddings: Var<'t>,
    xproj: Option<Var<'t>>,
    graphs: usize,
    variant: LogitVariant,
    mlp: &EdgeMlp<'t>,
) -> Result<EdgeLogits<'t>> {
    let bs = embeddings.shape();
    if bs.len() != 2 {
        return shape_err("pairwise_logits", format!("embeddings {bs:?}"));
    }
    let (n, d) = (bs[0], bs[1]);
    if n < 2 {
        return invalid("graph inference needs at least two nodes");
    }
    let nodes = match (variant, xproj) {
        (LogitVariant::NoFeatures, _) => embeddings,
        (_, None) => return invalid(format!("{variant:?} logits need projected features")),
        (_, Some(xp)) => {
            let xs = xp.shape();
            if xs != [graphs * n, d] {
                return shape_err("pairwise_logits", format!("xproj {xs:?}, expected [{}, {d}]", graphs * n));
            }
            if variant == LogitVariant::Full {
                xp.reshape(&[graphs, n, d])?.add_tile(embeddings)?.reshape(&[graphs * n, d])?
            } else {
                xp
            }
        }
    };
    let node_graphs = if variant == LogitVariant::NoFeatures { 1 } else { graphs };
    let mut left = Vec::with_capacity(node_graphs * n * n);
    let mut right = Vec::with_capacity(node_graphs * n * n);
    for g in 0..node_graphs {
        for i in 0..n {
            for j in 0..n {
                left.push(g * n + i);
                right.push(g * n + j);
            }
        }
    }
    let mut theta = mlp.forward_pairs(nodes, Rc::new(left), Rc::new(right))?.sigmoid()?;
    if variant == LogitVariant::NoFeatures && graphs != 1 {
        let tile: Vec<usize> = (0..graphs * n * n).map(|k| k % (n * n)).collect();
        theta = theta.gather_rows(Rc::new(tile))?;
    }
    Ok(EdgeLogits { theta, graphs, n })
}

/// Gumbel(0,1) noise shaped like the edge scores.
pub fn gumbel_noise(rng: &mut StreamRng, graphs: usize, n: usize) -> Tensor {
    Tensor::from_fn(&[graphs * n * n, 2], |_| gumbel(rng))
}

/// Both relaxed channels `softmax((θ + g)/γ)`, `[graphs·n·n × 2]`.
/// `noise = None` gives the noise-free evaluation form `softmax(θ/γ)`.
pub fn gumbel_softmax_channels<'t>(
    logits: &EdgeLogits<'t>,
    gamma: f64,
    noise: Option<&Tensor>,
) -> Result<Var<'t>> {
    if !(gamma > 0.0) {
        return invalid(format!("temperature must be positive, got {gamma}"));
    }
    let shifted = match noise {
        Some(g) => logits.theta.add_const(g)?,
        None => logits.theta,
    };
    shifted.scale(1.0 / gamma)?.softmax_lastdim()
}

/// Soft adjacency `[graphs × n × n]`: channel 0 of the relaxed sample, with
/// the diagonal zeroed.
pub fn gumbel_softmax_adjacency<'t>(
    logits: &EdgeLogits<'t>,
    gamma: f64,
    noise: Option<&Tensor>,
) -> Result<Var<'t>> {
    let (g, n) = (logits.graphs, logits.n);
    let y = gumbel_softmax_channels(logits, gamma, noise)?;
    let mask = Tensor::from_fn(&[g, n, n], |k| if (k / n) % n == k % n { 0.0 } else { 1.0 });
    y.slice_lastdim(0, 1)?.reshape(&[g, n, n])?.mul_const(&mask)
}

/// All-ones off the diagonal, zero on it.
pub fn fully_connected_adjacency(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |k| if k / n == k % n { 0.0 } else { 1.0 })
}

/// `1` where `A_ij > threshold`, else `0`. Used for inspection only.
pub fn harden(adjacency: &Tensor, threshold: f64) -> Tensor {
    adjacency.map(|v| if v > threshold { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use crate::tensor::{grad_check, Tape};
    use approx::assert_abs_diff_eq;

    fn single_edge<'t>(tape: &'t Tape, t0: f64, t1: f64) -> EdgeLogits<'t> {
        // a 2-node graph whose two off-diagonal edges share the given scores
        let theta = Tensor::new(vec![4, 2], vec![0.5, 0.5, t0, t1, t0, t1, 0.5, 0.5]).unwrap();
        EdgeLogits { theta: tape.leaf(theta), graphs: 1, n: 2 }
    }

    fn mlp(tape: &Tape, d: usize, h: usize) -> EdgeMlp<'_> {
        EdgeMlp {
            w1: tape.leaf(Tensor::from_fn(&[2 * d, h], |k| ((k * 13 % 7) as f64 - 3.0) * 0.2)),
            b1: tape.leaf(Tensor::from_fn(&[h], |k| 0.1 * k as f64)),
            w2: tape.leaf(Tensor::from_fn(&[h, 2], |k| ((k * 5 % 3) as f64 - 1.0) * 0.4)),
            b2: tape.leaf(Tensor::zeros(&[2])),
        }
    }

    #[test]
    fn projection_cases() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[3, 2], |k| k as f64));
        let y = project_features(x, tape.constant(Tensor::eye(2))).unwrap();
        assert_eq!(y.value().data(), x.value().data());
        let z = project_features(tape.constant(Tensor::zeros(&[3, 4])), tape.constant(Tensor::ones(&[2, 4]))).unwrap();
        assert!(z.value().data().iter().all(|&v| v == 0.0));
        assert!(project_features(x, tape.constant(Tensor::ones(&[2, 3]))).is_err());
        let ws = Tensor::from_fn(&[3, 4], |k| (k as f64 * 0.3).sin());
        let err = grad_check(
            |t, w| {
                let x = t.constant(Tensor::from_fn(&[5, 4], |k| (k as f64 * 0.7).cos()));
                project_features(x, w)?.square()?.sum()
            },
            &ws,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4);
    }

    #[test]
    fn identical_nodes_give_symmetric_scores() {
        let tape = Tape::new();
        let b = tape.constant(Tensor::from_fn(&[3, 2], |k| if k / 2 == 2 { 0.9 } else { 0.3 * (k % 2) as f64 }));
        let logits = pairwise_logits(b, None, 1, LogitVariant::NoFeatures, &mlp(&tape, 2, 4)).unwrap();
        let th = logits.theta.value();
        // nodes 0 and 1 have identical embeddings
        for k in 0..2 {
            assert_eq!(th.get(&[1, k]), th.get(&[3, k]));
        }
        assert!(th.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn no_features_ignores_x() {
        let tape = Tape::new();
        let m = mlp(&tape, 2, 3);
        let b = tape.constant(Tensor::from_fn(&[3, 2], |k| k as f64 * 0.1));
        let x1 = tape.constant(Tensor::zeros(&[6, 2]));
        let x2 = tape.constant(Tensor::ones(&[6, 2]));
        let a = pairwise_logits(b, Some(x1), 2, LogitVariant::NoFeatures, &m).unwrap();
        let c = pairwise_logits(b, Some(x2), 2, LogitVariant::NoFeatures, &m).unwrap();
        assert_eq!(a.theta.value().data(), c.theta.value().data());
        assert_eq!(a.theta.shape(), vec![18, 2]);
        assert!(pairwise_logits(b, None, 2, LogitVariant::Full, &m).is_err());
    }

    #[test]
    fn gumbel_hand_cases() {
        let tape = Tape::new();
        let zero = Tensor::zeros(&[4, 2]);
        let sym = single_edge(&tape, 0.4, 0.4);
        for gamma in [0.05, 1.0, 3.0] {
            let a = gumbel_softmax_adjacency(&sym, gamma, Some(&zero)).unwrap().value();
            assert_eq!(a.get(&[0, 0, 1]), 0.5);
            assert_eq!(a.get(&[0, 0, 0]), 0.0);
        }
        let e = single_edge(&tape, 0.7, 0.3);
        let a = gumbel_softmax_adjacency(&e, 0.5, Some(&zero)).unwrap().value();
        assert_abs_diff_eq!(a.get(&[0, 0, 1]), 0.6899744811276125, epsilon = 1e-12);
        assert!(gumbel_softmax_adjacency(&e, 0.0, None).is_err());
    }

    #[test]
    fn channels_sum_to_one() {
        let tape = Tape::new();
        let e = single_edge(&tape, 0.7, 0.3);
        let mut rng = stream(5, Purpose::Gumbel, 0);
        let noise = gumbel_noise(&mut rng, 1, 2);
        let y = gumbel_softmax_channels(&e, 0.05, Some(&noise)).unwrap().value();
        for row in y.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn annealing_approaches_hard_sample() {
        let tape = Tape::new();
        let e = single_edge(&tape, 0.7, 0.3);
        let noise = Tensor::new(vec![4, 2], vec![0.0, 0.0, 0.05, 0.3, 0.0, 0.0, 0.0, 0.0]).unwrap();
        // 0.75 vs 0.6: hard sample selects the edge
        let mut prev = f64::INFINITY;
        for gamma in [1.0, 0.1, 0.01] {
            let a = gumbel_softmax_adjacency(&e, gamma, Some(&noise)).unwrap().value();
            let gap = (a.get(&[0, 0, 1]) - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn gradient_through_relaxation() {
        let theta = Tensor::new(vec![4, 2], vec![0.2, 0.6, 0.7, 0.3, 0.45, 0.5, 0.9, 0.1]).unwrap();
        let noise = Tensor::new(vec![4, 2], vec![0.1, -0.2, 0.3, 0.05, -0.1, 0.0, 0.2, 0.4]).unwrap();
        let err = grad_check(
            |t, th| {
                let l = EdgeLogits { theta: th, graphs: 1, n: 2 };
                let w = t.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap());
                gumbel_softmax_adjacency(&l, 0.5, Some(&noise))?.mul(w)?.sum()
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn fully_connected_and_harden() {
        let a = fully_connected_adjacency(2);
        assert_eq!(a.data(), &[0.0, 1.0, 1.0, 0.0]);
        let a3 = fully_connected_adjacency(3);
        for row in a3.data().chunks(3) {
            assert_eq!(row.iter().sum::<f64>(), 2.0);
        }
        let half = Tensor::full(&[2, 2], 0.5);
        assert_eq!(harden(&half, 0.5).sum(), 0.0);
        let hi = Tensor::full(&[1, 1], 0.9);
        assert_eq!(harden(&hi, 0.5).item(), 1.0);
        let mixed = Tensor::from_vec(vec![0.1, 0.7, 0.5, 0.51]);
        assert_eq!(harden(&harden(&mixed, 0.5), 0.5), harden(&mixed, 0.5));
    }

    #[test]
    fn per_node_first_layer_matches_pairwise() {
        let tape = Tape::new();
        let m = mlp(&tape, 3, 4);
        let nodes = tape.constant(Tensor::from_fn(&[4, 3], |k| (k as f64 * 0.77).sin()));
        let (l, r) = (vec![0, 1, 3, 2, 2], vec![1, 0, 2, 3, 2]);
        let pairs = nodes
            .gather_rows(Rc::new(l.clone()))
            .unwrap()
            .concat_lastdim(nodes.gather_rows(Rc::new(r.clone())).unwrap())
            .unwrap();
        let a = m.forward(pairs).unwrap().value();
        let b = m.forward_pairs(nodes, Rc::new(l), Rc::new(r)).unwrap().value();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
