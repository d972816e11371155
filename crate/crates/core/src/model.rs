//! The assembled network: graph inference, grapher, readout and head.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::config::{Ablation, EvalGraph, TemporalMode, TrainConfig, Variant};
use crate::error::{shape_err, Result};
use crate::grapher::{stacked_gnn, temporal_gru, GcnBlockParams, GruParams, Regularization};
use crate::graph_inference::{
    fully_connected_adjacency, gumbel_noise, gumbel_softmax_adjacency, pairwise_logits, project_features,
    DgiParams, LogitVariant,
};
use crate::init::{add_bias, add_weight};
use crate::readout::{gaussian_head, graph_readout, point_head, GaussianHeadParams, PointHeadParams};
use crate::rng::{stream, Purpose, StreamRng};
use crate::tensor::nn::{linear, BatchNormState};
use crate::tensor::{Bound, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub enum HeadParams {
    Point(PointHeadParams),
    Gaussian(GaussianHeadParams),
}

/// Parameter layout plus the fixed hyperparameters that shape the forward
/// pass.
#[derive(Debug)]
pub struct Architecture {
    pub config: TrainConfig,
    pub n: usize,
    pub dgi: DgiParams,
    pub gnn: [GcnBlockParams; 2],
    pub gru: [GruParams; 2],
    pub no_rnn: Option<(ParamId, ParamId)>,
    pub head: HeadParams,
    dgi_calls: AtomicUsize,
}

pub struct BgnModel {
    pub arch: Architecture,
    pub store: ParamStore,
    pub bn: [BatchNormState; 2],
}

/// Randomness and mode of one forward pass.
pub struct Pass<'a> {
    /// Batch statistics and dropout when set; running statistics otherwise.
    pub training: bool,
    /// Gumbel noise source; `None` gives the noise-free relaxation.
    pub gumbel: Option<&'a mut StreamRng>,
    pub dropout: &'a mut StreamRng,
}

impl<'a> Pass<'a> {
    /// Deterministic evaluation pass.
    pub fn eval(dropout: &'a mut StreamRng) -> Self {
        Self { training: false, gumbel: None, dropout }
    }
}

pub struct ForwardOut<'t> {
    /// `[B]`, normalized RUL (the mean for the Gaussian head).
    pub pred: Var<'t>,
    /// `[B]` predictive variance of the Gaussian head.
    pub var: Option<Var<'t>>,
    /// `[B·S × n × n]`, absent when the GNN is ablated.
    pub adjacency: Option<Var<'t>>,
    /// `[B × d]`
    pub h_g: Var<'t>,
}

impl BgnModel {
    /// Fresh parameters for `n` nodes, drawn from the `Init` stream of
    /// `config.seed`.
    pub fn new(config: &TrainConfig, n: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Purpose::Init, 0);
        let mut store = ParamStore::new();
        let (d, hidden) = (config.d, config.hidden);
        let dgi = DgiParams::init(&mut store, &mut rng, "dgi", n, d, config.window, hidden);
        let gnn = [
            GcnBlockParams::init(&mut store, &mut rng, "gnn1", d),
            GcnBlockParams::init(&mut store, &mut rng, "gnn2", d),
        ];
        let gru = [
            GruParams::init(&mut store, &mut rng, "gru1", 2 * d, d),
            GruParams::init(&mut store, &mut rng, "gru2", d, d),
        ];
        let no_rnn = (config.ablation == Ablation::NoRnn).then(|| {
            (
                add_weight(&mut store, &mut rng, "pool.w", 2 * d, d),
                add_bias(&mut store, "pool.b", d),
            )
        });
        let head = match config.variant {
            Variant::Bgn => HeadParams::Point(PointHeadParams::init(&mut store, &mut rng, "head", d)),
            Variant::BgnUe => HeadParams::Gaussian(GaussianHeadParams::init(&mut store, &mut rng, "head", d, hidden)),
        };
        Ok(Self {
            arch: Architecture {
                config: config.clone(),
                n,
                dgi,
                gnn,
                gru,
                no_rnn,
                head,
                dgi_calls: AtomicUsize::new(0),
            },
            store,
            bn: [BatchNormState::new(d), BatchNormState::new(d)],
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.arch.config
    }
}

impl Architecture {
    /// Number of times edge scores have been computed.
    pub fn dgi_calls(&self) -> usize {
        self.dgi_calls.load(Ordering::Relaxed)
    }

    fn logit_variant(&self) -> LogitVariant {
        match self.config.ablation {
            Ablation::NoEmbeddings => LogitVariant::NoEmbeddings,
            Ablation::NoFeatures => LogitVariant::NoFeatures,
            _ => LogitVariant::Full,
        }
    }

    /// Windows the model actually reads from each sample.
    pub fn effective_seq_len(&self) -> usize {
        match self.config.temporal_mode {
            TemporalMode::WindowSequence => self.config.seq_len,
            TemporalMode::SingleStep => 1,
        }
    }

    /// Keeps only the rows of the windows the model reads.
    fn select_windows(&self, x: &Tensor, batch: usize) -> Result<Tensor> {
        let (s, n) = (self.config.seq_len, self.n);
        if self.config.temporal_mode == TemporalMode::WindowSequence {
            return Ok(x.clone());
        }
        let w = x.cols();
        let mut data = Vec::with_capacity(batch * n * w);
        for b in 0..batch {
            let start = ((b * s + s - 1) * n) * w;
            data.extend_from_slice(&x.data()[start..start + n * w]);
        }
        Tensor::new(vec![batch * n, w], data)
    }

    /// Inferred (or fixed) adjacency for `graphs` windows whose projected
    /// node features are `xproj[graphs·n × d]`.
    pub fn adjacency<'t>(
        &self,
        p: &Bound<'t>,
        xproj: Var<'t>,
        graphs: usize,
        gumbel: Option<&mut StreamRng>,
    ) -> Result<Var<'t>> {
        let n = self.n;
        if self.config.ablation == Ablation::Fcg {
            let fc = fully_connected_adjacency(n);
            let tiled = Tensor::from_fn(&[graphs, n, n], |k| fc.data()[k % (n * n)]);
            return Ok(xproj.tape().constant(tiled));
        }
        self.dgi_calls.fetch_add(1, Ordering::Relaxed);
        let dgi = self.dgi.bind(p);
        let logits = pairwise_logits(dgi.embeddings, Some(xproj), graphs, self.logit_variant(), &dgi.mlp)?;
        let noise = gumbel.map(|rng| gumbel_noise(rng, graphs, n));
        let gamma = match (&noise, self.config.eval_graph) {
            (None, EvalGraph::Expected) => 1.0,
            _ => self.config.gamma,
        };
        gumbel_softmax_adjacency(&logits, gamma, noise.as_ref())
    }

    /// Runs the network on `x[B·S·n × W]` (rows ordered batch, window,
    /// node).
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        bn: &mut [BatchNormState; 2],
        x: &Tensor,
        batch: usize,
        pass: Pass<'_>,
    ) -> Result<ForwardOut<'t>> {
        let (n, d) = (self.n, self.config.d);
        let expected = batch * self.config.seq_len * n;
        if x.rank() != 2 || x.rows() != expected || x.cols() != self.config.window {
            return shape_err(
                "forward",
                format!("x {:?}, expected [{expected}, {}]", x.shape(), self.config.window),
            );
        }
        let s = self.effective_seq_len();
        let graphs = batch * s;
        let tape = p[self.dgi.w_s].tape();
        let x = tape.constant(self.select_windows(x, batch)?);
        let xproj = project_features(x, p[self.dgi.w_s])?;
        let h0 = xproj.reshape(&[graphs, n, d])?;

        let (nodes, adjacency) = if self.config.ablation == Ablation::NoGnn {
            (h0.concat_lastdim(h0)?, None)
        } else {
            let adj = self.adjacency(p, xproj, graphs, pass.gumbel)?;
            let blocks = [self.gnn[0].bind(p), self.gnn[1].bind(p)];
            let mut reg = Regularization {
                training: pass.training,
                dropout: self.config.dropout,
                rng: pass.dropout,
            };
            (stacked_gnn(h0, adj, [&blocks[0], &blocks[1]], bn, &mut reg)?, Some(adj))
        };

        let h = match self.no_rnn {
            Some((w, b)) => {
                let pooled = nodes.reshape(&[batch, s, n * 2 * d])?.mean_axis1()?.reshape(&[batch * n, 2 * d])?;
                linear(pooled, p[w], Some(p[b]))?.reshape(&[batch, n, d])?
            }
            None => {
                let seq = nodes.reshape(&[batch, s, n, 2 * d])?;
                temporal_gru(seq, &self.gru[0].bind(p), &self.gru[1].bind(p))?
            }
        };

        let h_g = if self.config.ablation == Ablation::NoEmbeddings {
            h.mean_axis1()?
        } else {
            graph_readout(h, p[self.dgi.embeddings])?
        };

        let (pred, var) = match self.head {
            HeadParams::Point(hp) => (point_head(h_g, p[hp.w], p[hp.b])?, None),
            HeadParams::Gaussian(gp) => {
                let (mu, var) = gaussian_head(h_g, gp.bind(p))?;
                (mu, Some(var))
            }
        };
        Ok(ForwardOut { pred, var, adjacency, h_g })
    }

    /// Parameters the forward pass of this configuration reads.
    pub fn used_params(&self) -> Vec<ParamId> {
        let mut ids = vec![self.dgi.w_s];
        let ab = self.config.ablation;
        if ab != Ablation::NoEmbeddings {
            ids.push(self.dgi.embeddings);
        }
        if !matches!(ab, Ablation::Fcg | Ablation::NoGnn) {
            ids.extend([self.dgi.fc1_w, self.dgi.fc1_b, self.dgi.fc2_w, self.dgi.fc2_b]);
        }
        if ab != Ablation::NoGnn {
            for g in &self.gnn {
                ids.extend([g.w_g, g.bn_gamma, g.bn_beta]);
            }
        }
        match self.no_rnn {
            Some((w, b)) => ids.extend([w, b]),
            None => {
                for g in &self.gru {
                    ids.extend([g.w_z, g.u_z, g.b_z, g.w_r, g.u_r, g.b_r, g.w_h, g.u_h, g.b_h]);
                }
            }
        }
        match self.head {
            HeadParams::Point(h) => ids.extend([h.w, h.b]),
            HeadParams::Gaussian(h) => ids.extend([h.w1, h.b1, h.w2, h.b2]),
        }
        ids
    }
}

/// Gathers the given rows of a `[R × W]` matrix.
pub fn gather_rows(x: &Tensor, rows: &[usize]) -> Tensor {
    let w = x.cols();
    let mut data = Vec::with_capacity(rows.len() * w);
    for &r in rows {
        data.extend_from_slice(&x.data()[r * w..(r + 1) * w]);
    }
    Tensor::new(vec![rows.len(), w], data).expect("row gather")
}
