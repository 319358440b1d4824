//! Feature extraction variants.

use super::{off_diagonal, BlockInput, Features, FEXM_OPTIONS};
use crate::autodiff::Var;
use crate::error::{contract, Result};
use crate::nn::{xavier, Bound, Linear, LstmCell, ParamId, ParamStore};
use crate::tensor::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FeatureExtractor {
    /// Graph convolution over a learned, relu-sparsified pedestrian adjacency.
    SparseGcn {
        key: Linear,
        layer1: Linear,
        layer2: Linear,
        key_dim: usize,
    },
    /// Per-pedestrian MLP over the flattened trajectory; pooled output.
    Mlp { layer1: Linear, layer2: Linear },
    /// Distance-kernel spatial convolution followed by a width-3 temporal
    /// convolution.
    StGcn {
        spatial: Linear,
        temporal: [ParamId; 3],
        bias: ParamId,
    },
    /// LSTM over frames; the final hidden state is the pooled feature.
    LstmEncoder { cell: LstmCell },
    /// Single-head graph attention per frame.
    Gat {
        proj: Linear,
        att_src: ParamId,
        att_dst: ParamId,
        bias: ParamId,
    },
}

impl FeatureExtractor {
    pub fn new<R: Rng + ?Sized>(
        variant: usize,
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        frames: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h = hidden;
        Ok(match variant {
            0 => {
                let key_dim = h.clamp(1, 16);
                FeatureExtractor::SparseGcn {
                    key: Linear::new(store, &format!("{name}.key"), channels, key_dim, false, rng),
                    layer1: Linear::new(store, &format!("{name}.gcn1"), channels, h, true, rng),
                    layer2: Linear::new(store, &format!("{name}.gcn2"), h, h, true, rng),
                    key_dim,
                }
            }
            1 => FeatureExtractor::Mlp {
                layer1: Linear::new(store, &format!("{name}.fc1"), channels * frames, h, true, rng),
                layer2: Linear::new(store, &format!("{name}.fc2"), h, h, true, rng),
            },
            2 => FeatureExtractor::StGcn {
                spatial: Linear::new(store, &format!("{name}.spatial"), channels, h, false, rng),
                temporal: [0, 1, 2].map(|k| store.add(format!("{name}.temporal{k}"), xavier(h, h, rng))),
                bias: store.add(format!("{name}.temporal_b"), Matrix::zeros(1, h)),
            },
            3 => FeatureExtractor::LstmEncoder {
                cell: LstmCell::new(store, &format!("{name}.lstm"), channels, h, rng),
            },
            4 => FeatureExtractor::Gat {
                proj: Linear::new(store, &format!("{name}.proj"), channels, h, false, rng),
                att_src: store.add(format!("{name}.att_src"), xavier(h, 1, rng)),
                att_dst: store.add(format!("{name}.att_dst"), xavier(h, 1, rng)),
                bias: store.add(format!("{name}.bias"), Matrix::zeros(1, h)),
            },
            v => {
                return Err(contract(format!(
                    "FExM variant {v} out of range ({FEXM_OPTIONS} options)"
                )))
            }
        })
    }

    pub fn keeps_time(&self) -> bool {
        !matches!(
            self,
            FeatureExtractor::Mlp { .. } | FeatureExtractor::LstmEncoder { .. }
        )
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, input: &BlockInput<'t>) -> Result<Features<'t>> {
        let n = input.n();
        if n == 0 {
            return Err(contract("feature extraction needs at least one pedestrian"));
        }
        let tape = input.flat.tape();
        Ok(match self {
            FeatureExtractor::SparseGcn {
                key,
                layer1,
                layer2,
                key_dim,
            } => {
                let mask = tape.leaf(off_diagonal(n));
                let scale = 1.0 / (*key_dim as f64).sqrt();
                Features::PerFrame(
                    input
                        .frames
                        .iter()
                        .map(|&x| {
                            let e = key.forward(p, x);
                            let adj = e.matmul(e.t()).scale(scale).tanh().relu() * mask;
                            let degree = adj.sum_rows().add_scalar(1.0);
                            let propagate = |m: Var<'t>| (m + adj.matmul(m)) / degree;
                            let h1 = (propagate(x.matmul(p[layer1.w])) + p[layer1.b.unwrap()]).relu();
                            (propagate(h1.matmul(p[layer2.w])) + p[layer2.b.unwrap()]).relu()
                        })
                        .collect(),
                )
            }
            FeatureExtractor::Mlp { layer1, layer2 } => {
                Features::Pooled(layer2.forward(p, layer1.forward(p, input.flat).relu()))
            }
            FeatureExtractor::StGcn {
                spatial,
                temporal,
                bias,
            } => {
                let g: Vec<Var<'t>> = input
                    .frames
                    .iter()
                    .zip(&input.positions)
                    .map(|(&x, pos)| tape.leaf(distance_adjacency(pos)).matmul(spatial.forward(p, x)))
                    .collect();
                let t_len = g.len();
                Features::PerFrame(
                    (0..t_len)
                        .map(|t| {
                            let mut acc = g[t].matmul(p[temporal[1]]) + p[*bias];
                            if t > 0 {
                                acc = acc + g[t - 1].matmul(p[temporal[0]]);
                            }
                            if t + 1 < t_len {
                                acc = acc + g[t + 1].matmul(p[temporal[2]]);
                            }
                            acc.relu()
                        })
                        .collect(),
                )
            }
            FeatureExtractor::LstmEncoder { cell } => {
                let mut state = cell.zero_state(tape, n);
                for &x in &input.frames {
                    state = cell.step(p, x, state);
                }
                Features::Pooled(state.0)
            }
            FeatureExtractor::Gat {
                proj,
                att_src,
                att_dst,
                bias,
            } => Features::PerFrame(
                input
                    .frames
                    .iter()
                    .map(|&x| {
                        let e = proj.forward(p, x);
                        let logits = (e.matmul(p[*att_src]) + e.matmul(p[*att_dst]).t()).leaky_relu(0.2);
                        (logits.softmax_rows().matmul(e) + p[*bias]).tanh()
                    })
                    .collect(),
            ),
        })
    }
}

/// Symmetric-normalized inverse-distance adjacency with self loops.
pub(crate) fn distance_adjacency(pos: &Matrix) -> Matrix {
    let n = pos.rows();
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            let dx = pos.get(i, 0) - pos.get(j, 0);
            let dy = pos.get(i, 1) - pos.get(j, 1);
            1.0 / (dx * dx + dy * dy).sqrt().max(0.1)
        }
    });
    let d: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>().sqrt()).collect();
    Matrix::from_fn(n, n, |i, j| a.get(i, j) / (d[i] * d[j]))
}
