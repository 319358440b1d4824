//! Feature enhancement variants.

use super::{Features, FENM_OPTIONS};
use crate::error::{contract, Result};
use crate::nn::{Bound, Linear, LstmCell, ParamStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FeatureEnhancer {
    Identity,
    /// A scalar energy per feature row gates a residual correction:
    /// `h + sigmoid(-E(h)) * tanh(h W + b)`.
    EnergyGate {
        energy_hidden: Linear,
        energy_out: Linear,
        correction: Linear,
    },
    /// Scaled dot-product attention across pedestrians; the social context
    /// is added back to each pedestrian's feature.
    AttentionPool {
        query: Linear,
        key: Linear,
        value: Linear,
    },
    /// Residual LSTM along the frame axis. Pooled features pass through.
    TemporalLstm {
        cell: LstmCell,
    },
}

impl FeatureEnhancer {
    pub fn new<R: Rng + ?Sized>(
        variant: usize,
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h = hidden;
        Ok(match variant {
            0 => FeatureEnhancer::Identity,
            1 => FeatureEnhancer::EnergyGate {
                energy_hidden: Linear::new(store, &format!("{name}.energy1"), h, h, true, rng),
                energy_out: Linear::new(store, &format!("{name}.energy2"), h, 1, false, rng),
                correction: Linear::new(store, &format!("{name}.correction"), h, h, true, rng),
            },
            2 => FeatureEnhancer::AttentionPool {
                query: Linear::new(store, &format!("{name}.query"), h, h, false, rng),
                key: Linear::new(store, &format!("{name}.key"), h, h, false, rng),
                value: Linear::new(store, &format!("{name}.value"), h, h, false, rng),
            },
            3 => FeatureEnhancer::TemporalLstm {
                cell: LstmCell::new(store, &format!("{name}.lstm"), h, h, rng),
            },
            v => {
                return Err(contract(format!(
                    "FEnM variant {v} out of range ({FENM_OPTIONS} options)"
                )))
            }
        })
    }

    /// True when this enhancer cannot act on the given feature layout and
    /// will pass it through unchanged.
    pub fn degrades_on(&self, features_keep_time: bool) -> bool {
        matches!(self, FeatureEnhancer::TemporalLstm { .. }) && !features_keep_time
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, features: &Features<'t>) -> Features<'t> {
        match self {
            FeatureEnhancer::Identity => features.clone(),
            FeatureEnhancer::EnergyGate {
                energy_hidden,
                energy_out,
                correction,
            } => features.map(|h| {
                let energy = energy_out.forward(p, energy_hidden.forward(p, h).tanh());
                let gate = (-energy).sigmoid();
                h + gate * correction.forward(p, h).tanh()
            }),
            FeatureEnhancer::AttentionPool { query, key, value } => {
                let scale = 1.0 / (features.width() as f64).sqrt();
                features.map(|h| {
                    let q = query.forward(p, h);
                    let k = key.forward(p, h);
                    let v = value.forward(p, h);
                    let att = q.matmul(k.t()).scale(scale).softmax_rows();
                    h + att.matmul(v)
                })
            }
            FeatureEnhancer::TemporalLstm { cell } => match features {
                Features::Pooled(_) => features.clone(),
                Features::PerFrame(frames) => {
                    let tape = frames[0].tape();
                    let mut state = cell.zero_state(tape, frames[0].rows());
                    Features::PerFrame(
                        frames
                            .iter()
                            .map(|&h| {
                                state = cell.step(p, h, state);
                                h + state.0
                            })
                            .collect(),
                    )
                }
            },
        }
    }
}
