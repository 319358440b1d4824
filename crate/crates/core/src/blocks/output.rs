//! Feature fusion and history decoders.

use super::{Features, FFM_OPTIONS, OM_OPTIONS};
use crate::autodiff::Var;
use crate::error::{contract, Result};
use crate::nn::{xavier, Bound, Linear, LstmCell, ParamId, ParamStore};
use crate::tensor::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fused width for a fusion variant.
pub fn fused_width(variant: usize, hidden: usize) -> usize {
    if variant == 0 {
        4 * hidden
    } else {
        2 * hidden
    }
}

/// Mean-pool every input over frames, then concatenate
/// `(h1, h2, h1', h2')` (variant 0) or `(h1', h2')` (variant 1).
pub fn ffm_apply<'t>(
    variant: usize,
    first: &Features<'t>,
    second: &Features<'t>,
    first_enhanced: &Features<'t>,
    second_enhanced: &Features<'t>,
) -> Result<Var<'t>> {
    let tape = first.pool().tape();
    match variant {
        0 => Ok(tape.concat_cols(&[
            first.pool(),
            second.pool(),
            first_enhanced.pool(),
            second_enhanced.pool(),
        ])),
        1 => Ok(tape.concat_cols(&[first_enhanced.pool(), second_enhanced.pool()])),
        v => Err(contract(format!(
            "FFM variant {v} out of range ({FFM_OPTIONS} options)"
        ))),
    }
}

/// Decoder from fused features to a predicted history `N×(t_obs·2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum OutputModule {
    /// Expand to per-frame seeds, then a width-3 temporal convolution and a
    /// linear readout.
    Tcn {
        expand: Linear,
        conv: [ParamId; 3],
        conv_b: ParamId,
        readout: Linear,
        channels: usize,
    },
    /// One shared embedding scaled and shifted per output frame
    /// (a 1→t_obs channel convolution), then a linear readout.
    TimeExtrapolator {
        embed: Linear,
        scale: ParamId,
        shift: ParamId,
        readout: Linear,
    },
    /// Two fully connected layers.
    Fc { layer1: Linear, layer2: Linear },
    /// LSTM unrolled `t_obs` steps on the fused feature, linear readout.
    LstmDecoder { cell: LstmCell, readout: Linear },
}

impl OutputModule {
    pub fn new<R: Rng + ?Sized>(
        variant: usize,
        store: &mut ParamStore,
        name: &str,
        fused: usize,
        hidden: usize,
        t_obs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let c = (hidden / 2).max(2);
        Ok(match variant {
            0 => OutputModule::Tcn {
                expand: Linear::new(store, &format!("{name}.expand"), fused, t_obs * c, true, rng),
                conv: [0, 1, 2].map(|k| store.add(format!("{name}.conv{k}"), xavier(c, c, rng))),
                conv_b: store.add(format!("{name}.conv_b"), Matrix::zeros(1, c)),
                readout: Linear::new(store, &format!("{name}.readout"), c, 2, true, rng),
                channels: c,
            },
            1 => OutputModule::TimeExtrapolator {
                embed: Linear::new(store, &format!("{name}.embed"), fused, c, true, rng),
                scale: store.add(format!("{name}.scale"), Matrix::uniform(t_obs, c, 1.0, rng)),
                shift: store.add(format!("{name}.shift"), Matrix::zeros(t_obs, c)),
                readout: Linear::new(store, &format!("{name}.readout"), c, 2, true, rng),
            },
            2 => OutputModule::Fc {
                layer1: Linear::new(store, &format!("{name}.fc1"), fused, hidden, true, rng),
                layer2: Linear::new(store, &format!("{name}.fc2"), hidden, 2 * t_obs, true, rng),
            },
            3 => OutputModule::LstmDecoder {
                cell: LstmCell::new(store, &format!("{name}.lstm"), fused, hidden, rng),
                readout: Linear::new(store, &format!("{name}.readout"), hidden, 2, true, rng),
            },
            v => return Err(contract(format!("OM variant {v} out of range ({OM_OPTIONS} options)"))),
        })
    }

    /// Decoded frames, each `N×2`, in time order.
    pub fn frames<'t>(&self, p: &Bound<'t>, fused: Var<'t>, t_obs: usize) -> Vec<Var<'t>> {
        let tape = fused.tape();
        match self {
            OutputModule::Tcn {
                expand,
                conv,
                conv_b,
                readout,
                channels,
            } => {
                let seeds = expand.forward(p, fused).relu();
                let z: Vec<Var<'t>> = (0..t_obs).map(|t| seeds.slice_cols(t * channels, *channels)).collect();
                (0..t_obs)
                    .map(|t| {
                        let mut acc = z[t].matmul(p[conv[1]]) + p[*conv_b];
                        if t > 0 {
                            acc = acc + z[t - 1].matmul(p[conv[0]]);
                        }
                        if t + 1 < t_obs {
                            acc = acc + z[t + 1].matmul(p[conv[2]]);
                        }
                        readout.forward(p, acc.relu())
                    })
                    .collect()
            }
            OutputModule::TimeExtrapolator {
                embed,
                scale,
                shift,
                readout,
            } => {
                let e = embed.forward(p, fused);
                (0..t_obs)
                    .map(|t| {
                        let a = p[*scale].slice_rows(t, 1);
                        let b = p[*shift].slice_rows(t, 1);
                        readout.forward(p, (e * a + b).leaky_relu(0.25))
                    })
                    .collect()
            }
            OutputModule::Fc { layer1, layer2 } => {
                let out = layer2.forward(p, layer1.forward(p, fused).relu());
                (0..t_obs).map(|t| out.slice_cols(2 * t, 2)).collect()
            }
            OutputModule::LstmDecoder { cell, readout } => {
                let mut state = cell.zero_state(tape, fused.rows());
                (0..t_obs)
                    .map(|_| {
                        state = cell.step(p, fused, state);
                        readout.forward(p, state.0)
                    })
                    .collect()
            }
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, fused: Var<'t>, t_obs: usize) -> Var<'t> {
        let frames = self.frames(p, fused, t_obs);
        fused.tape().concat_cols(&frames)
    }
}
