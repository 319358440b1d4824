//! The 23-slot operator sequence and its decoded form.

use crate::blocks::{FENM_OPTIONS, FEXM_OPTIONS, FFM_OPTIONS, IPM_OPTIONS, OM_OPTIONS};
use crate::error::{Result, TpadError};
use crate::losses::{Component, WeightVectors, COMPONENTS, LAMBDA_CHOICES, LAMBDA_OUT_CHOICES};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const SEQUENCE_LEN: usize = 23;
pub const ARCH_SLOTS: usize = 7;

/// Option count of every slot, in sequence order.
pub const SLOT_OPTIONS: [usize; SEQUENCE_LEN] = [
    IPM_OPTIONS,
    FEXM_OPTIONS,
    FEXM_OPTIONS,
    FENM_OPTIONS,
    FENM_OPTIONS,
    FFM_OPTIONS,
    OM_OPTIONS,
    3,
    4,
    4,
    4,
    4,
    4,
    4,
    4,
    2,
    2,
    2,
    2,
    2,
    2,
    2,
    2,
];

pub const SLOT_NAMES: [&str; SEQUENCE_LEN] = [
    "ipm",
    "fexm_1st",
    "fexm_2nd",
    "fenm_1st",
    "fenm_2nd",
    "ffm",
    "om",
    "lambda_out",
    "lambda_adv",
    "lambda_fea",
    "lambda_com",
    "lambda_sep",
    "lambda_clu",
    "lambda_rsr1",
    "lambda_rsr2",
    "gamma_out",
    "gamma_adv",
    "gamma_fea",
    "gamma_com",
    "gamma_sep",
    "gamma_clu",
    "gamma_rsr1",
    "gamma_rsr2",
];

pub const IPM_NAMES: [&str; IPM_OPTIONS] = ["Real Position", "Relative Position", "Real + Relative Position"];
pub const FEXM_NAMES: [&str; FEXM_OPTIONS] = [
    "Sparse Graph Convolution Network",
    "Multilayer Perceptron Network",
    "Spatio-Temporal Graph CNN",
    "LSTM based Motion Encoder Module",
    "GAT-based Crowd Interaction Modeling",
];
pub const FENM_NAMES: [&str; FENM_OPTIONS] = [
    "None",
    "Latent Belief Energy-based Module",
    "Attention Pooling Module",
    "LSTM-based Temporal Correlation Modeling",
];
pub const FFM_NAMES: [&str; FFM_OPTIONS] = ["Concentrate All Features", "Concentrate All Enhanced Features"];
pub const OM_NAMES: [&str; OM_OPTIONS] = [
    "Time Convolution Network",
    "Time-Extrapolator Convolution Neural Network",
    "Multiple Fully-Connected Layer",
    "LSTM + Fully-Connected Layer",
];

/// Index of the Γ slot paired with component `c`.
pub fn gamma_slot(c: Component) -> usize {
    ARCH_SLOTS + COMPONENTS + c.index()
}

pub fn lambda_slot(c: Component) -> usize {
    ARCH_SLOTS + c.index()
}

fn lambda_choices(c: Component) -> &'static [f64] {
    if c == Component::Out {
        &LAMBDA_OUT_CHOICES
    } else {
        &LAMBDA_CHOICES
    }
}

/// Raw controller output: one option index per slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorSequence(pub [usize; SEQUENCE_LEN]);

impl OperatorSequence {
    pub fn from_slice(values: &[usize]) -> Result<Self> {
        let arr: [usize; SEQUENCE_LEN] = values.try_into().map_err(|_| {
            TpadError::Config(format!(
                "operator sequence needs {SEQUENCE_LEN} entries, got {}",
                values.len()
            ))
        })?;
        let seq = Self(arr);
        seq.check()?;
        Ok(seq)
    }

    pub fn check(&self) -> Result<()> {
        for (slot, (&value, &options)) in self.0.iter().zip(&SLOT_OPTIONS).enumerate() {
            if value >= options {
                return Err(TpadError::Decode { slot, value, options });
            }
        }
        Ok(())
    }

    pub fn first_options() -> Self {
        Self([0; SEQUENCE_LEN])
    }
}

impl fmt::Display for OperatorSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub ipm: usize,
    pub fexm: [usize; 2],
    pub fenm: [usize; 2],
    pub ffm: usize,
    pub om: usize,
}

/// Which auxiliary structures a model carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Auxiliaries {
    pub memory: bool,
    pub clustering: bool,
    pub rsr: bool,
    pub discriminator: bool,
}

impl Auxiliaries {
    pub fn from_lambda(lambda: &[f64; COMPONENTS]) -> Self {
        let on = |c: Component| lambda[c.index()] != 0.0;
        Self {
            memory: on(Component::Com) || on(Component::Sep),
            clustering: on(Component::Clu),
            rsr: on(Component::Rsr1) || on(Component::Rsr2),
            discriminator: on(Component::Adv) || on(Component::Fea),
        }
    }

    /// Whether the structures behind component `c` exist.
    pub fn provides(&self, c: Component) -> bool {
        match c {
            Component::Out => true,
            Component::Adv | Component::Fea => self.discriminator,
            Component::Com | Component::Sep => self.memory,
            Component::Clu => self.clustering,
            Component::Rsr1 | Component::Rsr2 => self.rsr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TadSpec {
    pub architecture: Architecture,
    pub weights: WeightVectors,
}

impl TadSpec {
    /// Decode, coercing any "use λ" Γ gate whose λ is zero to zero.
    pub fn decode(seq: &OperatorSequence) -> Result<Self> {
        seq.check()?;
        let s = &seq.0;
        let architecture = Architecture {
            ipm: s[0],
            fexm: [s[1], s[2]],
            fenm: [s[3], s[4]],
            ffm: s[5],
            om: s[6],
        };
        let mut lambda = [0.0; COMPONENTS];
        let mut gamma = [0.0; COMPONENTS];
        for c in Component::ALL {
            lambda[c.index()] = lambda_choices(c)[s[lambda_slot(c)]];
            if s[gamma_slot(c)] == 1 {
                gamma[c.index()] = lambda[c.index()];
            }
        }
        Ok(Self {
            architecture,
            weights: WeightVectors { lambda, gamma },
        })
    }

    pub fn encode(&self) -> Result<OperatorSequence> {
        self.weights.validate()?;
        let a = &self.architecture;
        let mut s = [0; SEQUENCE_LEN];
        s[..ARCH_SLOTS].copy_from_slice(&[a.ipm, a.fexm[0], a.fexm[1], a.fenm[0], a.fenm[1], a.ffm, a.om]);
        for c in Component::ALL {
            let l = self.weights.lambda[c.index()];
            s[lambda_slot(c)] = lambda_choices(c)
                .iter()
                .position(|&v| v == l)
                .expect("validated weight");
            s[gamma_slot(c)] = usize::from(self.weights.gamma[c.index()] != 0.0);
        }
        let seq = OperatorSequence(s);
        seq.check()?;
        Ok(seq)
    }

    pub fn auxiliaries(&self) -> Auxiliaries {
        Auxiliaries::from_lambda(&self.weights.lambda)
    }

    /// Multi-line rendering of the decoded model.
    pub fn describe(&self) -> String {
        let a = &self.architecture;
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k:<10} {v}\n"));
        line("IPM", format!("IPM_{}: {}", a.ipm + 1, IPM_NAMES[a.ipm]));
        for (k, tag) in ["1st", "2nd"].iter().enumerate() {
            line(
                &format!("FExM_{tag}"),
                format!("FExM_{}: {}", a.fexm[k] + 1, FEXM_NAMES[a.fexm[k]]),
            );
            line(
                &format!("FEnM_{tag}"),
                format!("FEnM_{}: {}", a.fenm[k] + 1, FENM_NAMES[a.fenm[k]]),
            );
        }
        line("FFM", format!("FFM_{}: {}", a.ffm + 1, FFM_NAMES[a.ffm]));
        line("OM", format!("OM_{}: {}", a.om + 1, OM_NAMES[a.om]));
        let weights = |w: &[f64; COMPONENTS]| {
            Component::ALL
                .iter()
                .map(|c| format!("{c}={}", w[c.index()]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        line("Lambda", weights(&self.weights.lambda));
        line("Gamma", weights(&self.weights.gamma));
        let aux = self.auxiliaries();
        let names: Vec<&str> = [
            (aux.memory, "memory bank"),
            (aux.clustering, "clustering head"),
            (aux.rsr, "subspace matrix"),
            (aux.discriminator, "discriminator"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        line(
            "Auxiliary",
            if names.is_empty() {
                "none".into()
            } else {
                names.join(", ")
            },
        );
        out
    }
}
