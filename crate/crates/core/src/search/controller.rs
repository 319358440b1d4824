//! Autoregressive LSTM policy over operator sequences.

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::losses::{Component, COMPONENTS};
use crate::model::{gamma_slot, lambda_slot, OperatorSequence, ARCH_SLOTS, SEQUENCE_LEN, SLOT_OPTIONS};
use crate::nn::{xavier, Adam, AdamConfig, Bound, Linear, LstmCell, ParamId, ParamStore};
use crate::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub embedding: usize,
    pub hidden: usize,
    pub optimizer: AdamConfig,
    pub baseline_decay: f64,
    /// Weight of the summed per-slot entropy bonus; zero disables it.
    pub entropy_weight: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            embedding: 100,
            hidden: 100,
            optimizer: AdamConfig::with_lr(3.5e-4),
            baseline_decay: 0.95,
            entropy_weight: 0.0,
        }
    }
}

/// The Γ slot index whose "use λ" option is masked when the sampled λ of the
/// same component is zero, paired with that λ slot.
fn gate_source(slot: usize) -> Option<usize> {
    if slot < ARCH_SLOTS + COMPONENTS {
        return None;
    }
    let c = Component::ALL[slot - ARCH_SLOTS - COMPONENTS];
    debug_assert_eq!(gamma_slot(c), slot);
    (c != Component::Out).then(|| lambda_slot(c))
}

/// Whether slot `slot` is forced to option 0 given the choices so far.
pub fn is_masked(slot: usize, choices: &[usize]) -> bool {
    gate_source(slot).is_some_and(|l| choices[l] == 0)
}

/// Uniform sampling per slot, respecting the Γ mask.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> OperatorSequence {
    let mut s = [0; SEQUENCE_LEN];
    for t in 0..SEQUENCE_LEN {
        s[t] = if is_masked(t, &s) {
            0
        } else {
            rng.random_range(0..SLOT_OPTIONS[t])
        };
    }
    OperatorSequence(s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layout {
    cell: LstmCell,
    start: ParamId,
    embeddings: Vec<ParamId>,
    heads: Vec<Linear>,
}

/// One decoded pass: the choice per slot with its log-probability
/// (`None` when the slot was masked) and the entropy of its distribution.
struct Pass<'t> {
    choices: [usize; SEQUENCE_LEN],
    log_probs: Vec<Option<Var<'t>>>,
    entropies: Vec<Var<'t>>,
}

enum Decode<'a, R: ?Sized> {
    Sample(&'a mut R),
    Greedy,
    Forced(&'a OperatorSequence),
}

/// Controller parameters, optimizer moments, baseline and step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Controller {
    pub config: ControllerConfig,
    store: ParamStore,
    layout: Layout,
    optimizer: Adam,
    baseline: Option<f64>,
    steps: u64,
}

impl Controller {
    pub fn new(config: ControllerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (e, h) = (config.embedding, config.hidden);
        let cell = LstmCell::new(&mut store, "controller.lstm", e, h, &mut rng);
        let start = store.add("controller.start", Matrix::uniform(1, e, 0.1, &mut rng));
        let embeddings = (0..SEQUENCE_LEN - 1)
            .map(|t| store.add(format!("controller.embed_{t}"), xavier(SLOT_OPTIONS[t], e, &mut rng)))
            .collect();
        let heads = (0..SEQUENCE_LEN)
            .map(|t| {
                Linear::new(
                    &mut store,
                    &format!("controller.head_{t}"),
                    h,
                    SLOT_OPTIONS[t],
                    true,
                    &mut rng,
                )
            })
            .collect();
        let optimizer = Adam::new(config.optimizer.clone(), &store);
        Self {
            config,
            store,
            layout: Layout {
                cell,
                start,
                embeddings,
                heads,
            },
            optimizer,
            baseline: None,
            steps: 0,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Option count of every output head.
    pub fn head_sizes(&self) -> Vec<usize> {
        self.layout.heads.iter().map(|h| h.fan_out).collect()
    }

    fn decode<'t, R: Rng + ?Sized>(&self, tape: &'t Tape, p: &Bound<'t>, mut mode: Decode<'_, R>) -> Pass<'t> {
        let l = &self.layout;
        let mut state = l.cell.zero_state(tape, 1);
        let mut input = p[l.start];
        let mut choices = [0; SEQUENCE_LEN];
        let mut log_probs = Vec::with_capacity(SEQUENCE_LEN);
        let mut entropies = Vec::new();
        for t in 0..SEQUENCE_LEN {
            state = l.cell.step(p, input, state);
            let choice = if is_masked(t, &choices) {
                log_probs.push(None);
                0
            } else {
                let logp = l.heads[t].forward(p, state.0).log_softmax_rows();
                let probs = logp.with_value(|v| v.map(f64::exp));
                let c = match &mut mode {
                    Decode::Sample(rng) => categorical(probs.row(0), rng.random()),
                    Decode::Greedy => argmax(probs.row(0)),
                    Decode::Forced(seq) => seq.0[t],
                };
                log_probs.push(Some(logp.pick(&[(0, c)])));
                if self.config.entropy_weight != 0.0 {
                    entropies.push((logp.exp() * logp).sum().scale(-1.0));
                }
                c
            };
            choices[t] = choice;
            if t + 1 < SEQUENCE_LEN {
                let onehot = tape.leaf(Matrix::from_fn(1, SLOT_OPTIONS[t], |_, j| f64::from(j == choice)));
                input = onehot.matmul(p[l.embeddings[t]]);
            }
        }
        Pass {
            choices,
            log_probs,
            entropies,
        }
    }

    /// Sample a sequence; returns it with per-slot log-probabilities (0 for
    /// masked slots).
    pub fn sample_sequence<R: Rng + ?Sized>(&self, rng: &mut R) -> (OperatorSequence, [f64; SEQUENCE_LEN]) {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let pass = self.decode(&tape, &p, Decode::Sample(rng));
        (OperatorSequence(pass.choices), values(&pass.log_probs))
    }

    /// The modal sequence under greedy decoding.
    pub fn greedy_sequence(&self) -> OperatorSequence {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        OperatorSequence(self.decode::<ChaCha8Rng>(&tape, &p, Decode::Greedy).choices)
    }

    /// Per-slot log-probabilities of a given sequence.
    pub fn log_probs(&self, seq: &OperatorSequence) -> [f64; SEQUENCE_LEN] {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        values(&self.decode::<ChaCha8Rng>(&tape, &p, Decode::Forced(seq)).log_probs)
    }

    pub fn log_prob(&self, seq: &OperatorSequence) -> f64 {
        self.log_probs(seq).iter().sum()
    }

    /// Probabilities of the first slot, which depend only on the start token.
    pub fn first_slot_probs(&self) -> Vec<f64> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let l = &self.layout;
        let state = l.cell.step(&p, p[l.start], l.cell.zero_state(&tape, 1));
        softmax_rows(&l.heads[0].forward(&p, state.0).value()).row(0).to_vec()
    }

    /// Gradient of `−(advantage · log P(seq) + β · Σ entropy)` per parameter.
    pub fn policy_gradient(&self, seq: &OperatorSequence, advantage: f64) -> Vec<Matrix> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let pass = self.decode::<ChaCha8Rng>(&tape, &p, Decode::Forced(seq));
        let mut terms: Vec<Var> = pass.log_probs.iter().flatten().map(|v| v.scale(-advantage)).collect();
        let beta = self.config.entropy_weight;
        terms.extend(pass.entropies.iter().map(|h| h.scale(-beta)));
        let mut loss = tape.scalar(0.0);
        for t in terms {
            loss = loss + t;
        }
        p.grads(&tape.backward(loss))
    }

    /// One REINFORCE step on a sampled sequence with reward `reward` against
    /// baseline `baseline`. Log-probabilities are recomputed under the current
    /// parameters.
    pub fn reinforce_update(&mut self, seq: &OperatorSequence, reward: f64, baseline: f64) {
        let grads = self.policy_gradient(seq, reward - baseline);
        self.optimizer.step(&mut self.store, &grads);
        self.steps += 1;
    }

    /// Apply one search observation: update θ against the current baseline,
    /// then move the baseline towards the reward.
    pub fn observe(&mut self, seq: &OperatorSequence, reward: f64) {
        let b = self.baseline.unwrap_or(reward);
        self.reinforce_update(seq, reward, b);
        self.baseline = Some(update_baseline(self.baseline, reward, self.config.baseline_decay));
    }
}

/// `decay·b + (1−decay)·R`; the first reward initializes the baseline.
pub fn update_baseline(b: Option<f64>, reward: f64, decay: f64) -> f64 {
    match b {
        Some(b) => decay * b + (1.0 - decay) * reward,
        None => reward,
    }
}

fn values(log_probs: &[Option<Var<'_>>]) -> [f64; SEQUENCE_LEN] {
    let mut out = [0.0; SEQUENCE_LEN];
    for (o, v) in out.iter_mut().zip(log_probs) {
        if let Some(v) = v {
            *o = v.item();
        }
    }
    out
}

fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}
