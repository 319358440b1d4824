//! Parameter storage, the two layer primitives every block is built from,
//! and the Adam optimizer.

use crate::autodiff::{Gradients, Tape, Var};
use crate::tensor::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Index;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

/// Named parameter matrices. Names are block-qualified (`"fexm_1st.w1"`) so
/// checkpoints stay readable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Put every parameter on `tape` as a leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }
}

/// Parameters of one [`ParamStore`] placed on a tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }

    /// Gradients in store order.
    pub fn grads(&self, g: &Gradients) -> Vec<Matrix> {
        self.vars.iter().map(|&v| g.wrt(v)).collect()
    }
}

impl<'t> Index<ParamId> for Bound<'t> {
    type Output = Var<'t>;
    fn index(&self, id: ParamId) -> &Var<'t> {
        &self.vars[id.0]
    }
}

pub fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::uniform(fan_in, fan_out, bound, rng)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), xavier(fan_in, fan_out, rng));
        let b = bias.then(|| store.add(format!("{name}.b"), Matrix::zeros(1, fan_out)));
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        let y = x.matmul(p[self.w]);
        match self.b {
            Some(b) => y + p[b],
            None => y,
        }
    }
}

/// LSTM cell with fused gate weights in `i, f, g, o` order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_x = store.add(format!("{name}.w_x"), xavier(input, 4 * hidden, rng));
        let w_h = store.add(format!("{name}.w_h"), xavier(hidden, 4 * hidden, rng));
        // forget-gate bias starts at one
        let b = Matrix::from_fn(
            1,
            4 * hidden,
            |_, j| {
                if (hidden..2 * hidden).contains(&j) {
                    1.0
                } else {
                    0.0
                }
            },
        );
        let b = store.add(format!("{name}.b"), b);
        Self { w_x, w_h, b, hidden }
    }

    pub fn zero_state<'t>(&self, tape: &'t Tape, batch: usize) -> (Var<'t>, Var<'t>) {
        (
            tape.leaf(Matrix::zeros(batch, self.hidden)),
            tape.leaf(Matrix::zeros(batch, self.hidden)),
        )
    }

    pub fn step<'t>(&self, p: &Bound<'t>, x: Var<'t>, state: (Var<'t>, Var<'t>)) -> (Var<'t>, Var<'t>) {
        let (h, c) = state;
        let gates = x.matmul(p[self.w_x]) + h.matmul(p[self.w_h]) + p[self.b];
        let hd = self.hidden;
        let i = gates.slice_cols(0, hd).sigmoid();
        let f = gates.slice_cols(hd, hd).sigmoid();
        let g = gates.slice_cols(2 * hd, hd).tanh();
        let o = gates.slice_cols(3 * hd, hd).sigmoid();
        let c = f * c + i * g;
        let h = o * c.tanh();
        (h, c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip applied before the moment update.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            config,
            m: store.values().iter().map(zeros).collect(),
            v: store.values().iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) {
        assert_eq!(grads.len(), store.len(), "gradient count does not match store");
        let scale = match self.config.clip_norm {
            Some(max) => {
                let norm = grads.iter().map(Matrix::frobenius_sq).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let AdamConfig {
            lr, beta1, beta2, eps, ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, g) in grads.iter().enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = store.values[k].data_mut();
            for j in 0..g.len() {
                let gj = g.data()[j] * scale;
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
