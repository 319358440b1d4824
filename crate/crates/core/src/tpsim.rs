//! Stochastic trajectory-prediction samplers and the sample file format.
//!
//! Sample files are little-endian: the 8-byte magic `TPADSMP\0`, then `u32`
//! fields version, Ψ, N, t_pred and coordinate count (always 2), then
//! Ψ·N·t_pred·2 `f64` values ordered sample, pedestrian, frame, coordinate.

use crate::autodiff::{Tape, Var};
use crate::data::{reader, TrajectoryWindow};
use crate::error::{contract, Result, TpadError};
use crate::nn::{Adam, AdamConfig, Bound, Linear, LstmCell, ParamStore};
use crate::tensor::Matrix;
use crate::tpeval::SampleSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

const SAMPLE_MAGIC: &[u8; 8] = b"TPADSMP\0";
const SAMPLE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    #[default]
    ConstantVelocityGaussian,
    RecurrentGaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Ψ.
    pub samples: usize,
    /// Noise scale in meters (latent units for the recurrent sampler).
    pub sigma: f64,
    pub t_pred: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::ConstantVelocityGaussian,
            samples: 50,
            sigma: 0.3,
            t_pred: 12,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(TpadError::Config("sample count Ψ must be at least 1".into()));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(TpadError::Config(format!(
                "noise scale {} must be finite and non-negative",
                self.sigma
            )));
        }
        if self.t_pred == 0 {
            return Err(TpadError::Config("prediction horizon must be positive".into()));
        }
        Ok(())
    }
}

fn check_history(history: &Matrix, min_frames: usize) -> Result<usize> {
    if !history.cols().is_multiple_of(2) || history.cols() / 2 < min_frames || history.rows() == 0 {
        return Err(contract(format!(
            "history {:?} needs at least {min_frames} observed (x, y) frames",
            history.shape()
        )));
    }
    if !history.is_finite() {
        return Err(contract("history has non-finite entries"));
    }
    Ok(history.cols() / 2)
}

/// Last-velocity extrapolation, `N×(2·t_pred)`.
pub fn cv_extrapolate(history: &Matrix, t_pred: usize) -> Result<Matrix> {
    let t_obs = check_history(history, 2)?;
    Ok(Matrix::from_fn(history.rows(), 2 * t_pred, |p, j| {
        let (k, c) = (j / 2, j % 2);
        let last = history.get(p, 2 * (t_obs - 1) + c);
        let prev = history.get(p, 2 * (t_obs - 2) + c);
        last + (k + 1) as f64 * (last - prev)
    }))
}

/// Constant-velocity extrapolation plus i.i.d. Gaussian noise per future
/// coordinate. Sample 0 is the noise-free extrapolation.
pub fn cv_gaussian_sample(history: &Matrix, config: &SamplerConfig) -> Result<SampleSet> {
    config.validate()?;
    let base = cv_extrapolate(history, config.t_pred)?;
    let normal = Normal::new(0.0, config.sigma).map_err(|e| TpadError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples = (0..config.samples)
        .map(|k| {
            if k == 0 {
                base.clone()
            } else {
                base.map(|v| v + normal.sample(&mut rng))
            }
        })
        .collect();
    SampleSet::new(samples, "cv-gaussian")
}

/// Encoder-decoder over displacements; noise is added to the encoder's final
/// hidden state before decoding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecurrentSampler {
    store: ParamStore,
    embed: Linear,
    encoder: LstmCell,
    decoder: LstmCell,
    out: Linear,
    t_pred: usize,
    trained: bool,
}

fn displacements(history: &Matrix) -> Vec<Matrix> {
    let t = history.cols() / 2;
    (1..t)
        .map(|k| {
            Matrix::from_fn(history.rows(), 2, |p, c| {
                history.get(p, 2 * k + c) - history.get(p, 2 * (k - 1) + c)
            })
        })
        .collect()
}

impl RecurrentSampler {
    pub fn new(hidden: usize, t_pred: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embed = Linear::new(&mut store, "sampler.embed", 2, hidden, true, &mut rng);
        let encoder = LstmCell::new(&mut store, "sampler.encoder", hidden, hidden, &mut rng);
        let decoder = LstmCell::new(&mut store, "sampler.decoder", hidden, hidden, &mut rng);
        let out = Linear::new(&mut store, "sampler.out", hidden, 2, true, &mut rng);
        Self {
            store,
            embed,
            encoder,
            decoder,
            out,
            t_pred,
            trained: false,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn t_pred(&self) -> usize {
        self.t_pred
    }

    /// Predicted future relative to the last observed position, with optional
    /// latent noise.
    fn decode<'t>(&self, tape: &'t Tape, p: &Bound<'t>, history: &Matrix, noise: Option<Matrix>) -> Var<'t> {
        let n = history.rows();
        let steps = displacements(history);
        let mut state = self.encoder.zero_state(tape, n);
        for d in &steps {
            let x = self.embed.forward(p, tape.leaf(d.clone())).tanh();
            state = self.encoder.step(p, x, state);
        }
        let mut h = state.0;
        if let Some(eps) = noise {
            h = h + tape.leaf(eps);
        }
        let mut state = (h, tape.leaf(Matrix::zeros(n, self.decoder.hidden)));
        let mut input = self
            .embed
            .forward(p, tape.leaf(steps.last().expect("two frames").clone()))
            .tanh();
        let mut pos = tape.leaf(Matrix::zeros(n, 2));
        let mut frames = Vec::with_capacity(self.t_pred);
        for _ in 0..self.t_pred {
            state = self.decoder.step(p, input, state);
            let d = self.out.forward(p, state.0);
            pos = pos + d;
            frames.push(pos);
            input = self.embed.forward(p, d).tanh();
        }
        tape.concat_cols(&frames)
    }

    /// Fit by mean squared displacement error, one window per step.
    pub fn train(&mut self, windows: &[TrajectoryWindow], epochs: usize, lr: f64) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Err(TpadError::EmptyInput("no sampler training windows".into()));
        }
        let mut opt = Adam::new(
            AdamConfig {
                clip_norm: Some(5.0),
                ..AdamConfig::with_lr(lr)
            },
            &self.store,
        );
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut total = 0.0;
            for (step, w) in windows.iter().enumerate() {
                check_history(&w.history, 2)?;
                if w.t_pred != self.t_pred {
                    return Err(contract(format!(
                        "window horizon {} differs from sampler horizon {}",
                        w.t_pred, self.t_pred
                    )));
                }
                let tape = Tape::new();
                let p = self.store.bind(&tape);
                let anchor = w.last_observed();
                let target = Matrix::from_fn(w.future.rows(), w.future.cols(), |i, j| {
                    w.future.get(i, j) - anchor.get(i, j % 2)
                });
                let pred = self.decode(&tape, &p, &w.history, None);
                let loss = (pred - tape.leaf(target)).square().mean();
                let value = loss.item();
                if !value.is_finite() {
                    return Err(TpadError::NonFinite {
                        component: "sampler".into(),
                        step: epoch * windows.len() + step + 1,
                    });
                }
                total += value;
                opt.step(&mut self.store, &p.grads(&tape.backward(loss)));
            }
            history.push(total / windows.len() as f64);
        }
        self.trained = true;
        Ok(history)
    }

    pub fn sample(&self, history: &Matrix, config: &SamplerConfig) -> Result<SampleSet> {
        config.validate()?;
        if !self.trained {
            return Err(contract("recurrent sampler has not been trained"));
        }
        if config.t_pred != self.t_pred {
            return Err(contract(format!(
                "sampler horizon is {}, config asks for {}",
                self.t_pred, config.t_pred
            )));
        }
        let t_obs = check_history(history, 2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = history.rows();
        let samples = (0..config.samples)
            .map(|_| {
                let eps = Matrix::from_fn(n, self.decoder.hidden, |_, _| {
                    config.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                });
                let tape = Tape::new();
                let p = self.store.bind(&tape);
                let rel = self.decode(&tape, &p, history, Some(eps)).value();
                Matrix::from_fn(n, 2 * self.t_pred, |i, j| {
                    rel.get(i, j) + history.get(i, 2 * (t_obs - 1) + j % 2)
                })
            })
            .collect();
        SampleSet::new(samples, "recurrent-gaussian")
    }
}

pub fn encode_samples(set: &SampleSet) -> Result<Vec<u8>> {
    set.validate()?;
    let (psi, n, t) = (set.len(), set.n(), set.t_pred());
    let mut buf = Vec::with_capacity(28 + psi * n * t * 16);
    buf.extend_from_slice(SAMPLE_MAGIC);
    for v in [SAMPLE_VERSION, psi as u32, n as u32, t as u32, 2] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for s in &set.samples {
        for v in s.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_samples(buf: &[u8], source: &str) -> Result<SampleSet> {
    let mut r = reader(buf);
    if r.take(8)? != SAMPLE_MAGIC {
        return Err(TpadError::Format("not a sample file".into()));
    }
    let version = r.u32()?;
    if version != SAMPLE_VERSION {
        return Err(TpadError::Format(format!("unsupported sample file version {version}")));
    }
    let psi = r.u32()? as usize;
    let n = r.u32()? as usize;
    let t = r.u32()? as usize;
    let coords = r.u32()? as usize;
    if coords != 2 || psi == 0 || n == 0 || t == 0 {
        return Err(TpadError::Format(format!(
            "bad header Ψ={psi} N={n} t_pred={t} coords={coords}"
        )));
    }
    let payload = psi
        .checked_mul(n)
        .and_then(|v| v.checked_mul(t * 2 * 8))
        .ok_or_else(|| TpadError::Format("sample header overflows".into()))?;
    if buf.len() - 28 != payload {
        return Err(TpadError::Format(format!(
            "header declares {payload} payload bytes, file holds {}",
            buf.len() - 28
        )));
    }
    let mut samples = Vec::with_capacity(psi);
    for _ in 0..psi {
        let data = (0..n * t * 2).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        samples.push(Matrix::from_vec(n, 2 * t, data));
    }
    debug_assert!(r.at_end());
    SampleSet::new(samples, source).map_err(|e| TpadError::Format(e.to_string()))
}

pub fn save_samples(path: &Path, set: &SampleSet) -> Result<()> {
    std::fs::write(path, encode_samples(set)?)?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<SampleSet> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file");
    decode_samples(&buf, source)
}
