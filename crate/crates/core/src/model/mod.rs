//! Trainable trajectory anomaly-detection models built from a decoded
//! operator sequence.
//!
//! A model reads a window's future and reconstructs its history. All
//! coordinates are shifted so that each pedestrian's last observed position is
//! the origin; positions in absolute coordinates are kept only for the
//! distance-based adjacency.

mod operators;

pub use operators::{
    gamma_slot, lambda_slot, Architecture, Auxiliaries, OperatorSequence, TadSpec, ARCH_SLOTS, FENM_NAMES, FEXM_NAMES,
    FFM_NAMES, IPM_NAMES, OM_NAMES, SEQUENCE_LEN, SLOT_NAMES, SLOT_OPTIONS,
};

use crate::autodiff::{Tape, Var};
use crate::blocks::{
    ffm_apply, fused_width, ipm_apply, ipm_channels, BlockInput, ClusterHead, Discriminator, FeatureEnhancer,
    FeatureExtractor, MemoryBank, OutputModule, RsrMatrix,
};
use crate::data::{TrajectoryWindow, T_OBS, T_PRED};
use crate::error::{contract, Result, TpadError};
use crate::losses::{
    anomaly_score, loss_adv_var, loss_cluster_var, loss_fea_var, loss_memory_var, loss_out_var, loss_rsr_var,
    training_loss_var, Component, LossVector, SepForm, ADV_EPS, COMPONENTS,
};
use crate::nn::{Adam, AdamConfig, Bound, ParamStore};
use crate::tensor::Matrix;
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub memory_items: usize,
    pub clusters: usize,
    pub discriminator_hidden: usize,
    pub sep_form: SepForm,
    pub optimizer: AdamConfig,
    pub discriminator_optimizer: AdamConfig,
    pub t_obs: usize,
    pub t_pred: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let optimizer = AdamConfig {
            clip_norm: Some(5.0),
            ..AdamConfig::default()
        };
        Self {
            hidden: 64,
            memory_items: 10,
            clusters: 8,
            discriminator_hidden: 32,
            sep_form: SepForm::default(),
            discriminator_optimizer: optimizer.clone(),
            optimizer,
            t_obs: T_OBS,
            t_pred: T_PRED,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Blocks {
    fexm: [FeatureExtractor; 2],
    fenm: [FeatureEnhancer; 2],
    om: OutputModule,
    memory: Option<MemoryBank>,
    clustering: Option<ClusterHead>,
    rsr: Option<RsrMatrix>,
}

#[derive(Clone, Debug)]
struct Adversary {
    net: Discriminator,
    store: ParamStore,
    optimizer: Adam,
}

#[derive(Clone, Debug)]
pub struct TadModel {
    spec: TadSpec,
    config: ModelConfig,
    store: ParamStore,
    blocks: Blocks,
    adversary: Option<Adversary>,
    optimizer: Adam,
    epochs_trained: usize,
    loss_history: Vec<f64>,
    warnings: Vec<String>,
}

/// Everything one forward pass produces on a tape.
pub struct ForwardPass<'t> {
    /// Predicted history relative to the last observed position, `N×(2·t_obs)`.
    pub predicted: Var<'t>,
    pub fused: Var<'t>,
    /// One `N×1` column per component the model's structures can provide.
    pub components: [Option<Var<'t>>; COMPONENTS],
}

fn shift(m: &Matrix, origin: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) - origin.get(i, j % 2))
}

fn unshift(m: &Matrix, origin: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + origin.get(i, j % 2))
}

impl TadModel {
    pub fn build(spec: &TadSpec, config: &ModelConfig) -> Result<Self> {
        spec.weights.validate()?;
        if config.hidden == 0 || config.t_obs == 0 || config.t_pred == 0 {
            return Err(TpadError::Config("hidden width and horizons must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let a = &spec.architecture;
        let h = config.hidden;
        let channels = ipm_channels(a.ipm);
        let fexm = [0, 1].map(|k| {
            let tag = ["1st", "2nd"][k];
            FeatureExtractor::new(
                a.fexm[k],
                &mut store,
                &format!("fexm_{tag}"),
                channels,
                config.t_pred,
                h,
                &mut rng,
            )
        });
        let [f0, f1] = fexm;
        let fexm = [f0?, f1?];
        let fenm = [0, 1].map(|k| {
            let tag = ["1st", "2nd"][k];
            FeatureEnhancer::new(a.fenm[k], &mut store, &format!("fenm_{tag}"), h, &mut rng)
        });
        let [e0, e1] = fenm;
        let fenm = [e0?, e1?];
        let width = fused_width(a.ffm, h);
        let om = OutputModule::new(a.om, &mut store, "om", width, h, config.t_obs, &mut rng)?;

        let aux = spec.auxiliaries();
        let memory = aux
            .memory
            .then(|| MemoryBank::new(&mut store, "memory", config.memory_items, h, &mut rng))
            .transpose()?;
        let clustering = aux
            .clustering
            .then(|| ClusterHead::new(&mut store, "cluster", config.clusters, width, &mut rng))
            .transpose()?;
        let rsr = aux.rsr.then(|| RsrMatrix::new(&mut store, "rsr", width, &mut rng));
        let adversary = aux.discriminator.then(|| {
            let mut dstore = ParamStore::new();
            let input = 2 * (config.t_pred + config.t_obs);
            let net = Discriminator::new(&mut dstore, "disc", input, config.discriminator_hidden, &mut rng);
            let optimizer = Adam::new(config.discriminator_optimizer.clone(), &dstore);
            Adversary {
                net,
                store: dstore,
                optimizer,
            }
        });

        let mut warnings = Vec::new();
        for k in 0..2 {
            if fenm[k].degrades_on(fexm[k].keeps_time()) {
                let msg = format!(
                    "branch {}: {} receives pooled features and acts as identity",
                    k + 1,
                    FENM_NAMES[a.fenm[k]]
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }

        let optimizer = Adam::new(config.optimizer.clone(), &store);
        Ok(Self {
            spec: *spec,
            config: config.clone(),
            store,
            blocks: Blocks {
                fexm,
                fenm,
                om,
                memory,
                clustering,
                rsr,
            },
            adversary,
            optimizer,
            epochs_trained: 0,
            loss_history: Vec::new(),
            warnings,
        })
    }

    pub fn spec(&self) -> &TadSpec {
        &self.spec
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn discriminator_params(&self) -> Option<&ParamStore> {
        self.adversary.as_ref().map(|a| &a.store)
    }

    pub fn memory_items(&self) -> Option<usize> {
        self.blocks.memory.as_ref().map(|m| m.size)
    }

    pub fn has_clustering(&self) -> bool {
        self.blocks.clustering.is_some()
    }

    pub fn has_rsr(&self) -> bool {
        self.blocks.rsr.is_some()
    }

    pub fn has_discriminator(&self) -> bool {
        self.adversary.is_some()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Mean training loss of every epoch run so far.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    fn check_inputs(&self, future: &Matrix, history: &Matrix) -> Result<()> {
        let n = future.rows();
        if n == 0 {
            return Err(contract("window with no pedestrians"));
        }
        if future.cols() != 2 * self.config.t_pred || history.shape() != (n, 2 * self.config.t_obs) {
            return Err(contract(format!(
                "future {:?} / history {:?} do not match horizons {}/{}",
                future.shape(),
                history.shape(),
                self.config.t_pred,
                self.config.t_obs
            )));
        }
        Ok(())
    }

    /// Run the model on `future` (`N×2·t_pred`) with `history` (`N×2·t_obs`)
    /// supplying the anchor and the reconstruction target.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        dp: Option<&Bound<'t>>,
        future: &Matrix,
        history: &Matrix,
    ) -> Result<ForwardPass<'t>> {
        self.check_inputs(future, history)?;
        let n = future.rows();
        let t_obs = self.config.t_obs;
        let origin = history.slice_cols(2 * (t_obs - 1), 2);
        let y_rel = shift(future, &origin);
        let o_rel = shift(history, &origin);
        let a = &self.spec.architecture;
        let processed = ipm_apply(a.ipm, &y_rel, Some(&Matrix::zeros(n, 2)))?;
        let input = BlockInput::new(tape, &processed, ipm_channels(a.ipm), future);

        let h0 = self.blocks.fexm[0].forward(p, &input)?;
        let h1 = self.blocks.fexm[1].forward(p, &input)?;
        let mut e0 = self.blocks.fenm[0].forward(p, &h0);
        let e1 = self.blocks.fenm[1].forward(p, &h1);

        let mut components: [Option<Var<'t>>; COMPONENTS] = [None; COMPONENTS];
        if let Some(memory) = &self.blocks.memory {
            let items = p[memory.items];
            let read = memory.query(p, &e0);
            let (com, sep) = loss_memory_var(
                read.queries,
                read.nearest_items(items),
                read.second_items(items),
                &read.owners,
                n,
                self.config.sep_form,
            );
            components[Component::Com.index()] = Some(com);
            components[Component::Sep.index()] = Some(sep);
            e0 = read.retrieved;
        }
        let fused = ffm_apply(a.ffm, &h0, &h1, &e0, &e1)?;
        let predicted = self.blocks.om.forward(p, fused, t_obs);
        let target = tape.leaf(o_rel);
        components[Component::Out.index()] = Some(loss_out_var(target, predicted));

        if let (Some(adv), Some(dp)) = (&self.adversary, dp) {
            let y = tape.leaf(y_rel);
            let (prob_fake, feat_fake) = adv.net.score(dp, y, predicted);
            let (_, feat_real) = adv.net.score(dp, y, target);
            components[Component::Adv.index()] = Some(loss_adv_var(prob_fake));
            components[Component::Fea.index()] = Some(loss_fea_var(feat_real, feat_fake));
        }
        if let Some(head) = &self.blocks.clustering {
            components[Component::Clu.index()] = Some(loss_cluster_var(head.assign(p, fused)));
        }
        if let Some(rsr) = &self.blocks.rsr {
            let (r1, r2) = loss_rsr_var(fused, p[rsr.a]);
            components[Component::Rsr1.index()] = Some(r1);
            components[Component::Rsr2.index()] = Some(r2);
        }
        Ok(ForwardPass {
            predicted,
            fused,
            components,
        })
    }

    /// Predicted history in absolute coordinates.
    pub fn predict(&self, future: &Matrix, history: &Matrix) -> Result<Matrix> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let pass = self.forward(&tape, &p, None, future, history)?;
        let origin = history.slice_cols(2 * (self.config.t_obs - 1), 2);
        Ok(unshift(&pass.predicted.value(), &origin))
    }

    /// Every component that enters the objective or the score; the rest stay zero.
    pub fn loss_vector(&self, future: &Matrix, history: &Matrix) -> Result<LossVector> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let dp = self.adversary.as_ref().map(|a| a.store.bind(&tape));
        let pass = self.forward(&tape, &p, dp.as_ref(), future, history)?;
        let mut lv = LossVector::zeros(future.rows());
        for c in Component::ALL {
            if !self.spec.weights.needs(c) {
                continue;
            }
            let v = pass.components[c.index()]
                .ok_or_else(|| contract(format!("component {c} is weighted but has no structure")))?;
            lv.set(c, v.value().data())?;
        }
        Ok(lv)
    }

    /// Per-pedestrian anomaly score of `future` given the observed `history`.
    pub fn score(&self, future: &Matrix, history: &Matrix) -> Result<Vec<f64>> {
        anomaly_score(&self.loss_vector(future, history)?, &self.spec.weights.gamma)
    }

    pub fn score_window(&self, window: &TrajectoryWindow) -> Result<Vec<f64>> {
        self.score(&window.future, &window.history)
    }

    /// One optimizer step on one window; returns the training loss.
    fn train_step(&mut self, window: &TrajectoryWindow, step: usize) -> Result<f64> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let dp = self.adversary.as_ref().map(|a| a.store.bind(&tape));
        let pass = self.forward(&tape, &p, dp.as_ref(), &window.future, &window.history)?;
        let lambda = &self.spec.weights.lambda;
        for c in Component::ALL {
            if lambda[c.index()] == 0.0 {
                continue;
            }
            if let Some(v) = pass.components[c.index()] {
                if !v.with_value(Matrix::is_finite) {
                    return Err(TpadError::NonFinite {
                        component: c.name().into(),
                        step,
                    });
                }
            }
        }
        let loss = training_loss_var(&pass.components, lambda)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(TpadError::NonFinite {
                component: "total".into(),
                step,
            });
        }
        let grads = p.grads(&tape.backward(loss));
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(TpadError::NonFinite {
                component: "gradient".into(),
                step,
            });
        }
        let fake = pass.predicted.value();
        drop(dp);
        self.optimizer.step(&mut self.store, &grads);
        if self.adversary.is_some() {
            self.discriminator_step(window, &fake, step)?;
        }
        Ok(value)
    }

    /// Standard real/fake objective on (future, true history) versus
    /// (future, predicted history).
    fn discriminator_step(&mut self, window: &TrajectoryWindow, fake_rel: &Matrix, step: usize) -> Result<()> {
        let adv = self.adversary.as_mut().expect("discriminator present");
        let origin = window.last_observed();
        let tape = Tape::new();
        let dp = adv.store.bind(&tape);
        let y = tape.leaf(shift(&window.future, &origin));
        let real = tape.leaf(shift(&window.history, &origin));
        let fake = tape.leaf(fake_rel.clone());
        let (pr, _) = adv.net.score(&dp, y, real);
        let (pf, _) = adv.net.score(&dp, y, fake);
        let lo = ADV_EPS;
        let hi = 1.0 - ADV_EPS;
        let loss = -(pr.clamp(lo, hi).ln() + pf.scale(-1.0).add_scalar(1.0).clamp(lo, hi).ln()).mean();
        if !loss.item().is_finite() {
            return Err(TpadError::NonFinite {
                component: "discriminator".into(),
                step,
            });
        }
        let grads = dp.grads(&tape.backward(loss));
        drop(dp);
        adv.optimizer.step(&mut adv.store, &grads);
        Ok(())
    }

    /// Train for `epochs` passes over `windows` in order; returns the mean
    /// loss of each epoch.
    pub fn train(&mut self, windows: &[TrajectoryWindow], epochs: usize) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Err(TpadError::EmptyInput("no training windows".into()));
        }
        let mut means = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut total = 0.0;
            for w in windows {
                let step = self.optimizer.steps() as usize + 1;
                total += self.train_step(w, step)?;
            }
            let mean = total / windows.len() as f64;
            self.epochs_trained += 1;
            self.loss_history.push(mean);
            means.push(mean);
        }
        Ok(means)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            sequence: self.spec.encode()?,
            config: self.config.clone(),
            params: self.store.clone(),
            discriminator_params: self.adversary.as_ref().map(|a| a.store.clone()),
            epochs_trained: self.epochs_trained,
            loss_history: self.loss_history.clone(),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec = TadSpec::decode(&ck.sequence)?;
        let mut model = Self::build(&spec, &ck.config)?;
        let same_layout = |a: &ParamStore, b: &ParamStore| {
            a.names() == b.names() && a.values().iter().zip(b.values()).all(|(x, y)| x.shape() == y.shape())
        };
        if !same_layout(&model.store, &ck.params) {
            return Err(TpadError::Format(
                "checkpoint parameters do not match the decoded model".into(),
            ));
        }
        model.store = ck.params.clone();
        match (&mut model.adversary, &ck.discriminator_params) {
            (Some(adv), Some(stored)) if same_layout(&adv.store, stored) => adv.store = stored.clone(),
            (None, None) => {}
            _ => {
                return Err(TpadError::Format(
                    "checkpoint discriminator does not match the decoded model".into(),
                ))
            }
        }
        model.epochs_trained = ck.epochs_trained;
        model.loss_history = ck.loss_history.clone();
        Ok(model)
    }

    /// Write the JSON checkpoint and a `.txt` sidecar describing the model.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = self.checkpoint()?;
        fs::write(path, serde_json::to_vec(&ck)?)?;
        fs::write(sidecar_path(path), self.describe())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        Self::from_checkpoint(&ck)
    }

    pub fn describe(&self) -> String {
        let mut text = format!(
            "sequence   {}\n",
            self.spec.encode().map(|s| s.to_string()).unwrap_or_default()
        );
        text.push_str(&self.spec.describe());
        text.push_str(&format!("hidden     {}\n", self.config.hidden));
        text.push_str(&format!("epochs     {}\n", self.epochs_trained));
        for w in &self.warnings {
            text.push_str(&format!("warning    {w}\n"));
        }
        text
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub sequence: OperatorSequence,
    pub config: ModelConfig,
    pub params: ParamStore,
    pub discriminator_params: Option<ParamStore>,
    pub epochs_trained: usize,
    pub loss_history: Vec<f64>,
}
