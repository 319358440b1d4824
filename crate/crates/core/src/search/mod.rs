//! Controller-driven and random search over operator sequences, with a
//! resumable run directory.

mod controller;

pub use controller::{is_masked, sample_uniform, update_baseline, Controller, ControllerConfig};

use crate::data::DatasetSplit;
use crate::error::{Result, TpadError};
use crate::model::{ModelConfig, OperatorSequence, TadModel, TadSpec, SEQUENCE_LEN};
use crate::tpeval::auc;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

/// Reward given to candidates that cannot be scored.
pub const CHANCE_REWARD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reward: f64,
    pub diagnostic: Option<String>,
}

impl Evaluation {
    pub fn new(reward: f64) -> Self {
        Self {
            reward,
            diagnostic: None,
        }
    }

    pub fn chance(diagnostic: impl Into<String>) -> Self {
        Self {
            reward: CHANCE_REWARD,
            diagnostic: Some(diagnostic.into()),
        }
    }
}

/// Maps a candidate to its reward. `index` is the candidate's launch index,
/// usable as a seed offset.
pub trait Evaluator: Sync {
    fn evaluate(&self, seq: &OperatorSequence, index: usize) -> Result<Evaluation>;
}

impl<F> Evaluator for F
where
    F: Fn(&OperatorSequence, usize) -> Result<Evaluation> + Sync,
{
    fn evaluate(&self, seq: &OperatorSequence, index: usize) -> Result<Evaluation> {
        self(seq, index)
    }
}

/// Decode, build, train for `epochs` on the training windows, then reward the
/// validation AUC of positives against their perturbed copies.
pub fn evaluate_candidate(
    seq: &OperatorSequence,
    split: &DatasetSplit,
    epochs: usize,
    config: &ModelConfig,
) -> Result<Evaluation> {
    let spec = TadSpec::decode(seq)?;
    if spec.weights.scoring_is_empty() {
        return Ok(Evaluation::chance("every scoring gate is zero"));
    }
    if split.val.is_empty() || split.val_neg.is_empty() {
        return Err(TpadError::EmptyInput("validation positives or negatives".into()));
    }
    let mut model = TadModel::build(&spec, config)?;
    match model.train(&split.train, epochs) {
        Ok(_) => {}
        Err(TpadError::NonFinite { component, step }) => {
            return Ok(Evaluation::chance(format!(
                "training diverged in {component} at step {step}"
            )));
        }
        Err(e) => return Err(e),
    }
    let mut pos = Vec::new();
    for w in &split.val {
        pos.extend(model.score_window(w)?);
    }
    let mut neg = Vec::new();
    for k in 0..split.val_neg.len() {
        neg.extend(model.score_window(&split.negative_window(k))?);
    }
    if pos.iter().chain(&neg).any(|v| !v.is_finite()) {
        return Ok(Evaluation::chance("non-finite anomaly score"));
    }
    Ok(Evaluation::new(auc(&pos, &neg)?))
}

/// Candidate evaluation on a prepared split. The model seed is offset by the
/// candidate index.
#[derive(Clone, Debug)]
pub struct TadEvaluator {
    pub split: DatasetSplit,
    pub epochs: usize,
    pub model: ModelConfig,
}

impl Evaluator for TadEvaluator {
    fn evaluate(&self, seq: &OperatorSequence, index: usize) -> Result<Evaluation> {
        let config = ModelConfig {
            seed: self.model.seed.wrapping_add(index as u64),
            ..self.model.clone()
        };
        evaluate_candidate(seq, &self.split, self.epochs, &config)
    }
}

/// Reward = fraction of slots equal to a hidden target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotMatchBandit {
    pub target: OperatorSequence,
}

impl SlotMatchBandit {
    pub fn new(target: OperatorSequence) -> Self {
        Self { target }
    }

    /// A target drawn uniformly from the masked space.
    pub fn random(seed: u64) -> Self {
        Self::new(sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn reward(&self, seq: &OperatorSequence) -> f64 {
        let hits = seq.0.iter().zip(&self.target.0).filter(|(a, b)| a == b).count();
        hits as f64 / SEQUENCE_LEN as f64
    }
}

impl Evaluator for SlotMatchBandit {
    fn evaluate(&self, seq: &OperatorSequence, _index: usize) -> Result<Evaluation> {
        Ok(Evaluation::new(self.reward(seq)))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Reinforce,
    Random,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Reinforce => "reinforce",
            Strategy::Random => "random",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = TpadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reinforce" => Ok(Strategy::Reinforce),
            "random" => Ok(Strategy::Random),
            other => Err(TpadError::Config(format!("unknown search strategy {other:?}"))),
        }
    }
}

/// Stop after `candidates` evaluations or `wall_seconds`, whichever first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub candidates: Option<usize>,
    pub wall_seconds: Option<f64>,
}

impl Budget {
    pub fn candidates(n: usize) -> Self {
        Self {
            candidates: Some(n),
            wall_seconds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.candidates, self.wall_seconds) {
            (None, None) => Err(TpadError::Config(
                "search budget needs a candidate count or wall time".into(),
            )),
            (Some(0), _) => Err(TpadError::Config("candidate budget must be positive".into())),
            (_, Some(s)) if s.is_nan() || s <= 0.0 => {
                Err(TpadError::Config("wall-time budget must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn allows(&self, launched: usize, elapsed: f64) -> bool {
        self.candidates.is_none_or(|n| launched < n) && self.wall_seconds.is_none_or(|s| elapsed < s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub budget: Budget,
    pub seed: u64,
    pub controller: ControllerConfig,
    /// Concurrent evaluations. One is strictly serial and reproducible; more
    /// apply controller updates in completion order.
    pub workers: usize,
    /// Controller snapshot interval, in completed candidates.
    pub checkpoint_every: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Reinforce,
            budget: Budget::candidates(20),
            seed: 0,
            controller: ControllerConfig::default(),
            workers: 1,
            checkpoint_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    /// Position in completion order.
    pub index: usize,
    pub sequence: OperatorSequence,
    pub reward: f64,
    /// Seconds since the search started, at completion.
    pub wall_time: f64,
    pub strategy: Strategy,
    /// Controller steps and baseline after this record's update.
    pub controller_step: u64,
    pub baseline: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: SearchRecord,
    pub history: Vec<SearchRecord>,
    pub controller: Option<Controller>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SearchState {
    config: SearchConfig,
    completed: usize,
    elapsed: f64,
    best: Option<SearchRecord>,
    controller: Option<Controller>,
}

/// The sampling stream of launch `index`.
pub fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn run_search<E: Evaluator>(evaluator: &E, config: &SearchConfig, run_dir: Option<&Path>) -> Result<SearchOutcome> {
    run_search_with(evaluator, config, run_dir, |_, _| {})
}

/// Uniform sampling through the same loop and record format.
pub fn random_search<E: Evaluator>(
    evaluator: &E,
    config: &SearchConfig,
    run_dir: Option<&Path>,
) -> Result<SearchOutcome> {
    let config = SearchConfig {
        strategy: Strategy::Random,
        ..config.clone()
    };
    run_search(evaluator, &config, run_dir)
}

/// Run or resume a search. `observer` sees each record after the controller
/// has been updated with it.
pub fn run_search_with<E: Evaluator>(
    evaluator: &E,
    config: &SearchConfig,
    run_dir: Option<&Path>,
    mut observer: impl FnMut(&SearchRecord, Option<&Controller>),
) -> Result<SearchOutcome> {
    config.budget.validate()?;
    if config.workers == 0 {
        return Err(TpadError::Config("at least one search worker is required".into()));
    }
    let store = run_dir.map(RunDir::open).transpose()?;
    let (mut state, mut history) = match store.as_ref().map(|d| d.resume(config)).transpose()? {
        Some(Some(found)) => found,
        _ => (
            SearchState {
                config: config.clone(),
                completed: 0,
                elapsed: 0.0,
                best: None,
                controller: (config.strategy == Strategy::Reinforce)
                    .then(|| Controller::new(config.controller.clone(), config.seed ^ 0x00c0_ffee)),
            },
            Vec::new(),
        ),
    };
    state.config = config.clone();
    let start = Instant::now();
    let base_elapsed = state.elapsed;
    let elapsed = move || base_elapsed + start.elapsed().as_secs_f64();

    let mut complete = |state: &mut SearchState,
                        history: &mut Vec<SearchRecord>,
                        seq: OperatorSequence,
                        eval: Evaluation|
     -> Result<()> {
        if !(0.0..=1.0).contains(&eval.reward) {
            return Err(TpadError::Contract(format!("reward {} outside [0, 1]", eval.reward)));
        }
        if let Some(c) = state.controller.as_mut() {
            c.observe(&seq, eval.reward);
        }
        let record = SearchRecord {
            index: state.completed,
            sequence: seq,
            reward: eval.reward,
            wall_time: elapsed(),
            strategy: config.strategy,
            controller_step: state.controller.as_ref().map_or(0, Controller::steps),
            baseline: state.controller.as_ref().and_then(Controller::baseline),
            diagnostic: eval.diagnostic,
        };
        log::info!(
            "candidate {} reward {:.4} [{}]{}",
            record.index,
            record.reward,
            record.sequence,
            record
                .diagnostic
                .as_deref()
                .map(|d| format!(" ({d})"))
                .unwrap_or_default()
        );
        let improved = state.best.as_ref().is_none_or(|b| record.reward > b.reward);
        if improved {
            state.best = Some(record.clone());
        }
        state.completed += 1;
        state.elapsed = record.wall_time;
        if let Some(dir) = &store {
            dir.persist(state, &record, improved)?;
        }
        observer(&record, state.controller.as_ref());
        history.push(record);
        Ok(())
    };

    let sample = |state: &SearchState, launch: usize| {
        let mut rng = candidate_rng(config.seed, launch);
        match &state.controller {
            Some(c) => c.sample_sequence(&mut rng).0,
            None => sample_uniform(&mut rng),
        }
    };

    if config.workers == 1 {
        while config.budget.allows(state.completed, elapsed()) {
            let launch = state.completed;
            let seq = sample(&state, launch);
            let eval = evaluator.evaluate(&seq, launch)?;
            complete(&mut state, &mut history, seq, eval)?;
        }
    } else {
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = mpsc::channel::<(OperatorSequence, Result<Evaluation>)>();
            let mut launched = state.completed;
            let mut in_flight = 0;
            loop {
                while in_flight < config.workers && config.budget.allows(launched, elapsed()) {
                    let seq = sample(&state, launched);
                    let tx = tx.clone();
                    let index = launched;
                    scope.spawn(move || {
                        let _ = tx.send((seq, evaluator.evaluate(&seq, index)));
                    });
                    launched += 1;
                    in_flight += 1;
                }
                if in_flight == 0 {
                    return Ok(());
                }
                let (seq, eval) = rx.recv().expect("a worker is in flight");
                in_flight -= 1;
                complete(&mut state, &mut history, seq, eval?)?;
            }
        })?;
    }

    let best = state
        .best
        .clone()
        .ok_or_else(|| TpadError::Config("search budget allowed no candidates".into()))?;
    Ok(SearchOutcome {
        best,
        history,
        controller: state.controller,
    })
}

/// Files of a search run: `history.jsonl`, `curve.csv`, `state.json`,
/// `best.json` and periodic `controller_NNNNNN.json` snapshots.
struct RunDir {
    root: PathBuf,
}

const CURVE_HEADER: &str = "index,wall_time,reward,best_reward";

impl RunDir {
    fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Load a previous state, truncating history and curve to the records it
    /// covers.
    fn resume(&self, config: &SearchConfig) -> Result<Option<(SearchState, Vec<SearchRecord>)>> {
        let state_path = self.path("state.json");
        if !state_path.exists() {
            for name in ["history.jsonl", "curve.csv"] {
                if self.path(name).exists() {
                    fs::remove_file(self.path(name))?;
                }
            }
            return Ok(None);
        }
        let state: SearchState = serde_json::from_str(&fs::read_to_string(&state_path)?)?;
        let old = &state.config;
        if old.strategy != config.strategy || old.seed != config.seed || old.controller != config.controller {
            return Err(TpadError::Config(format!(
                "run directory {} holds a different search (strategy {}, seed {})",
                self.root.display(),
                old.strategy,
                old.seed
            )));
        }
        let mut history = Vec::with_capacity(state.completed);
        for line in BufReader::new(File::open(self.path("history.jsonl"))?)
            .lines()
            .take(state.completed)
        {
            history.push(serde_json::from_str::<SearchRecord>(&line?)?);
        }
        if history.len() != state.completed {
            return Err(TpadError::Format(format!(
                "history holds {} records but the state expects {}",
                history.len(),
                state.completed
            )));
        }
        let mut text = String::new();
        for r in &history {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        fs::write(self.path("history.jsonl"), text)?;
        let mut curve = format!("{CURVE_HEADER}\n");
        let mut best = f64::NEG_INFINITY;
        for r in &history {
            best = best.max(r.reward);
            curve.push_str(&curve_line(r, best));
        }
        fs::write(self.path("curve.csv"), curve)?;
        log::info!("resuming search at candidate {}", state.completed);
        Ok(Some((state, history)))
    }

    fn persist(&self, state: &SearchState, record: &SearchRecord, improved: bool) -> Result<()> {
        let mut history = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path("history.jsonl"))?;
        writeln!(history, "{}", serde_json::to_string(record)?)?;
        history.flush()?;

        let curve_path = self.path("curve.csv");
        let fresh = !curve_path.exists();
        let mut curve = OpenOptions::new().create(true).append(true).open(curve_path)?;
        if fresh {
            writeln!(curve, "{CURVE_HEADER}")?;
        }
        let best = state.best.as_ref().map_or(record.reward, |b| b.reward);
        curve.write_all(curve_line(record, best).as_bytes())?;

        if improved {
            write_atomic(&self.path("best.json"), &serde_json::to_string_pretty(record)?)?;
        }
        if let Some(c) = &state.controller {
            if state.config.checkpoint_every > 0 && state.completed.is_multiple_of(state.config.checkpoint_every) {
                let name = format!("controller_{:06}.json", state.completed);
                write_atomic(&self.path(&name), &serde_json::to_string(c)?)?;
            }
        }
        write_atomic(&self.path("state.json"), &serde_json::to_string(state)?)
    }
}

fn curve_line(r: &SearchRecord, best: f64) -> String {
    format!("{},{:.6},{:.6},{:.6}\n", r.index, r.wall_time, r.reward, best)
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Read a run's history file.
pub fn load_history(run_dir: &Path) -> Result<Vec<SearchRecord>> {
    let file = File::open(run_dir.join("history.jsonl"))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Read a run's best record.
pub fn load_best(run_dir: &Path) -> Result<SearchRecord> {
    Ok(serde_json::from_str(&fs::read_to_string(run_dir.join("best.json"))?)?)
}
