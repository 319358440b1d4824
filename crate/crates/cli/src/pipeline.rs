//! The subcommands. Each reads its inputs from the run directory, writes its
//! outputs there, and never embeds timestamps in reports.

use crate::config::{RunConfig, SNAPSHOT};
use crate::error::{CliError, CliResult};
use crate::plot::{histogram, line_chart, Series};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use tpad::data::synthetic::synthetic_dataset;
use tpad::data::{
    encode_windows, leave_one_out_split, make_negatives, parse_raw_scene, window_scenes, DatasetSplit, NegativeWindow,
    TrajectoryWindow, T_OBS, T_PRED,
};
use tpad::model::{OperatorSequence, TadModel, TadSpec};
use tpad::search::{load_best, load_history, run_search_with, SearchRecord, TadEvaluator, CHANCE_REWARD};
use tpad::tpeval::{
    ade, auc, auc_table, filtered_reports, mean_report, metric_table, psi_table, score_matrix, score_matrix_with,
    topk_filter, AnomalyScoreMatrix, MetricReport, SampleSet,
};
use tpad::tpsim::{cv_gaussian_sample, load_samples, save_samples, RecurrentSampler, SamplerKind};
use tpad::Matrix;

const WINDOWS: &str = "data/windows.bin";
const SPLIT: &str = "data/split.json";
const MANIFEST: &str = "data/manifest.json";
const TEST_NEGATIVES: &str = "data/test_negatives.json";
const SEARCH: &str = "search";
const MODEL: &str = "model/model.json";

pub struct Run {
    pub config: RunConfig,
}

impl Run {
    pub fn new(config: RunConfig) -> Self {
        Self { config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.config.run_dir.join(rel)
    }

    fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    fn read(&self, rel: &str, hint: &str) -> CliResult<Vec<u8>> {
        let path = self.path(rel);
        fs::read(&path).map_err(|e| CliError::Data(format!("{}: {e} ({hint})", path.display())))
    }

    pub fn save_snapshot(&self) -> CliResult<()> {
        self.write(SNAPSHOT, self.config.to_toml()?)?;
        Ok(())
    }

    fn load_split(&self) -> CliResult<DatasetSplit> {
        let bytes = self.read(SPLIT, "run `tpad prepare` first")?;
        let manifest: Manifest = serde_json::from_slice(&self.read(MANIFEST, "run `tpad prepare` first")?)?;
        if manifest.checksums.get("split.json") != Some(&sha256_hex(&bytes)) {
            return Err(CliError::Data(format!(
                "{} does not match its manifest checksum; rerun `tpad prepare`",
                self.path(SPLIT).display()
            )));
        }
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn load_model(&self) -> CliResult<TadModel> {
        let path = self.path(MODEL);
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "{}: missing (run `tpad train-final` first)",
                path.display()
            )));
        }
        TadModel::load(&path).map_err(CliError::at(&path))
    }

    fn test_negatives(&self, split: &DatasetSplit) -> CliResult<Vec<NegativeWindow>> {
        if self.path(TEST_NEGATIVES).is_file() {
            Ok(serde_json::from_slice(&self.read(TEST_NEGATIVES, "")?)?)
        } else {
            Ok(make_negatives(
                &split.test,
                self.config.noise_bound,
                self.test_negative_seed(),
            )?)
        }
    }

    fn test_negative_seed(&self) -> u64 {
        self.config.split_seed.wrapping_add(2)
    }

    fn samples_path(&self, k: usize) -> PathBuf {
        let name = format!("window_{k:05}.tps");
        if self.config.samples_dir.as_os_str().is_empty() {
            self.path("samples").join(name)
        } else {
            self.config.samples_dir.join(name)
        }
    }

    fn window_samples(&self, k: usize) -> CliResult<SampleSet> {
        let path = self.samples_path(k);
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "{}: missing (run `tpad score` first)",
                path.display()
            )));
        }
        load_samples(&path).map_err(CliError::at(&path))
    }

    fn window_scores(&self, k: usize) -> CliResult<AnomalyScoreMatrix> {
        let rel = format!("scores/window_{k:05}.json");
        Ok(serde_json::from_slice(&self.read(&rel, "run `tpad score` first")?)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub source: String,
    pub sha256: Option<String>,
    pub windows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Counts {
    pub windows: usize,
    pub train: usize,
    pub val: usize,
    pub val_negatives: usize,
    pub test: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub held_out: String,
    pub t_obs: usize,
    pub t_pred: usize,
    pub stride: usize,
    pub max_windows: usize,
    pub noise_bound: f64,
    pub val_fraction: f64,
    pub data_seed: u64,
    pub split_seed: u64,
    pub scenes: Vec<SceneEntry>,
    pub counts: Counts,
    pub checksums: BTreeMap<String, String>,
}

fn scene_files(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Data(format!("{}: no .txt scene files", path.display())));
            }
            files.extend(found);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(CliError::Data(format!("{}: no such file or directory", path.display())));
        }
    }
    Ok(files)
}

pub fn prepare(run: &Run) -> CliResult<Manifest> {
    let cfg = &run.config;
    let order = cfg.column_order()?;
    let mut scenes: BTreeMap<String, Vec<TrajectoryWindow>> = BTreeMap::new();
    let mut entries = Vec::new();
    let cap = |mut ws: Vec<TrajectoryWindow>| {
        if cfg.max_windows > 0 {
            ws.truncate(cfg.max_windows);
        }
        ws
    };
    if !cfg.dataset.is_empty() {
        for file in scene_files(&cfg.dataset)? {
            let bytes = fs::read(&file).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
            let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
            let name = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let table = parse_raw_scene(text, &name, &order).map_err(CliError::at(&file))?;
            let windows = cap(window_scenes(&table, cfg.t_obs, cfg.t_pred, cfg.stride)?);
            entries.push(SceneEntry {
                name: name.clone(),
                source: file.display().to_string(),
                sha256: Some(sha256_hex(&bytes)),
                windows: windows.len(),
            });
            if scenes.insert(name.clone(), windows).is_some() {
                return Err(CliError::Config(format!("two scene files are named `{name}`")));
            }
        }
    } else if !cfg.synthetic_scenes.is_empty() {
        if (cfg.t_obs, cfg.t_pred) != (T_OBS, T_PRED) {
            return Err(CliError::Config(format!(
                "synthetic scenes are cut with t-obs {T_OBS} and t-pred {T_PRED}"
            )));
        }
        let names: Vec<&str> = cfg.synthetic_scenes.iter().map(String::as_str).collect();
        for (name, windows) in synthetic_dataset(&names, cfg.synthetic_windows, cfg.stride, cfg.data_seed)? {
            let windows = cap(windows);
            entries.push(SceneEntry {
                name: name.clone(),
                source: "synthetic".into(),
                sha256: None,
                windows: windows.len(),
            });
            scenes.insert(name, windows);
        }
    } else {
        return Err(CliError::Config("set `dataset` paths or `synthetic-scenes`".into()));
    }

    let split = leave_one_out_split(
        &scenes,
        &cfg.held_out,
        cfg.val_fraction,
        cfg.noise_bound,
        cfg.split_seed,
    )?;
    if split.test.is_empty() {
        return Err(CliError::Data(format!(
            "held-out scene `{}` yields no windows",
            cfg.held_out
        )));
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(CliError::Data("too few windows outside the held-out scene".into()));
    }
    let all: Vec<TrajectoryWindow> = scenes.values().flatten().cloned().collect();
    let cache = encode_windows(&all);
    let split_json = serde_json::to_vec(&split)?;
    run.write(WINDOWS, &cache)?;
    run.write(SPLIT, &split_json)?;
    let manifest = Manifest {
        held_out: cfg.held_out.clone(),
        t_obs: cfg.t_obs,
        t_pred: cfg.t_pred,
        stride: cfg.stride,
        max_windows: cfg.max_windows,
        noise_bound: cfg.noise_bound,
        val_fraction: cfg.val_fraction,
        data_seed: cfg.data_seed,
        split_seed: cfg.split_seed,
        scenes: entries,
        counts: Counts {
            windows: all.len(),
            train: split.train.len(),
            val: split.val.len(),
            val_negatives: split.val_neg.len(),
            test: split.test.len(),
        },
        checksums: BTreeMap::from([
            ("windows.bin".to_string(), sha256_hex(&cache)),
            ("split.json".to_string(), sha256_hex(&split_json)),
        ]),
    };
    run.write_json(MANIFEST, &manifest)?;
    println!(
        "prepared {} windows: {} train, {} val, {} test ({})",
        manifest.counts.windows, manifest.counts.train, manifest.counts.val, manifest.counts.test, cfg.held_out
    );
    Ok(manifest)
}

pub fn make_test_negatives(run: &Run) -> CliResult<()> {
    let split = run.load_split()?;
    let negatives = make_negatives(&split.test, run.config.noise_bound, run.test_negative_seed())?;
    let path = run.write_json(TEST_NEGATIVES, &negatives)?;
    println!("wrote {} negatives to {}", negatives.len(), path.display());
    Ok(())
}

fn curve_svg(history: &[SearchRecord]) -> String {
    let mut best = f64::NEG_INFINITY;
    let mut best_line = Vec::new();
    for r in history {
        best = best.max(r.reward);
        best_line.push((r.wall_time, best));
    }
    line_chart(
        "Search curve",
        "wall time (s)",
        "validation AUC",
        &[
            Series {
                label: "best so far",
                points: best_line,
                line: true,
            },
            Series {
                label: "candidate",
                points: history.iter().map(|r| (r.wall_time, r.reward)).collect(),
                line: false,
            },
        ],
    )
}

pub fn search(run: &Run) -> CliResult<SearchRecord> {
    let cfg = &run.config;
    let evaluator = TadEvaluator {
        split: run.load_split()?,
        epochs: cfg.candidate_epochs,
        model: cfg.model_config(),
    };
    let search = cfg.search_config()?;
    let dir = run.path(SEARCH);
    let outcome = run_search_with(&evaluator, &search, Some(&dir), |r, _| {
        info!("candidate {} reward {:.4} [{}]", r.index, r.reward, r.sequence);
    })?;
    let spec = TadSpec::decode(&outcome.best.sequence)?;
    run.write(
        "search/best_spec.txt",
        format!(
            "sequence   {}\nreward     {:.6}\n{}",
            outcome.best.sequence,
            outcome.best.reward,
            spec.describe()
        ),
    )?;
    run.write("plots/search_curve.svg", curve_svg(&outcome.history))?;
    println!(
        "{} search: {} candidates, best reward {:.4} at candidate {} [{}]",
        search.strategy,
        outcome.history.len(),
        outcome.best.reward,
        outcome.best.index,
        outcome.best.sequence
    );
    Ok(outcome.best)
}

fn pooled_auc(model: &TadModel, pos: &[TrajectoryWindow], neg: &[TrajectoryWindow]) -> CliResult<f64> {
    let mut p = Vec::new();
    for w in pos {
        p.extend(model.score_window(w)?);
    }
    let mut n = Vec::new();
    for w in neg {
        n.extend(model.score_window(w)?);
    }
    if p.iter().chain(&n).any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("non-finite anomaly score".into()));
    }
    Ok(auc(&p, &n)?)
}

fn validation_auc(model: &TadModel, split: &DatasetSplit) -> CliResult<f64> {
    let neg: Vec<TrajectoryWindow> = (0..split.val_neg.len()).map(|k| split.negative_window(k)).collect();
    pooled_auc(model, &split.val, &neg)
}

fn test_auc(model: &TadModel, split: &DatasetSplit, negatives: &[NegativeWindow]) -> CliResult<f64> {
    let neg: Vec<TrajectoryWindow> = negatives
        .iter()
        .map(|n| split.test[n.base].with_future(n.perturbed_future.clone()))
        .collect();
    pooled_auc(model, &split.test, &neg)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AucReport {
    pub sequence: OperatorSequence,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub validation_auc: f64,
    pub note: Option<String>,
}

pub fn train_final(run: &Run, explicit: Option<&[usize]>) -> CliResult<AucReport> {
    let cfg = &run.config;
    let sequence = match explicit {
        Some(values) => OperatorSequence::from_slice(values)?,
        None => {
            let dir = run.path(SEARCH);
            load_best(&dir)
                .map_err(|e| CliError::Data(format!("{}: {e} (run `tpad search` or pass --spec)", dir.display())))?
                .sequence
        }
    };
    let split = run.load_split()?;
    let spec = TadSpec::decode(&sequence)?;
    let mut model = TadModel::build(&spec, &cfg.model_config())?;
    let losses = model.train(&split.train, cfg.final_epochs)?;
    let path = run.path(MODEL);
    fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    model.save(&path).map_err(CliError::at(&path))?;

    let (validation_auc, note) = if spec.weights.scoring_is_empty() {
        (
            CHANCE_REWARD,
            Some("every scoring gate is zero; AUC is chance".to_string()),
        )
    } else {
        (validation_auc(&model, &split)?, None)
    };
    let report = AucReport {
        sequence,
        epochs: cfg.final_epochs,
        final_loss: losses.last().copied(),
        validation_auc,
        note,
    };
    let table = auc_table(
        std::slice::from_ref(&split.held_out_scene),
        &[("TPAD".into(), vec![report.validation_auc])],
    );
    run.write("reports/auc.csv", table.to_csv())?;
    run.write_json("reports/auc.json", &report)?;
    println!(
        "trained [{}] for {} epochs; validation AUC {:.4}",
        sequence, cfg.final_epochs, report.validation_auc
    );
    if let Some(note) = &report.note {
        warn!("{note}");
    }
    Ok(report)
}

pub fn score(run: &Run) -> CliResult<()> {
    let cfg = &run.config;
    let model = run.load_model()?;
    let split = run.load_split()?;
    let generate = cfg.samples_dir.as_os_str().is_empty();
    let recurrent = if generate && cfg.sampler_kind()? == SamplerKind::RecurrentGaussian {
        let mut sampler = RecurrentSampler::new(cfg.sampler_hidden, cfg.t_pred, cfg.sampler_seed);
        let losses = sampler.train(&split.train, cfg.sampler_epochs, cfg.sampler_lr)?;
        info!("recurrent sampler trained, final loss {:?}", losses.last());
        Some(sampler)
    } else {
        None
    };
    for (k, w) in split.test.iter().enumerate() {
        let samples = if generate {
            let sc = cfg.sampler_config(k)?;
            let set = match &recurrent {
                Some(sampler) => sampler.sample(&w.history, &sc)?,
                None => cv_gaussian_sample(&w.history, &sc)?,
            };
            let path = run.samples_path(k);
            fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
            save_samples(&path, &set).map_err(CliError::at(&path))?;
            set
        } else {
            run.window_samples(k)?
        };
        let scores = score_matrix(&model, &samples, &w.history)?;
        run.write_json(&format!("scores/window_{k:05}.json"), &scores)?;
    }
    println!("scored {} windows", split.test.len());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub pedestrians: usize,
    pub full: MetricReport,
    pub top: MetricReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FilterReport {
    pub psi: usize,
    pub samples: usize,
    pub oracle: bool,
    pub full: MetricReport,
    pub top: MetricReport,
    pub windows: Vec<WindowReport>,
}

fn check_psi(psi: usize, set: &SampleSet) -> CliResult<()> {
    if psi > set.len() {
        return Err(CliError::Config(format!(
            "psi {psi} exceeds the {} available samples",
            set.len()
        )));
    }
    Ok(())
}

pub fn filter(run: &Run, oracle: bool) -> CliResult<FilterReport> {
    let cfg = &run.config;
    let split = run.load_split()?;
    let options = cfg.aggregate_options()?;
    let mut windows = Vec::new();
    let mut selections = Vec::new();
    let mut big_psi = 0;
    for (k, w) in split.test.iter().enumerate() {
        let samples = run.window_samples(k)?;
        check_psi(cfg.psi, &samples)?;
        big_psi = samples.len();
        let scores = if oracle {
            score_matrix_with(&samples, |s| ade(s, &w.future))?
        } else {
            run.window_scores(k)?
        };
        selections.push(topk_filter(&scores, cfg.psi)?);
        let (full, top) = filtered_reports(&samples, &w.future, &scores, cfg.psi, options)?;
        windows.push(WindowReport {
            window: k,
            pedestrians: samples.n(),
            full,
            top,
        });
    }
    let weighted = |f: fn(&WindowReport) -> MetricReport| {
        mean_report(&windows.iter().map(|w| (f(w), w.pedestrians)).collect::<Vec<_>>())
    };
    let report = FilterReport {
        psi: cfg.psi,
        samples: big_psi,
        oracle,
        full: weighted(|w| w.full),
        top: weighted(|w| w.top),
        windows,
    };
    let label = if oracle { "Oracle" } else { "TPAD" };
    let table = metric_table(
        "Model",
        std::slice::from_ref(&split.held_out_scene),
        &[(label.into(), vec![(report.full, report.top)])],
        cfg.psi,
    );
    let stem = if oracle {
        "reports/filter_oracle"
    } else {
        "reports/filter"
    };
    run.write(&format!("{stem}.csv"), table.to_csv())?;
    run.write_json(&format!("{stem}.json"), &report)?;
    run.write_json(&format!("{stem}_selection.json"), &selections)?;
    print!("{}", table.to_csv());
    Ok(report)
}

fn prefix(
    samples: &SampleSet,
    scores: &AnomalyScoreMatrix,
    big_psi: usize,
) -> CliResult<(SampleSet, AnomalyScoreMatrix)> {
    let set = SampleSet::new(samples.samples[..big_psi].to_vec(), samples.source.clone())?;
    let m = &scores.scores;
    let scores = AnomalyScoreMatrix {
        scores: Matrix::from_fn(m.rows(), big_psi, |i, j| m.get(i, j)),
    };
    Ok((set, scores))
}

pub fn eval(run: &Run) -> CliResult<()> {
    let cfg = &run.config;
    let (psi_grid, samples_grid) = cfg.grids()?;
    let options = cfg.aggregate_options()?;
    let split = run.load_split()?;
    let model = run.load_model()?;
    let negatives = run.test_negatives(&split)?;
    let untrained = TadModel::build(model.spec(), &cfg.model_config())?;
    let scene = split.held_out_scene.clone();
    let test_auc = auc_table(
        std::slice::from_ref(&scene),
        &[
            ("TPAD".into(), vec![test_auc(&model, &split, &negatives)?]),
            ("Untrained".into(), vec![test_auc(&untrained, &split, &negatives)?]),
        ],
    );

    let mut data = Vec::new();
    for (k, w) in split.test.iter().enumerate() {
        let samples = run.window_samples(k)?;
        check_psi(cfg.psi, &samples)?;
        data.push((samples, run.window_scores(k)?, &w.future));
    }
    let available = data.iter().map(|(s, _, _)| s.len()).min().unwrap_or(0);
    if let Some(&s) = samples_grid.iter().chain(&psi_grid).find(|&&s| s > available) {
        return Err(CliError::Config(format!(
            "grid value {s} exceeds the {available} available samples"
        )));
    }
    let evaluate = |big_psi: usize, psi: usize| -> CliResult<(MetricReport, MetricReport)> {
        let mut full = Vec::new();
        let mut top = Vec::new();
        for (samples, scores, gt) in &data {
            let (set, sc) = prefix(samples, scores, big_psi)?;
            let (f, t) = filtered_reports(&set, gt, &sc, psi, options)?;
            full.push((f, set.n()));
            top.push((t, set.n()));
        }
        Ok((mean_report(&full), mean_report(&top)))
    };
    let main = evaluate(available.min(cfg.samples), cfg.psi)?;
    let filtering = metric_table(
        "Model",
        std::slice::from_ref(&scene),
        &[("TPAD".into(), vec![main])],
        cfg.psi,
    );
    let sample_sweep = metric_table(
        "Model",
        &samples_grid.iter().map(|p| format!("Psi={p}")).collect::<Vec<_>>(),
        &[(
            "TPAD".into(),
            samples_grid
                .iter()
                .map(|&p| evaluate(p, cfg.psi))
                .collect::<CliResult<Vec<_>>>()?,
        )],
        cfg.psi,
    );
    let psi_sweep = psi_table(
        &psi_grid,
        &[(
            "TPAD".into(),
            psi_grid
                .iter()
                .map(|&p| evaluate(available.min(cfg.samples), p).map(|r| r.1))
                .collect::<CliResult<Vec<_>>>()?,
        )],
    );
    for (name, table) in [
        ("test_auc", &test_auc),
        ("filtering", &filtering),
        ("sample_sweep", &sample_sweep),
        ("psi_sweep", &psi_sweep),
    ] {
        let path = run.write(&format!("reports/{name}.csv"), table.to_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn plot(run: &Run) -> CliResult<()> {
    let mut written = 0;
    let search_dir = run.path(SEARCH);
    if search_dir.join("history.jsonl").is_file() {
        let history = load_history(&search_dir).map_err(CliError::at(&search_dir))?;
        let path = run.write("plots/search_curve.svg", curve_svg(&history))?;
        println!("wrote {}", path.display());
        written += 1;
    }
    if run.path(MODEL).is_file() {
        let model = run.load_model()?;
        let split = run.load_split()?;
        let mut pos = Vec::new();
        for w in &split.val {
            pos.extend(model.score_window(w)?);
        }
        let mut neg = Vec::new();
        for k in 0..split.val_neg.len() {
            neg.extend(model.score_window(&split.negative_window(k))?);
        }
        let mut samples = Vec::new();
        for k in 0..split.test.len() {
            if let Ok(m) = run.window_scores(k) {
                samples.extend_from_slice(m.scores.data());
            }
        }
        let mut series: Vec<(&str, &[f64])> = vec![("validation", &pos), ("perturbed", &neg)];
        if !samples.is_empty() {
            series.push(("predicted samples", &samples));
        }
        let path = run.write(
            "plots/score_histogram.svg",
            histogram("Anomaly scores", "score", &series, 40),
        )?;
        println!("wrote {}", path.display());
        written += 1;
    }
    if written == 0 {
        return Err(CliError::Data(format!(
            "{}: nothing to plot (run `tpad search` or `tpad train-final` first)",
            run.config.run_dir.display()
        )));
    }
    Ok(())
}
