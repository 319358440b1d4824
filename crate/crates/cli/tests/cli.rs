use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;
use tpad::data::synthetic::{synthetic_scene, SceneConfig};
use tpad::tpeval::ade;
use tpad::tpsim::load_samples;

const BASE: &str = r#"
synthetic-scenes = ["alpha", "beta", "gamma"]
synthetic-windows = 20
stride = 4
held-out = "gamma"
model-hidden = 8
candidate-epochs = 1
final-epochs = 2
budget = 5
samples = 20
psi = 10
psi-grid = [5, 10]
samples-grid = [10, 20]
"#;

struct Fixture {
    dir: TempDir,
    config: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        Self::with(BASE)
    }

    fn with(toml: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("base.toml");
        let run_dir = dir.path().join("run");
        fs::write(
            &config,
            format!("{toml}\nrun-dir = {:?}\n", run_dir.display().to_string()),
        )
        .unwrap();
        Self { dir, config }
    }

    fn run_dir(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    fn tpad(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tpad"))
            .args(args)
            .arg("--config")
            .arg(&self.config)
            .env("RUST_LOG", "error")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.tpad(args);
        assert!(
            out.status.success(),
            "tpad {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.run_dir().join(rel)).unwrap()
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&self.read(rel)).unwrap()
    }

    fn history(&self) -> Vec<Value> {
        self.read("search/history.jsonl")
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn search_with_budget_five_writes_five_records() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    f.ok(&["search"]);
    let history = f.history();
    assert_eq!(history.len(), 5);
    assert!(history.iter().all(|r| r["strategy"] == "reinforce"));
    assert!(f.run_dir().join("search/best.json").is_file());
    assert!(f.read("plots/search_curve.svg").starts_with("<svg"));
}

#[test]
fn strategies_tag_their_histories() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    f.ok(&["search", "--budget", "2", "--strategy", "random"]);
    assert!(f.history().iter().all(|r| r["strategy"] == "random"));

    let g = Fixture::new();
    g.ok(&["prepare"]);
    g.ok(&["search", "--budget", "2", "--strategy", "reinforce"]);
    assert!(g.history().iter().all(|r| r["strategy"] == "reinforce"));
}

#[test]
fn interrupted_search_resumes_to_the_full_budget() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    f.ok(&["search", "--budget", "3"]);
    let first = f.history();
    assert_eq!(first.len(), 3);
    f.ok(&["search", "--budget", "5"]);
    let resumed = f.history();
    assert_eq!(resumed.len(), 5);
    for (a, b) in first.iter().zip(&resumed) {
        assert_eq!(a["sequence"], b["sequence"]);
        assert_eq!(a["reward"], b["reward"]);
    }

    let g = Fixture::new();
    g.ok(&["prepare"]);
    g.ok(&["search", "--budget", "5"]);
    let straight: Vec<Value> = g.history().iter().map(|r| r["sequence"].clone()).collect();
    assert_eq!(
        straight,
        resumed.iter().map(|r| r["sequence"].clone()).collect::<Vec<_>>()
    );
}

#[test]
fn search_refuses_a_mismatched_resume() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    f.ok(&["search", "--budget", "2"]);
    let out = f.tpad(&["search", "--budget", "3", "--search-seed", "9"]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn unknown_held_out_scene_is_a_config_error() {
    let f = Fixture::new();
    let out = f.tpad(&["prepare", "--held-out", "nowhere"]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn missing_dataset_file_names_the_path() {
    let f = Fixture::new();
    let out = f.tpad(&["prepare", "--dataset", "/no/such/scene.txt"]);
    assert_eq!(code(&out), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/scene.txt"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let f = Fixture::with("budget = \"many\"");
    assert_eq!(code(&f.tpad(&["prepare"])), Some(2));
    let g = Fixture::with("no-such-key = 1");
    assert_eq!(code(&g.tpad(&["prepare"])), Some(2));
}

#[test]
fn manifest_is_deterministic() {
    let a = Fixture::new();
    let b = Fixture::new();
    a.ok(&["prepare"]);
    b.ok(&["prepare"]);
    let (ma, mb) = (a.json("data/manifest.json"), b.json("data/manifest.json"));
    assert_eq!(ma["checksums"], mb["checksums"]);
    assert_eq!(ma["counts"], mb["counts"]);
    let before = a.read("data/manifest.json");
    a.ok(&["prepare"]);
    assert_eq!(a.read("data/manifest.json"), before);
    assert_eq!(ma["counts"]["test"], 20);
}

/// Windows of `span` consecutive frames in which at least one pedestrian is
/// present throughout, counted by direct enumeration.
fn count_windows(text: &str, span: usize, stride: usize) -> usize {
    let mut present: HashSet<(i64, i64)> = HashSet::new();
    let mut frames = BTreeSet::new();
    let mut peds = BTreeSet::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let fields: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let (frame, ped) = (fields[0] as i64, fields[1] as i64);
        present.insert((frame, ped));
        frames.insert(frame);
        peds.insert(ped);
    }
    let frames: Vec<i64> = frames.into_iter().collect();
    let step = frames.windows(2).map(|w| w[1] - w[0]).min().unwrap();
    let (first, last) = (frames[0], *frames.last().unwrap());
    let timeline = ((last - first) / step + 1) as usize;
    (0..=timeline - span)
        .step_by(stride)
        .filter(|&offset| {
            peds.iter()
                .any(|&p| (0..span).all(|k| present.contains(&(first + (offset + k) as i64 * step, p))))
        })
        .count()
}

#[test]
fn manifest_counts_match_direct_window_enumeration() {
    let f = Fixture::new();
    let scenes = f.dir.path().join("scenes");
    fs::create_dir_all(&scenes).unwrap();
    let mut expected = BTreeMap::new();
    for (k, name) in ["east", "north", "west"].iter().enumerate() {
        let text = synthetic_scene(name, &SceneConfig::default(), 40 + k as u64).to_text();
        expected.insert(name.to_string(), count_windows(&text, 20, 3));
        fs::write(scenes.join(format!("{name}.txt")), text).unwrap();
    }
    let scenes_arg = scenes.display().to_string();
    f.ok(&[
        "prepare",
        "--dataset",
        &scenes_arg,
        "--held-out",
        "north",
        "--stride",
        "3",
    ]);
    let manifest = f.json("data/manifest.json");
    let listed: BTreeMap<String, usize> = manifest["scenes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| {
            (
                s["name"].as_str().unwrap().to_string(),
                s["windows"].as_u64().unwrap() as usize,
            )
        })
        .collect();
    assert_eq!(listed, expected);
    assert_eq!(manifest["counts"]["test"].as_u64().unwrap() as usize, expected["north"]);
    assert!(manifest["scenes"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn explicit_first_option_spec_trains_and_reports_auc() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    let zeros = vec!["0"; 23].join(",");
    f.ok(&["train-final", "--spec", &zeros]);
    let report = f.json("reports/auc.json");
    let auc = report["validation_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["final_loss"].as_f64().unwrap().is_finite());
    assert!(report["note"].is_string());
    assert!(f.read("reports/auc.csv").starts_with("Method,gamma,Average"));
    assert!(f.run_dir().join("model/model.txt").is_file());
    assert_eq!(code(&f.tpad(&["score"])), Some(2));

    f.ok(&["train-final", "--spec", &scoring_spec()]);
    let report = f.json("reports/auc.json");
    let auc = report["validation_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["note"].is_null());
}

#[test]
fn searched_spec_feeds_train_final() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    f.ok(&["search", "--budget", "2"]);
    f.ok(&["train-final"]);
    let best = f.json("search/best.json");
    assert_eq!(f.json("reports/auc.json")["sequence"], best["sequence"]);
}

#[test]
fn invalid_spec_is_a_decode_error() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    let mut values = vec!["0"; 23];
    values[0] = "99";
    assert_eq!(code(&f.tpad(&["train-final", "--spec", &values.join(",")])), Some(2));
    assert_eq!(code(&f.tpad(&["train-final", "--spec", "0,0,0"])), Some(2));
}

/// First options everywhere except the output-error scoring gate.
fn scoring_spec() -> String {
    let mut values = vec!["0"; 23];
    values[15] = "1";
    values.join(",")
}

fn scored(extra: &[&str]) -> Fixture {
    let f = Fixture::new();
    f.ok(&[&["prepare"], extra].concat());
    f.ok(&[&["train-final", "--spec", &scoring_spec()], extra].concat());
    f.ok(&[&["score"], extra].concat());
    f
}

#[test]
fn filter_at_full_psi_changes_nothing() {
    let f = scored(&[]);
    f.ok(&["filter", "--psi", "20"]);
    let report = f.json("reports/filter.json");
    assert_eq!(report["full"], report["top"]);
    let csv = f.read("reports/filter.csv");
    assert!(csv.contains("TPAD,Average,"));
    assert!(csv.contains("TPAD,Average (TPAD Top-20),"));
}

#[test]
fn default_report_has_top_ten_rows() {
    let f = scored(&[]);
    let csv = f.ok(&["filter"]);
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(
        labels,
        [
            "Best",
            "Best (TPAD Top-10)",
            "Average",
            "Average (TPAD Top-10)",
            "Worst"
        ]
    );
}

#[test]
fn oracle_filter_average_is_the_mean_of_smallest_errors() {
    let f = scored(&[]);
    f.ok(&["filter", "--oracle"]);
    let report = f.json("reports/filter_oracle.json");
    let split: tpad::data::DatasetSplit = serde_json::from_str(&f.read("data/split.json")).unwrap();
    let (mut total, mut count) = (0.0, 0usize);
    for (k, w) in split.test.iter().enumerate() {
        let set = load_samples(&f.run_dir().join(format!("samples/window_{k:05}.tps"))).unwrap();
        let per_sample: Vec<Vec<f64>> = set.samples.iter().map(|s| ade(s, &w.future).unwrap()).collect();
        for p in 0..w.n() {
            let mut errs: Vec<f64> = per_sample.iter().map(|e| e[p]).collect();
            errs.sort_by(f64::total_cmp);
            total += errs[..10].iter().sum::<f64>() / 10.0;
            count += 1;
        }
    }
    let expected = total / count as f64;
    let got = report["top"]["average"]["ade"].as_f64().unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn psi_above_sample_count_is_a_config_error() {
    let f = scored(&[]);
    assert_eq!(code(&f.tpad(&["filter", "--psi", "30"])), Some(2));
    assert_eq!(code(&f.tpad(&["filter", "--psi", "30", "--samples", "50"])), Some(2));
}

#[test]
fn reports_are_byte_identical_on_rerun() {
    let f = scored(&[]);
    f.ok(&["filter"]);
    f.ok(&["eval"]);
    let snapshot = |f: &Fixture| {
        [
            "reports/filter.csv",
            "reports/filter.json",
            "reports/test_auc.csv",
            "reports/psi_sweep.csv",
            "reports/auc.json",
        ]
        .map(|p| f.read(p))
    };
    let before = snapshot(&f);
    f.ok(&["train-final", "--spec", &scoring_spec()]);
    f.ok(&["score"]);
    f.ok(&["filter"]);
    f.ok(&["eval"]);
    assert_eq!(snapshot(&f), before);
}

#[test]
fn eval_and_plot_emit_every_artifact() {
    let f = scored(&[]);
    f.ok(&["make-negatives"]);
    f.ok(&["eval"]);
    assert!(f
        .read("reports/test_auc.csv")
        .starts_with("Method,gamma,Average\nTPAD,"));
    assert_eq!(f.read("reports/filtering.csv").lines().count(), 6);
    assert!(f
        .read("reports/sample_sweep.csv")
        .starts_with("Model,Metric,Psi=10,Psi=20"));
    assert!(f.read("reports/psi_sweep.csv").starts_with("Model,Metric,psi=5,psi=10"));
    f.ok(&["plot"]);
    assert!(f.read("plots/score_histogram.svg").contains("<rect"));
    assert_eq!(
        f.json("data/test_negatives.json").as_array().unwrap().len(),
        f.json("data/manifest.json")["counts"]["test"].as_u64().unwrap() as usize
    );
}

#[test]
fn recurrent_sampler_feeds_the_filter() {
    let f = scored(&[
        "--sampler",
        "recurrent-gaussian",
        "--sampler-epochs",
        "1",
        "--sampler-hidden",
        "8",
    ]);
    let set = load_samples(&f.run_dir().join("samples/window_00000.tps")).unwrap();
    assert_eq!(set.len(), 20);
    f.ok(&["filter"]);
}

#[test]
fn external_samples_directory_is_used() {
    let f = scored(&[]);
    let external = f.dir.path().join("external");
    fs::create_dir_all(&external).unwrap();
    for entry in fs::read_dir(f.run_dir().join("samples")).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, external.join(p.file_name().unwrap())).unwrap();
    }
    fs::remove_dir_all(f.run_dir().join("samples")).unwrap();
    let ext = external.display().to_string();
    f.ok(&["score", "--samples-dir", &ext]);
    f.ok(&["filter", "--samples-dir", &ext]);
    assert!(!f.run_dir().join("samples").exists());
    let empty = f.dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(
        code(&f.tpad(&["filter", "--samples-dir", &empty.display().to_string()])),
        Some(3)
    );
}

#[test]
fn commands_need_their_inputs() {
    let f = Fixture::new();
    assert_eq!(code(&f.tpad(&["search"])), Some(3));
    f.ok(&["prepare"]);
    assert_eq!(code(&f.tpad(&["score"])), Some(3));
    assert_eq!(code(&f.tpad(&["plot"])), Some(3));
}

#[test]
fn snapshot_is_reused_without_a_config_file() {
    let f = Fixture::new();
    f.ok(&["prepare"]);
    let snapshot = f.read("config.toml");
    assert!(snapshot.contains("held-out = \"gamma\""));
    let out = Command::new(env!("CARGO_BIN_EXE_tpad"))
        .args(["search", "--budget", "1", "--run-dir"])
        .arg(f.run_dir())
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(f.history().len(), 1);
    let _: &Path = f.config.as_path();
}
