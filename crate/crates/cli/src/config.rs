//! Run configuration: one TOML file whose keys double as command-line flags.
//!
//! Resolution order is defaults, then the file given with `--config` (or the
//! run directory's `config.toml` snapshot when no file is given), then flags.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use tpad::data::ColumnOrder;
use tpad::model::ModelConfig;
use tpad::nn::AdamConfig;
use tpad::search::{Budget, ControllerConfig, SearchConfig, Strategy};
use tpad::tpeval::{AggregateOptions, BestMode, WorstMode};
use tpad::tpsim::{SamplerConfig, SamplerKind};

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr, )*) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        /// One optional flag per configuration key.
        #[derive(Clone, Debug, Default, clap::Args)]
        pub struct Overrides {
            $( $(#[doc = $doc])* #[arg(long, global = true)] pub $field: Option<$ty>, )*
        }

        impl Overrides {
            pub fn apply(&self, config: &mut RunConfig) {
                $( if let Some(v) = &self.$field { config.$field = v.clone(); } )*
            }
        }
    };
}

run_config! {
    /// Scene files, or directories whose `*.txt` files are scenes.
    dataset: Vec<PathBuf> = Vec::new(),
    /// Generated scene names, used when no dataset path is given.
    synthetic_scenes: Vec<String> = Vec::new(),
    /// Windows kept per generated scene.
    synthetic_windows: usize = 100,
    /// Field layout of scene files, e.g. "frame ped x y".
    column_order: String = "frame ped x y".into(),
    /// Scene reserved for testing.
    held_out: String = "eth".into(),
    t_obs: usize = 8,
    t_pred: usize = 12,
    /// Window start offset step, in frames.
    stride: usize = 1,
    /// Per-scene window cap; 0 keeps all.
    max_windows: usize = 0,
    /// Half-width of the uniform perturbation that makes negatives.
    noise_bound: f64 = 0.1,
    val_fraction: f64 = 0.2,
    /// "reinforce" or "random".
    strategy: String = "reinforce".into(),
    /// Candidates evaluated by a search.
    budget: usize = 20,
    /// Search wall-time limit in seconds; 0 disables it.
    wall_seconds: f64 = 0.0,
    workers: usize = 1,
    checkpoint_every: usize = 10,
    controller_embedding: usize = 100,
    controller_hidden: usize = 100,
    controller_lr: f64 = 3.5e-4,
    baseline_decay: f64 = 0.95,
    entropy_weight: f64 = 0.0,
    candidate_epochs: usize = 3,
    final_epochs: usize = 50,
    model_hidden: usize = 64,
    /// Samples per window (Ψ).
    samples: usize = 50,
    /// Samples kept per pedestrian (ψ).
    psi: usize = 10,
    /// "constant-velocity-gaussian" or "recurrent-gaussian".
    sampler: String = "constant-velocity-gaussian".into(),
    sigma: f64 = 0.3,
    sampler_hidden: usize = 32,
    sampler_epochs: usize = 10,
    sampler_lr: f64 = 1e-2,
    /// Directory of precomputed `window_NNNNN.tps` sample files; empty generates samples.
    samples_dir: PathBuf = PathBuf::new(),
    /// ψ values of the top-count sweep.
    psi_grid: Vec<usize> = vec![5, 10, 15, 20, 25],
    /// Ψ values of the sample-count sweep.
    samples_grid: Vec<usize> = vec![20, 50],
    /// "assembled" or "whole-sample".
    best_mode: String = "assembled".into(),
    /// "whole-sample" or "assembled".
    worst_mode: String = "whole-sample".into(),
    data_seed: u64 = 0,
    split_seed: u64 = 0,
    search_seed: u64 = 0,
    model_seed: u64 = 0,
    sampler_seed: u64 = 0,
    run_dir: PathBuf = PathBuf::from("runs/tpad"),
}

pub const SNAPSHOT: &str = "config.toml";

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut config = match file {
            Some(path) => Self::read(path)?,
            None => {
                let run_dir = overrides.run_dir.clone().unwrap_or_else(|| Self::default().run_dir);
                let snapshot = run_dir.join(SNAPSHOT);
                if snapshot.is_file() {
                    Self::read(&snapshot)?
                } else {
                    Self::default()
                }
            }
        };
        overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.t_obs < 2 || self.t_pred == 0 {
            return bad(format!("t-obs {} and t-pred {} are too short", self.t_obs, self.t_pred));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if !self.noise_bound.is_finite() || self.noise_bound <= 0.0 {
            return bad(format!("noise-bound {} must be positive", self.noise_bound));
        }
        if self.samples == 0 || self.psi == 0 {
            return bad("samples and psi must be positive".into());
        }
        if self.psi > self.samples {
            return bad(format!("psi {} exceeds samples {}", self.psi, self.samples));
        }
        self.column_order()?;
        self.strategy()?;
        self.sampler_kind()?;
        self.aggregate_options()?;
        self.search_config()?.budget.validate()?;
        Ok(())
    }

    pub fn column_order(&self) -> CliResult<ColumnOrder> {
        Ok(ColumnOrder::parse(&self.column_order)?)
    }

    pub fn strategy(&self) -> CliResult<Strategy> {
        Ok(self.strategy.parse()?)
    }

    pub fn sampler_kind(&self) -> CliResult<SamplerKind> {
        match self.sampler.as_str() {
            "constant-velocity-gaussian" | "cv" => Ok(SamplerKind::ConstantVelocityGaussian),
            "recurrent-gaussian" | "recurrent" => Ok(SamplerKind::RecurrentGaussian),
            other => Err(CliError::Config(format!("unknown sampler {other:?}"))),
        }
    }

    pub fn aggregate_options(&self) -> CliResult<AggregateOptions> {
        let best = match self.best_mode.as_str() {
            "assembled" => BestMode::Assembled,
            "whole-sample" => BestMode::WholeSample,
            other => return Err(CliError::Config(format!("unknown best-mode {other:?}"))),
        };
        let worst = match self.worst_mode.as_str() {
            "whole-sample" => WorstMode::WholeSample,
            "assembled" => WorstMode::Assembled,
            other => return Err(CliError::Config(format!("unknown worst-mode {other:?}"))),
        };
        Ok(AggregateOptions { best, worst })
    }

    /// The sweeps of the evaluation tables, checked against Ψ and ψ.
    pub fn grids(&self) -> CliResult<(Vec<usize>, Vec<usize>)> {
        if self.psi_grid.iter().any(|&p| p == 0 || p > self.samples) {
            return Err(CliError::Config(format!(
                "psi-grid {:?} must lie in 1..={}",
                self.psi_grid, self.samples
            )));
        }
        if self.samples_grid.iter().any(|&s| s < self.psi || s > self.samples) {
            return Err(CliError::Config(format!(
                "samples-grid {:?} must lie in {}..={}",
                self.samples_grid, self.psi, self.samples
            )));
        }
        Ok((self.psi_grid.clone(), self.samples_grid.clone()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.model_hidden,
            t_obs: self.t_obs,
            t_pred: self.t_pred,
            seed: self.model_seed,
            ..ModelConfig::default()
        }
    }

    pub fn search_config(&self) -> CliResult<SearchConfig> {
        Ok(SearchConfig {
            strategy: self.strategy()?,
            budget: Budget {
                candidates: Some(self.budget),
                wall_seconds: (self.wall_seconds > 0.0).then_some(self.wall_seconds),
            },
            seed: self.search_seed,
            controller: ControllerConfig {
                embedding: self.controller_embedding,
                hidden: self.controller_hidden,
                optimizer: AdamConfig::with_lr(self.controller_lr),
                baseline_decay: self.baseline_decay,
                entropy_weight: self.entropy_weight,
            },
            workers: self.workers,
            checkpoint_every: self.checkpoint_every,
        })
    }

    /// Sampler settings for test window `k`.
    pub fn sampler_config(&self, k: usize) -> CliResult<SamplerConfig> {
        Ok(SamplerConfig {
            kind: self.sampler_kind()?,
            samples: self.samples,
            sigma: self.sigma,
            t_pred: self.t_pred,
            seed: self.sampler_seed.wrapping_add(k as u64),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let back = RunConfig::from_toml(&config.to_toml().unwrap()).unwrap();
        assert_eq!(back, config);
        assert_eq!(RunConfig::from_toml("").unwrap(), config);
    }

    #[test]
    fn documented_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.t_obs, c.t_pred, c.samples, c.psi), (8, 12, 50, 10));
        assert_eq!((c.controller_embedding, c.controller_hidden), (100, 100));
        assert_eq!((c.candidate_epochs, c.final_epochs), (3, 50));
        assert_eq!(c.controller_lr, 3.5e-4);
        assert_eq!(c.noise_bound, 0.1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(CliError::Config(_))));
    }

    #[test]
    fn flags_override_the_file() {
        let mut c = RunConfig::from_toml("budget = 7\npsi = 4\n").unwrap();
        let o = Overrides {
            budget: Some(3),
            ..Overrides::default()
        };
        o.apply(&mut c);
        assert_eq!((c.budget, c.psi), (3, 4));
    }

    #[test]
    fn psi_above_samples_is_a_config_error() {
        let c = RunConfig {
            psi: 60,
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }
}
