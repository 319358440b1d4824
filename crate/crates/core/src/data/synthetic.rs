//! Smooth synthetic pedestrian scenes in ETH-style frame numbering.
//!
//! Each pedestrian walks with a slowly varying speed and heading, so the
//! history of a clean window is well determined by its future.

use super::{window_scenes, Observation, RawTrackTable, TrajectoryWindow, T_OBS, T_PRED};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub pedestrians: usize,
    pub frames: usize,
    /// Gap between consecutive frame ids (ETH/UCY files use 10).
    pub frame_step: i64,
    pub min_lifetime: usize,
    pub max_lifetime: usize,
    /// Metres per frame.
    pub speed: (f64, f64),
    /// Radians per frame.
    pub max_turn_rate: f64,
    pub area: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            pedestrians: 40,
            frames: 400,
            frame_step: 10,
            min_lifetime: 24,
            max_lifetime: 48,
            speed: (0.25, 0.55),
            max_turn_rate: 0.04,
            area: 8.0,
        }
    }
}

pub fn synthetic_scene(name: &str, cfg: &SceneConfig, seed: u64) -> RawTrackTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for ped in 0..cfg.pedestrians {
        let life = rng.random_range(cfg.min_lifetime..=cfg.max_lifetime).min(cfg.frames);
        let start = rng.random_range(0..=cfg.frames - life);
        let mut x = rng.random_range(-cfg.area..cfg.area);
        let mut y = rng.random_range(-cfg.area..cfg.area);
        let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
        let mut speed = rng.random_range(cfg.speed.0..cfg.speed.1);
        let turn = rng.random_range(-cfg.max_turn_rate..=cfg.max_turn_rate);
        let accel = rng.random_range(-0.004..=0.004);
        for k in 0..life {
            rows.push(Observation {
                frame: (start + k) as i64 * cfg.frame_step,
                ped: ped as i64 + 1,
                x,
                y,
            });
            x += speed * heading.cos();
            y += speed * heading.sin();
            heading += turn;
            speed = (speed + accel).clamp(0.1, 0.8);
        }
    }
    rows.sort_by_key(|o| (o.frame, o.ped));
    RawTrackTable {
        scene: name.to_string(),
        rows,
    }
}

/// `windows_per_scene` windows for each named scene, cut with `stride`.
pub fn synthetic_dataset(
    scenes: &[&str],
    windows_per_scene: usize,
    stride: usize,
    seed: u64,
) -> Result<BTreeMap<String, Vec<TrajectoryWindow>>> {
    let mut out = BTreeMap::new();
    for (k, name) in scenes.iter().enumerate() {
        let mut cfg = SceneConfig::default();
        loop {
            let table = synthetic_scene(name, &cfg, seed.wrapping_mul(1000).wrapping_add(k as u64));
            let mut windows = window_scenes(&table, T_OBS, T_PRED, stride)?;
            if windows.len() >= windows_per_scene {
                windows.truncate(windows_per_scene);
                out.insert(name.to_string(), windows);
                break;
            }
            cfg.frames *= 2;
            cfg.pedestrians *= 2;
        }
    }
    Ok(out)
}
