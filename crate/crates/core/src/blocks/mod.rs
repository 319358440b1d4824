//! Architecture components of the trajectory anomaly-detection search space.
//!
//! A candidate model maps a (processed) future trajectory to features with two
//! extractor/enhancer branches, fuses them, and decodes a predicted history.
//! Auxiliary structures (memory bank, clustering head, subspace matrix,
//! discriminator) exist only to feed their loss terms.
//!
//! Per-frame features are a `Vec` of `N×H` matrices, one per future frame;
//! pooled features are a single `N×H` matrix.

use crate::autodiff::{Tape, Var};
use crate::error::{contract, Result};
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};

mod aux;
mod enhance;
mod extract;
mod output;

pub use aux::{
    cluster_assign, cluster_assign_var, discriminator_score, memory_query, memory_query_var, rsr_project,
    rsr_project_var, ClusterHead, Discriminator, MemoryBank, MemoryRead, RsrMatrix,
};
pub use enhance::FeatureEnhancer;
pub use extract::FeatureExtractor;
pub use output::{ffm_apply, fused_width, OutputModule};

pub const IPM_OPTIONS: usize = 3;
pub const FEXM_OPTIONS: usize = 5;
pub const FENM_OPTIONS: usize = 4;
pub const FFM_OPTIONS: usize = 2;
pub const OM_OPTIONS: usize = 4;

/// Width and variant of one architecture slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub hidden: usize,
    /// Zero-based index into the slot's option list.
    pub variant: usize,
}

impl BlockConfig {
    pub fn new(hidden: usize, variant: usize, options: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(contract("hidden width must be at least 1"));
        }
        if variant >= options {
            return Err(contract(format!(
                "variant {variant} out of range for a slot with {options} options"
            )));
        }
        Ok(Self { hidden, variant })
    }
}

#[derive(Clone, Debug)]
pub enum Features<'t> {
    Pooled(Var<'t>),
    PerFrame(Vec<Var<'t>>),
}

impl<'t> Features<'t> {
    pub fn keeps_time(&self) -> bool {
        matches!(self, Features::PerFrame(_))
    }

    pub fn rows(&self) -> usize {
        match self {
            Features::Pooled(v) => v.rows(),
            Features::PerFrame(fs) => fs[0].rows(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Features::Pooled(v) => v.cols(),
            Features::PerFrame(fs) => fs[0].cols(),
        }
    }

    /// Mean over frames; pooled features pass through.
    pub fn pool(&self) -> Var<'t> {
        match self {
            Features::Pooled(v) => *v,
            Features::PerFrame(fs) => {
                let mut acc = fs[0];
                for &f in &fs[1..] {
                    acc = acc + f;
                }
                acc.scale(1.0 / fs.len() as f64)
            }
        }
    }

    /// Apply a row-wise map to each frame (or to the pooled matrix).
    pub fn map(&self, mut f: impl FnMut(Var<'t>) -> Var<'t>) -> Features<'t> {
        match self {
            Features::Pooled(v) => Features::Pooled(f(*v)),
            Features::PerFrame(fs) => Features::PerFrame(fs.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn values(&self) -> Vec<Matrix> {
        match self {
            Features::Pooled(v) => vec![v.value()],
            Features::PerFrame(fs) => fs.iter().map(Var::value).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(Matrix::is_finite)
    }
}

/// Processed input placed on a tape.
pub struct BlockInput<'t> {
    /// `N×(T·C)` processed input.
    pub flat: Var<'t>,
    /// Frame `t` as an `N×C` matrix.
    pub frames: Vec<Var<'t>>,
    /// Absolute positions per frame (`N×2`), for distance-based adjacency.
    pub positions: Vec<Matrix>,
    pub channels: usize,
}

impl<'t> BlockInput<'t> {
    pub fn new(tape: &'t Tape, processed: &Matrix, channels: usize, positions: &Matrix) -> Self {
        let frames_n = processed.cols() / channels;
        let flat = tape.leaf(processed.clone());
        let frames = (0..frames_n).map(|t| flat.slice_cols(t * channels, channels)).collect();
        let positions = (0..positions.cols() / 2)
            .map(|t| positions.slice_cols(2 * t, 2))
            .collect();
        Self {
            flat,
            frames,
            positions,
            channels,
        }
    }

    pub fn n(&self) -> usize {
        self.flat.rows()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

/// Number of coordinate channels produced by an input-processing variant.
pub fn ipm_channels(variant: usize) -> usize {
    if variant == 2 {
        4
    } else {
        2
    }
}

/// Input processing. Variant 0 passes positions through, variant 1 returns
/// frame-to-frame displacements with the first anchored at `last_observed`,
/// variant 2 concatenates both per frame (`[x, y, dx, dy]`).
pub fn ipm_apply(variant: usize, future: &Matrix, last_observed: Option<&Matrix>) -> Result<Matrix> {
    if variant >= IPM_OPTIONS {
        return Err(contract(format!("IPM variant {variant} out of range")));
    }
    if !future.cols().is_multiple_of(2) {
        return Err(contract("future must hold (x, y) pairs"));
    }
    if variant == 0 {
        return Ok(future.clone());
    }
    let last = last_observed.ok_or_else(|| contract("relative-position input needs the last observed position"))?;
    if last.shape() != (future.rows(), 2) {
        return Err(contract(format!(
            "last observed shape {:?} does not match {} pedestrians",
            last.shape(),
            future.rows()
        )));
    }
    let t = future.cols() / 2;
    let disp = Matrix::from_fn(future.rows(), 2 * t, |p, j| {
        let prev = if j < 2 { last.get(p, j) } else { future.get(p, j - 2) };
        future.get(p, j) - prev
    });
    if variant == 1 {
        return Ok(disp);
    }
    Ok(Matrix::from_fn(future.rows(), 4 * t, |p, j| {
        let (frame, c) = (j / 4, j % 4);
        if c < 2 {
            future.get(p, 2 * frame + c)
        } else {
            disp.get(p, 2 * frame + c - 2)
        }
    }))
}

/// Constant `N×N` matrix with zeros on the diagonal.
pub(crate) fn off_diagonal(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

#[cfg(test)]
mod tests;
