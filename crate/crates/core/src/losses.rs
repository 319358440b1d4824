//! The eight per-pedestrian loss components, their Λ-weighted training
//! objective and the Γ-weighted anomaly score.
//!
//! Each component has a tape version (`*_var`, returning an `N×1` column) used
//! during training and a plain-matrix wrapper used for scoring and tests.

use crate::autodiff::{Tape, Var};
use crate::error::{contract, Result, TpadError};
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const COMPONENTS: usize = 8;

/// Probability clamp for the adversarial term.
pub const ADV_EPS: f64 = 1e-6;

/// Permitted λ values for the output term.
pub const LAMBDA_OUT_CHOICES: [f64; 3] = [0.1, 0.01, 1.0];
/// Permitted λ values for every other term; zero disables the term.
pub const LAMBDA_CHOICES: [f64; 4] = [0.0, 0.1, 0.01, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Out,
    Adv,
    Fea,
    Com,
    Sep,
    Clu,
    Rsr1,
    Rsr2,
}

impl Component {
    pub const ALL: [Component; COMPONENTS] = [
        Component::Out,
        Component::Adv,
        Component::Fea,
        Component::Com,
        Component::Sep,
        Component::Clu,
        Component::Rsr1,
        Component::Rsr2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Out => "out",
            Component::Adv => "adv",
            Component::Fea => "fea",
            Component::Com => "com",
            Component::Sep => "sep",
            Component::Clu => "clu",
            Component::Rsr1 => "rsr1",
            Component::Rsr2 => "rsr2",
        }
    }

    /// Components that can never be negative.
    pub fn nonnegative(self) -> bool {
        !matches!(self, Component::Adv | Component::Sep)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the separateness term treats the nearest/second-nearest gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SepForm {
    Hinged {
        margin: f64,
    },
    /// `‖q − p_p‖ − ‖q − p_n‖` without a floor.
    Raw,
}

impl Default for SepForm {
    fn default() -> Self {
        SepForm::Hinged { margin: 1.0 }
    }
}

/// Components in rows, pedestrians in columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    values: Matrix,
}

impl LossVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: Matrix::zeros(COMPONENTS, n),
        }
    }

    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.rows() != COMPONENTS {
            return Err(contract(format!(
                "loss vector needs {COMPONENTS} rows, got {}",
                values.rows()
            )));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, c: Component) -> &[f64] {
        self.values.row(c.index())
    }

    pub fn set(&mut self, c: Component, values: &[f64]) -> Result<()> {
        if values.len() != self.n() {
            return Err(contract(format!(
                "component {c} has {} values for {} pedestrians",
                values.len(),
                self.n()
            )));
        }
        self.values.row_mut(c.index()).copy_from_slice(values);
        Ok(())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.is_finite()
    }

    /// First component holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<Component> {
        Component::ALL
            .into_iter()
            .find(|c| self.get(*c).iter().any(|v| !v.is_finite()))
    }
}

/// Λ weights the training objective, Γ the anomaly score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVectors {
    pub lambda: [f64; COMPONENTS],
    pub gamma: [f64; COMPONENTS],
}

impl WeightVectors {
    pub fn validate(&self) -> Result<()> {
        if !LAMBDA_OUT_CHOICES.contains(&self.lambda[0]) {
            return Err(TpadError::Config(format!(
                "lambda_out must be one of {LAMBDA_OUT_CHOICES:?}, got {}",
                self.lambda[0]
            )));
        }
        for (c, (&l, &g)) in Component::ALL.iter().zip(self.lambda.iter().zip(&self.gamma)) {
            if !LAMBDA_CHOICES.contains(&l) {
                return Err(TpadError::Config(format!("lambda_{c} = {l} is not a permitted value")));
            }
            if g != 0.0 && g != l {
                return Err(TpadError::Config(format!(
                    "gamma_{c} = {g} must be 0 or lambda_{c} = {l}"
                )));
            }
        }
        Ok(())
    }

    /// A component must be computed if it enters either the objective or the score.
    pub fn needs(&self, c: Component) -> bool {
        self.lambda[c.index()] != 0.0 || self.gamma[c.index()] != 0.0
    }

    pub fn scoring_is_empty(&self) -> bool {
        self.gamma.iter().all(|&g| g == 0.0)
    }
}

/// Sums per-query values into per-pedestrian totals.
fn scatter_to_owners<'t>(values: Var<'t>, owners: &[usize], n: usize) -> Var<'t> {
    let s = Matrix::from_fn(n, owners.len(), |p, k| if owners[k] == p { 1.0 } else { 0.0 });
    values.tape().leaf(s).matmul(values)
}

/// Euclidean norm of each pedestrian's flattened residual.
pub fn loss_out_var<'t>(history: Var<'t>, predicted: Var<'t>) -> Var<'t> {
    (history - predicted).row_norm()
}

/// Non-saturating generator term `−log D(I, O′)`.
pub fn loss_adv_var(prob_fake: Var<'_>) -> Var<'_> {
    -prob_fake.clamp(ADV_EPS, 1.0 - ADV_EPS).ln()
}

pub fn loss_fea_var<'t>(feat_true: Var<'t>, feat_pred: Var<'t>) -> Var<'t> {
    (feat_true - feat_pred).row_norm()
}

/// `(L_com, L_sep)` per pedestrian from stacked queries and their nearest and
/// second-nearest memory items.
pub fn loss_memory_var<'t>(
    queries: Var<'t>,
    nearest: Var<'t>,
    second: Var<'t>,
    owners: &[usize],
    n: usize,
    form: SepForm,
) -> (Var<'t>, Var<'t>) {
    let to_nearest = queries - nearest;
    let compact = to_nearest.square().sum_rows();
    let gap = to_nearest.row_norm() - (queries - second).row_norm();
    let sep = match form {
        SepForm::Hinged { margin } => gap.add_scalar(margin).relu(),
        SepForm::Raw => gap,
    };
    (scatter_to_owners(compact, owners, n), scatter_to_owners(sep, owners, n))
}

/// Sharpened target `d_ic ∝ b_ic² / Σ_i b_ic`, rows renormalized.
pub fn cluster_target_var(b: Var<'_>) -> Var<'_> {
    let w = b.square() / b.sum_cols();
    w / w.sum_rows()
}

/// `Σ_c b_c log(b_c / d_c)` per pedestrian, with `0·log 0 = 0`.
pub fn loss_cluster_var(b: Var<'_>) -> Var<'_> {
    let tiny = f64::MIN_POSITIVE;
    let d = cluster_target_var(b);
    (b * (b.clamp(tiny, f64::INFINITY).ln() - d.clamp(tiny, f64::INFINITY).ln())).sum_rows()
}

/// `(‖h − AᵀA h‖², ‖AAᵀ − I‖_F²)`, the second repeated for every pedestrian.
pub fn loss_rsr_var<'t>(h: Var<'t>, a: Var<'t>) -> (Var<'t>, Var<'t>) {
    let tape = h.tape();
    let recon = h.matmul(a.t()).matmul(a);
    let residual = (h - recon).square().sum_rows();
    let d = a.rows();
    let structural = (a.matmul(a.t()) - tape.leaf(Matrix::identity(d))).square().sum();
    let ones = tape.leaf(Matrix::filled(h.rows(), 1, 1.0));
    (residual, ones * structural)
}

/// Mean over pedestrians of the λ-weighted component sum. Components with
/// zero weight are never touched and may be `None`.
pub fn training_loss_var<'t>(
    components: &[Option<Var<'t>>; COMPONENTS],
    lambda: &[f64; COMPONENTS],
) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for (c, &l) in Component::ALL.iter().zip(lambda) {
        if l == 0.0 {
            continue;
        }
        let term = components[c.index()]
            .ok_or_else(|| contract(format!("component {c} has weight {l} but was not computed")))?
            .scale(l);
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    Ok(total
        .ok_or_else(|| contract("training loss has no active component"))?
        .mean())
}

fn check_same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(contract(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn loss_out(history: &Matrix, predicted: &Matrix) -> Result<Vec<f64>> {
    check_same_shape(history, predicted, "output loss")?;
    let tape = Tape::new();
    Ok(loss_out_var(tape.leaf(history.clone()), tape.leaf(predicted.clone()))
        .value()
        .into_vec())
}

pub fn loss_adv(prob_fake: &[f64]) -> Vec<f64> {
    prob_fake
        .iter()
        .map(|p| -p.clamp(ADV_EPS, 1.0 - ADV_EPS).ln())
        .collect()
}

pub fn loss_fea(feat_true: &Matrix, feat_pred: &Matrix) -> Result<Vec<f64>> {
    check_same_shape(feat_true, feat_pred, "feature loss")?;
    let tape = Tape::new();
    Ok(loss_fea_var(tape.leaf(feat_true.clone()), tape.leaf(feat_pred.clone()))
        .value()
        .into_vec())
}

/// Matrix form of [`loss_memory_var`]; `items` is the whole bank so the
/// two-item requirement can be checked.
pub fn loss_memory(
    queries: &Matrix,
    items: &Matrix,
    nearest: &[usize],
    second: &[usize],
    owners: &[usize],
    n: usize,
    form: SepForm,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if items.rows() < 2 {
        return Err(contract("memory losses need at least two items"));
    }
    let k = queries.rows();
    if nearest.len() != k || second.len() != k || owners.len() != k {
        return Err(contract("one nearest, second and owner index is needed per query"));
    }
    if owners.iter().any(|&o| o >= n) || nearest.iter().chain(second).any(|&m| m >= items.rows()) {
        return Err(contract("memory index out of range"));
    }
    let tape = Tape::new();
    let it = tape.leaf(items.clone());
    let (com, sep) = loss_memory_var(
        tape.leaf(queries.clone()),
        it.select_rows(nearest),
        it.select_rows(second),
        owners,
        n,
        form,
    );
    Ok((com.value().into_vec(), sep.value().into_vec()))
}

pub fn loss_cluster(b: &Matrix) -> Vec<f64> {
    let tape = Tape::new();
    loss_cluster_var(tape.leaf(b.clone())).value().into_vec()
}

pub fn loss_rsr(h: &Matrix, a: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.cols() != h.cols() {
        return Err(contract("subspace matrix width differs from the fused features"));
    }
    let tape = Tape::new();
    let (r1, r2) = loss_rsr_var(tape.leaf(h.clone()), tape.leaf(a.clone()));
    Ok((r1.value().into_vec(), r2.value().into_vec()))
}

/// Mean over pedestrians of `Σ_j λ_j L_j`, skipping zero weights.
pub fn training_loss(losses: &LossVector, lambda: &[f64; COMPONENTS]) -> f64 {
    let n = losses.n();
    let mut total = vec![0.0; n];
    for c in Component::ALL {
        let l = lambda[c.index()];
        if l == 0.0 {
            continue;
        }
        for (t, v) in total.iter_mut().zip(losses.get(c)) {
            *t += l * v;
        }
    }
    total.iter().sum::<f64>() / n as f64
}

/// Per-pedestrian `Σ_j γ_j L_j`; higher is more anomalous.
pub fn anomaly_score(losses: &LossVector, gamma: &[f64; COMPONENTS]) -> Result<Vec<f64>> {
    if gamma.iter().all(|&g| g == 0.0) {
        return Err(TpadError::Config("every scoring weight is zero".into()));
    }
    let mut score = vec![0.0; losses.n()];
    for c in Component::ALL {
        let g = gamma[c.index()];
        if g == 0.0 {
            continue;
        }
        for (s, v) in score.iter_mut().zip(losses.get(c)) {
            *s += g * v;
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests;
