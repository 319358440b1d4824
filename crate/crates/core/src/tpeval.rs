//! Evaluation: ROC AUC, displacement errors, the pedestrian × sample score
//! matrix, per-pedestrian top-ψ filtering and Best/Average/Worst aggregation.

use crate::error::{contract, Result, TpadError};
use crate::model::TadModel;
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Ψ predicted futures for one window, each `N×(2·t_pred)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Matrix>,
    pub source: String,
}

impl SampleSet {
    pub fn new(samples: Vec<Matrix>, source: impl Into<String>) -> Result<Self> {
        let set = Self {
            samples,
            source: source.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return Err(contract("sample set needs at least one sample"));
        };
        if first.cols() % 2 != 0 {
            return Err(contract("samples must hold (x, y) pairs"));
        }
        for (k, s) in self.samples.iter().enumerate() {
            if s.shape() != first.shape() {
                return Err(contract(format!(
                    "sample {k} has shape {:?}, expected {:?}",
                    s.shape(),
                    first.shape()
                )));
            }
            if !s.is_finite() {
                return Err(contract(format!("sample {k} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Ψ.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pedestrian count N.
    pub fn n(&self) -> usize {
        self.samples[0].rows()
    }

    pub fn t_pred(&self) -> usize {
        self.samples[0].cols() / 2
    }
}

/// Probability that a positive scores strictly below a negative, ties ½,
/// computed as the trapezoidal area under the ROC curve with negatives as the
/// detected (higher-score) class.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(contract("AUC needs at least one positive and one negative score"));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(contract("AUC scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, false))
        .chain(neg.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        while i < all.len() && all[i].0 == threshold {
            if all[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / nn, fp / np);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

fn check_pair(pred: &Matrix, gt: &Matrix) -> Result<()> {
    if pred.shape() != gt.shape() || !pred.cols().is_multiple_of(2) || pred.cols() == 0 {
        return Err(contract(format!(
            "prediction {:?} and ground truth {:?} must share an N×2T shape",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

fn frame_distance(pred: &Matrix, gt: &Matrix, p: usize, t: usize) -> f64 {
    let dx = pred.get(p, 2 * t) - gt.get(p, 2 * t);
    let dy = pred.get(p, 2 * t + 1) - gt.get(p, 2 * t + 1);
    dx.hypot(dy)
}

/// Mean Euclidean distance over frames, per pedestrian.
pub fn ade(pred: &Matrix, gt: &Matrix) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    let t = pred.cols() / 2;
    Ok((0..pred.rows())
        .map(|p| (0..t).map(|k| frame_distance(pred, gt, p, k)).sum::<f64>() / t as f64)
        .collect())
}

/// Euclidean distance at the final frame, per pedestrian.
pub fn fde(pred: &Matrix, gt: &Matrix) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    let t = pred.cols() / 2;
    Ok((0..pred.rows()).map(|p| frame_distance(pred, gt, p, t - 1)).collect())
}

/// `N×Ψ` anomaly scores: column `j` scores sample `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScoreMatrix {
    pub scores: Matrix,
}

impl AnomalyScoreMatrix {
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(contract("score matrix needs at least one column"));
        };
        let n = first.len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(contract("score columns differ in length"));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TpadError::NonFinite {
                component: "score".into(),
                step: 0,
            });
        }
        Ok(Self {
            scores: Matrix::from_fn(n, columns.len(), |i, j| columns[j][i]),
        })
    }

    pub fn n(&self) -> usize {
        self.scores.rows()
    }

    pub fn samples(&self) -> usize {
        self.scores.cols()
    }
}

/// Score every sample with an arbitrary per-pedestrian scorer.
pub fn score_matrix_with(
    samples: &SampleSet,
    mut scorer: impl FnMut(&Matrix) -> Result<Vec<f64>>,
) -> Result<AnomalyScoreMatrix> {
    samples.validate()?;
    let columns = samples.samples.iter().map(&mut scorer).collect::<Result<Vec<_>>>()?;
    AnomalyScoreMatrix::from_columns(&columns)
}

pub fn score_matrix(model: &TadModel, samples: &SampleSet, history: &Matrix) -> Result<AnomalyScoreMatrix> {
    score_matrix_with(samples, |s| model.score(s, history))
}

/// Per-pedestrian sample indices, lowest score first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<Vec<usize>>,
}

impl Selection {
    /// Every sample for every pedestrian.
    pub fn full(n: usize, samples: usize) -> Self {
        Self {
            indices: vec![(0..samples).collect(); n],
        }
    }

    pub fn psi(&self) -> usize {
        self.indices.first().map_or(0, Vec::len)
    }
}

/// The ψ lowest-scoring samples of each pedestrian; ties go to the lower index.
pub fn topk_filter(matrix: &AnomalyScoreMatrix, psi: usize) -> Result<Selection> {
    let big_psi = matrix.samples();
    if psi == 0 || psi > big_psi {
        return Err(TpadError::Config(format!(
            "top count ψ = {psi} must lie in 1..={big_psi}"
        )));
    }
    let indices = (0..matrix.n())
        .map(|p| {
            let row = matrix.scores.row(p);
            let mut order: Vec<usize> = (0..big_psi).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            order.truncate(psi);
            order
        })
        .collect();
    Ok(Selection { indices })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BestMode {
    /// Per-pedestrian minimum over that pedestrian's samples.
    #[default]
    Assembled,
    /// Minimum over assembled samples of the sample mean.
    WholeSample,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorstMode {
    /// Maximum over assembled samples of the sample mean.
    #[default]
    WholeSample,
    /// Per-pedestrian maximum over that pedestrian's samples.
    Assembled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub best: BestMode,
    pub worst: WorstMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub ade: f64,
    pub fde: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub best: MetricPair,
    pub average: MetricPair,
    pub worst: MetricPair,
}

/// Per-pedestrian ADE and FDE of one sample.
type AdeFde = (Vec<f64>, Vec<f64>);

/// Aggregate errors over `selection` (or every sample). A whole sample `k` is
/// assembled from each pedestrian's `k`-th selected index in ascending index
/// order, so the full selection reproduces the original samples.
pub fn aggregate(
    samples: &SampleSet,
    gt: &Matrix,
    selection: Option<&Selection>,
    options: AggregateOptions,
) -> Result<MetricReport> {
    samples.validate()?;
    let n = samples.n();
    if gt.shape() != samples.samples[0].shape() {
        return Err(contract(format!(
            "ground truth {:?} does not match samples {:?}",
            gt.shape(),
            samples.samples[0].shape()
        )));
    }
    let full = Selection::full(n, samples.len());
    let selection = selection.unwrap_or(&full);
    if selection.indices.len() != n {
        return Err(contract("selection row count differs from pedestrian count"));
    }
    let psi = selection.psi();
    if psi == 0 || selection.indices.iter().any(|r| r.len() != psi) {
        return Err(contract(
            "every pedestrian needs the same non-zero number of selected samples",
        ));
    }
    let errors: Vec<AdeFde> = samples
        .samples
        .iter()
        .map(|s| Ok((ade(s, gt)?, fde(s, gt)?)))
        .collect::<Result<_>>()?;
    let mut assembled: Vec<Vec<usize>> = Vec::with_capacity(n);
    for row in &selection.indices {
        let mut sorted = row.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.last().is_some_and(|&m| m >= samples.len()) {
            return Err(contract("selection indices must be distinct and below Ψ"));
        }
        assembled.push(sorted);
    }

    let metric = |pick: fn(&AdeFde) -> &Vec<f64>| {
        let per = |p: usize, k: usize| pick(&errors[assembled[p][k]])[p];
        let mean_over_peds = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() / n as f64;
        let sample_means: Vec<f64> = (0..psi).map(|k| mean_over_peds(&|p| per(p, k))).collect();
        let ped_min = mean_over_peds(&|p| (0..psi).map(|k| per(p, k)).fold(f64::INFINITY, f64::min));
        let ped_max = mean_over_peds(&|p| (0..psi).map(|k| per(p, k)).fold(f64::NEG_INFINITY, f64::max));
        let average = sample_means.iter().sum::<f64>() / psi as f64;
        let sample_min = sample_means.iter().copied().fold(f64::INFINITY, f64::min);
        let sample_max = sample_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best = match options.best {
            BestMode::Assembled => ped_min,
            BestMode::WholeSample => sample_min,
        };
        let worst = match options.worst {
            WorstMode::WholeSample => sample_max,
            WorstMode::Assembled => ped_max,
        };
        (best, average, worst)
    };
    let (ba, aa, wa) = metric(|e| &e.0);
    let (bf, af, wf) = metric(|e| &e.1);
    Ok(MetricReport {
        best: MetricPair { ade: ba, fde: bf },
        average: MetricPair { ade: aa, fde: af },
        worst: MetricPair { ade: wa, fde: wf },
    })
}

/// Reports over all samples and over the top-ψ of each pedestrian.
pub fn filtered_reports(
    samples: &SampleSet,
    gt: &Matrix,
    scores: &AnomalyScoreMatrix,
    psi: usize,
    options: AggregateOptions,
) -> Result<(MetricReport, MetricReport)> {
    if scores.n() != samples.n() || scores.samples() != samples.len() {
        return Err(contract("score matrix does not match the sample set"));
    }
    let selection = topk_filter(scores, psi)?;
    Ok((
        aggregate(samples, gt, None, options)?,
        aggregate(samples, gt, Some(&selection), options)?,
    ))
}

/// Pedestrian-weighted mean of several window reports.
pub fn mean_report(reports: &[(MetricReport, usize)]) -> MetricReport {
    let total: usize = reports.iter().map(|(_, n)| n).sum();
    let mut out = MetricReport::default();
    if total == 0 {
        return out;
    }
    let w = |n: usize| n as f64 / total as f64;
    for (r, n) in reports {
        for (dst, src) in [
            (&mut out.best, r.best),
            (&mut out.average, r.average),
            (&mut out.worst, r.worst),
        ] {
            dst.ade += w(*n) * src.ade;
            dst.fde += w(*n) * src.fde;
        }
    }
    out
}

/// A comma-separated table with labelled rows and named columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub row_header: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<(Vec<String>, Vec<String>)>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self
            .row_header
            .iter()
            .chain(&self.columns)
            .map(|s| csv_field(s))
            .collect();
        let _ = writeln!(out, "{}", header.join(","));
        for (labels, cells) in &self.rows {
            let line: Vec<String> = labels.iter().chain(cells).map(|s| csv_field(s)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// Look up a cell by row labels and column name.
    pub fn cell(&self, labels: &[&str], column: &str) -> Option<&str> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows
            .iter()
            .find(|(l, _)| l.iter().map(String::as_str).eq(labels.iter().copied()))
            .map(|(_, cells)| cells[j].as_str())
    }
}

pub fn format_pair(p: MetricPair) -> String {
    format!("{:.4} / {:.4}", p.ade, p.fde)
}

/// Method × scene AUC table with a trailing `Average` column.
pub fn auc_table(columns: &[String], rows: &[(String, Vec<f64>)]) -> ReportTable {
    let mut cols = columns.to_vec();
    cols.push("Average".into());
    ReportTable {
        row_header: vec!["Method".into()],
        columns: cols,
        rows: rows
            .iter()
            .map(|(name, values)| {
                let mut cells: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
                cells.push(format!(
                    "{:.4}",
                    values.iter().sum::<f64>() / values.len().max(1) as f64
                ));
                (vec![name.clone()], cells)
            })
            .collect(),
    }
}

type FullAndTop = (MetricReport, MetricReport);
type RowKind = (String, fn(&FullAndTop) -> MetricPair);

/// Unfiltered and filtered reports side by side: rows are
/// (model, metric kind), columns are scenes or parameter values; cells read
/// `ADE / FDE`.
pub fn metric_table(
    corner: &str,
    columns: &[String],
    models: &[(String, Vec<(MetricReport, MetricReport)>)],
    psi: usize,
) -> ReportTable {
    let mut rows = Vec::new();
    for (model, per_column) in models {
        let kinds: [RowKind; 5] = [
            ("Best".into(), |r| r.0.best),
            (format!("Best (TPAD Top-{psi})"), |r| r.1.best),
            ("Average".into(), |r| r.0.average),
            (format!("Average (TPAD Top-{psi})"), |r| r.1.average),
            ("Worst".into(), |r| r.0.worst),
        ];
        for (label, get) in kinds {
            rows.push((
                vec![model.clone(), label],
                per_column.iter().map(|r| format_pair(get(r))).collect(),
            ));
        }
    }
    ReportTable {
        row_header: vec![corner.into(), "Metric".into()],
        columns: columns.to_vec(),
        rows,
    }
}

/// Filtered reports only, one column per ψ.
pub fn psi_table(psis: &[usize], models: &[(String, Vec<MetricReport>)]) -> ReportTable {
    let mut rows = Vec::new();
    for (model, filtered) in models {
        rows.push((
            vec![model.clone(), "Best (TPAD Top-psi)".into()],
            filtered.iter().map(|r| format_pair(r.best)).collect(),
        ));
        rows.push((
            vec![model.clone(), "Average (TPAD Top-psi)".into()],
            filtered.iter().map(|r| format_pair(r.average)).collect(),
        ));
    }
    ReportTable {
        row_header: vec!["Model".into(), "Metric".into()],
        columns: psis.iter().map(|p| format!("psi={p}")).collect(),
        rows,
    }
}
