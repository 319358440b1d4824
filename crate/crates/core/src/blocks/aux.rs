//! Auxiliary structures that exist only to serve loss terms: a memory bank,
//! a soft clustering head, a robust-subspace projection, and a discriminator.

use super::Features;
use crate::autodiff::{Tape, Var};
use crate::error::{contract, Result};
use crate::nn::{xavier, Bound, Linear, ParamId, ParamStore};
use crate::tensor::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

const COSINE_EPS: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemoryBank {
    pub items: ParamId,
    pub size: usize,
    pub width: usize,
}

impl MemoryBank {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        size: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if size < 2 {
            return Err(contract("memory bank needs at least two items"));
        }
        let items = store.add(format!("{name}.items"), Matrix::uniform(size, width, 1.0, rng));
        Ok(Self { items, size, width })
    }

    pub fn query<'t>(&self, p: &Bound<'t>, features: &Features<'t>) -> MemoryRead<'t> {
        memory_query_var(features, p[self.items])
    }
}

/// Result of reading the memory with every query of a feature map.
pub struct MemoryRead<'t> {
    /// Queries stacked as rows: one per pedestrian, or one per
    /// (frame, pedestrian) in frame-major order when time is kept.
    pub queries: Var<'t>,
    /// Pedestrian index of each query row.
    pub owners: Vec<usize>,
    pub nearest: Vec<usize>,
    pub second: Vec<usize>,
    /// Query plus the similarity-weighted read, in the input layout.
    pub retrieved: Features<'t>,
}

impl<'t> MemoryRead<'t> {
    pub fn nearest_items(&self, items: Var<'t>) -> Var<'t> {
        items.select_rows(&self.nearest)
    }

    pub fn second_items(&self, items: Var<'t>) -> Var<'t> {
        items.select_rows(&self.second)
    }
}

fn normalize_rows<'t>(x: Var<'t>) -> Var<'t> {
    x / x.row_norm().add_scalar(COSINE_EPS)
}

/// Indices of the largest and second-largest entries of each row; ties go to
/// the lower index.
fn top_two(sim: &Matrix) -> (Vec<usize>, Vec<usize>) {
    (0..sim.rows())
        .map(|i| {
            let mut order: Vec<usize> = (0..sim.cols()).collect();
            order.sort_by(|&a, &b| sim.get(i, b).total_cmp(&sim.get(i, a)).then(a.cmp(&b)));
            (order[0], order[1])
        })
        .unzip()
}

pub fn memory_query_var<'t>(features: &Features<'t>, items: Var<'t>) -> MemoryRead<'t> {
    let tape = items.tape();
    let n = features.rows();
    let (queries, frames) = match features {
        Features::Pooled(q) => (*q, 1),
        Features::PerFrame(fs) => (tape.concat_rows(fs), fs.len()),
    };
    let sim = normalize_rows(queries).matmul(normalize_rows(items).t());
    let (nearest, second) = sim.with_value(top_two);
    let read = sim.softmax_rows().matmul(items);
    let combined = queries + read;
    let retrieved = match features {
        Features::Pooled(_) => Features::Pooled(combined),
        Features::PerFrame(_) => Features::PerFrame((0..frames).map(|t| combined.slice_rows(t * n, n)).collect()),
    };
    MemoryRead {
        queries,
        owners: (0..n * frames).map(|k| k % n).collect(),
        nearest,
        second,
        retrieved,
    }
}

/// Matrix-level memory read: `(retrieved, nearest, second)` for `K×H` queries.
pub fn memory_query(queries: &Matrix, items: &Matrix) -> Result<(Matrix, Vec<usize>, Vec<usize>)> {
    if items.rows() < 2 {
        return Err(contract("memory bank needs at least two items"));
    }
    if queries.cols() != items.cols() {
        return Err(contract("query and item widths differ"));
    }
    let tape = Tape::new();
    let read = memory_query_var(&Features::Pooled(tape.leaf(queries.clone())), tape.leaf(items.clone()));
    let Features::Pooled(r) = read.retrieved else {
        unreachable!()
    };
    Ok((r.value(), read.nearest, read.second))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterHead {
    pub centers: ParamId,
    pub clusters: usize,
}

impl ClusterHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        clusters: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if clusters < 2 {
            return Err(contract("clustering head needs at least two centers"));
        }
        let centers = store.add(format!("{name}.centers"), Matrix::uniform(clusters, width, 1.0, rng));
        Ok(Self { centers, clusters })
    }

    pub fn assign<'t>(&self, p: &Bound<'t>, fused: Var<'t>) -> Var<'t> {
        cluster_assign_var(fused, p[self.centers])
    }
}

/// Student-t soft assignment `b_ic ∝ (1 + |h_i - μ_c|²)⁻¹`, rows summing to one.
pub fn cluster_assign_var<'t>(h: Var<'t>, centers: Var<'t>) -> Var<'t> {
    let hh = h.square().sum_rows();
    let cc = centers.square().sum_rows().t();
    let d2 = (hh + cc - h.matmul(centers.t()).scale(2.0)).clamp(0.0, f64::INFINITY);
    let kernel = d2.add_scalar(1.0);
    let ones = h.tape().leaf(Matrix::filled(1, 1, 1.0));
    let k = ones / kernel;
    k / k.sum_rows()
}

pub fn cluster_assign(h: &Matrix, centers: &Matrix) -> Result<Matrix> {
    if centers.rows() < 2 || h.cols() != centers.cols() {
        return Err(contract("cluster assignment needs ≥2 centers of matching width"));
    }
    let tape = Tape::new();
    Ok(cluster_assign_var(tape.leaf(h.clone()), tape.leaf(centers.clone())).value())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RsrMatrix {
    pub a: ParamId,
    pub dim: usize,
}

impl RsrMatrix {
    /// `dim` defaults to half the fused width, at least one.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, width: usize, rng: &mut R) -> Self {
        let dim = (width / 2).max(1);
        let a = store.add(format!("{name}.a"), xavier(dim, width, rng));
        Self { a, dim }
    }
}

/// `(H Aᵀ, H Aᵀ A)`.
pub fn rsr_project_var<'t>(h: Var<'t>, a: Var<'t>) -> (Var<'t>, Var<'t>) {
    let projected = h.matmul(a.t());
    (projected, projected.matmul(a))
}

pub fn rsr_project(h: &Matrix, a: &Matrix) -> Result<(Matrix, Matrix)> {
    if a.cols() != h.cols() || a.rows() > a.cols() {
        return Err(contract(format!(
            "subspace matrix {:?} incompatible with features of width {}",
            a.shape(),
            h.cols()
        )));
    }
    let tape = Tape::new();
    let (p, r) = rsr_project_var(tape.leaf(h.clone()), tape.leaf(a.clone()));
    Ok((p.value(), r.value()))
}

/// Scores (future, history) pairs per pedestrian as real (→1) or generated (→0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Discriminator {
    pub hidden: Linear,
    pub out: Linear,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, width: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, width, true, rng),
            out: Linear::new(store, &format!("{name}.out"), width, 1, true, rng),
        }
    }

    /// `(probability N×1, feature map N×width)`.
    pub fn score<'t>(&self, p: &Bound<'t>, future: Var<'t>, history: Var<'t>) -> (Var<'t>, Var<'t>) {
        let x = future.tape().concat_cols(&[future, history]);
        let features = self.hidden.forward(p, x).leaky_relu(0.2);
        (self.out.forward(p, features).sigmoid(), features)
    }
}

pub fn discriminator_score(
    disc: &Discriminator,
    store: &ParamStore,
    future: &Matrix,
    history: &Matrix,
) -> Result<(Vec<f64>, Matrix)> {
    if future.rows() != history.rows() || future.cols() + history.cols() != disc.hidden.fan_in {
        return Err(contract("discriminator input shapes do not match"));
    }
    let tape = Tape::new();
    let p = store.bind(&tape);
    let (prob, feat) = disc.score(&p, tape.leaf(future.clone()), tape.leaf(history.clone()));
    Ok((prob.value().into_vec(), feat.value()))
}
