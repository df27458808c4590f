//! Per-link contention-entry decision. Link `v` contends with weight
//! `z0(v) u(v)` only if that exceeds `z1(v) u_eta`; otherwise it withdraws.

use crate::error::{Error, Result};
use crate::graph::{ConflictGraph, VertexSet};
use crate::scheduler::{lgs_schedule, Schedule};

/// Per-vertex multipliers `[z0, z1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
}

impl Embeddings {
    /// `Z = [1, 1]`, which turns the sparsifier into plain quantile thresholding.
    pub fn ones(n: usize) -> Self {
        Self {
            z0: vec![1.0; n],
            z1: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.z0.len()
    }

    /// Row-major `n x 2` matrix.
    pub fn to_matrix(&self) -> Vec<f64> {
        self.z0.iter().zip(&self.z1).flat_map(|(&a, &b)| [a, b]).collect()
    }

    pub fn from_matrix(m: &[f64]) -> Self {
        Self {
            z0: m.iter().step_by(2).copied().collect(),
            z1: m.iter().skip(1).step_by(2).copied().collect(),
        }
    }
}

/// `h_v(u) = z0 u H(z0 u - z1 u_eta)` with `H(0) = 0`.
pub fn h_v(u: f64, z0: f64, z1: f64, u_eta: f64) -> f64 {
    let w = z0 * u;
    if w - z1 * u_eta > 0.0 {
        w
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct SparseResult {
    pub keep: VertexSet,
    pub removed: VertexSet,
    pub graph: ConflictGraph,
    /// Sparse-graph id to parent id.
    pub id_map: Vec<usize>,
    /// Contention weights of kept vertices, indexed by sparse-graph id.
    pub weights: Vec<f64>,
}

pub fn sparsify(g: &ConflictGraph, u: &[f64], z: &Embeddings, u_eta: f64) -> Result<SparseResult> {
    let n = g.n();
    if u.len() != n || z.n() != n || z.z1.len() != n {
        return Err(Error::param("utility and embedding lengths must match the graph"));
    }
    let h: Vec<f64> = (0..n).map(|v| h_v(u[v], z.z0[v], z.z1[v], u_eta)).collect();
    let keep = VertexSet::from_mask(h.iter().map(|&x| x > 0.0).collect());
    let removed = keep.complement();
    let (graph, id_map) = g.induced_subgraph(&keep);
    let weights = id_map.iter().map(|&v| h[v]).collect();
    Ok(SparseResult {
        keep,
        removed,
        graph,
        id_map,
        weights,
    })
}

pub fn statistical_baseline(g: &ConflictGraph, u: &[f64], u_eta: f64) -> Result<SparseResult> {
    sparsify(g, u, &Embeddings::ones(g.n()), u_eta)
}

/// Contention on the sparse graph only. The returned schedule uses parent ids;
/// its message count covers the kept links alone since withdrawn links stay
/// silent.
pub fn schedule_sparse(g: &ConflictGraph, sparse: &SparseResult) -> Result<Schedule> {
    let local = lgs_schedule(&sparse.graph, &sparse.weights)?;
    Ok(Schedule {
        selected: local.selected.lift(&sparse.id_map, g.n()),
        rounds: local.rounds,
        p2p_messages: local.p2p_messages,
        trace: local.trace,
    })
}

pub fn sparse_schedule(
    g: &ConflictGraph,
    u: &[f64],
    z: &Embeddings,
    u_eta: f64,
) -> Result<(Schedule, SparseResult)> {
    let sparse = sparsify(g, u, z, u_eta)?;
    let schedule = schedule_sparse(g, &sparse)?;
    Ok((schedule, sparse))
}
