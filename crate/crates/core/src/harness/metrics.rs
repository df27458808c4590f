//! Approximation and retention ratios of a sparse scheduler against vanilla
//! LGS on the same input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ConflictGraph;
use crate::scheduler::Schedule;
use crate::sparsifier::SparseResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub ar_utility: f64,
    pub rr_vertices: f64,
    pub rr_avg_degree: f64,
    pub rr_messages: f64,
}

/// `num / den` with `0 / 0 -> zero_zero`.
pub fn ratio(num: f64, den: f64, zero_zero: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            zero_zero
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Utility is always measured with the original `u`.
pub fn metrics(
    g: &ConflictGraph,
    u: &[f64],
    vanilla: &Schedule,
    sparse_schedule: &Schedule,
    sparse: &SparseResult,
) -> Result<Ratios> {
    let n = g.n();
    if u.len() != n
        || vanilla.selected.universe() != n
        || sparse_schedule.selected.universe() != n
        || sparse.keep.universe() != n
    {
        return Err(Error::Contract("sparse and vanilla runs must share the same graph".into()));
    }
    let r = Ratios {
        ar_utility: ratio(sparse_schedule.selected.total(u), vanilla.selected.total(u), 1.0),
        rr_vertices: sparse.keep.len() as f64 / n.max(1) as f64,
        rr_avg_degree: ratio(sparse.graph.avg_degree(), g.avg_degree(), 0.0),
        rr_messages: ratio(
            sparse_schedule.p2p_messages as f64,
            vanilla.p2p_messages as f64,
            0.0,
        ),
    };
    if !(r.ar_utility.is_finite() && r.rr_avg_degree.is_finite() && r.rr_messages.is_finite()) {
        return Err(Error::Contract(format!("non-finite ratio {r:?}")));
    }
    Ok(r)
}
