//! Local greedy solver (LGS): the distributed contention process that turns a
//! weighted conflict graph into a schedule, with point-to-point message
//! accounting.
//!
//! Each synchronous round, every undecided contender (weight > 0) exchanges
//! its weight with its undecided contending neighbors. A contender whose
//! `(weight, -id)` key beats all of those neighbors joins the schedule, and
//! its undecided neighbors drop out. Joiners and dropouts notify their
//! undecided contending neighbors. The selected set equals the sequential
//! greedy that repeatedly takes the heaviest remaining vertex (lowest id on
//! ties) and deletes its neighborhood.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ConflictGraph, VertexSet};

/// What happened in one contention round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub joined: Vec<usize>,
    pub excluded: Vec<usize>,
    /// Weight exchanges: two per edge between undecided contenders.
    pub weight_messages: u64,
    /// One per (deciding vertex, undecided contending neighbor) pair.
    pub notifications: u64,
}

impl RoundTrace {
    pub fn messages(&self) -> u64 {
        self.weight_messages + self.notifications
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub selected: VertexSet,
    pub rounds: usize,
    pub p2p_messages: u64,
    pub trace: Vec<RoundTrace>,
}

impl Schedule {
    pub fn empty(n: usize) -> Self {
        Self {
            selected: VertexSet::empty(n),
            rounds: 0,
            p2p_messages: 0,
            trace: Vec::new(),
        }
    }

    /// JSON lines, one per round.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&serde_json::to_string(r).expect("trace serialization is infallible"));
            out.push('\n');
        }
        out
    }
}

/// Total point-to-point messages over a round trace.
pub fn count_messages(trace: &[RoundTrace]) -> u64 {
    trace.iter().map(RoundTrace::messages).sum()
}

#[inline]
fn beats(w: &[f64], a: usize, b: usize) -> bool {
    w[a] > w[b] || (w[a] == w[b] && a < b)
}

pub fn lgs_schedule(g: &ConflictGraph, w: &[f64]) -> Result<Schedule> {
    let n = g.n();
    if w.len() != n {
        return Err(Error::param(format!("weight vector has length {}, expected {n}", w.len())));
    }
    if w.iter().any(|x| x.is_nan()) {
        return Err(Error::param("NaN weight"));
    }

    let mut undecided: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    let mut active: Vec<usize> = (0..n).filter(|&v| undecided[v]).collect();
    let mut selected = vec![false; n];
    let mut trace = Vec::new();
    let mut dropped = vec![false; n];

    while !active.is_empty() {
        let mut weight_messages = 0u64;
        let mut joined = Vec::new();
        for &v in &active {
            let mut local_max = true;
            for &u in g.neighbors(v) {
                if undecided[u] {
                    weight_messages += 1;
                    if beats(w, u, v) {
                        local_max = false;
                    }
                }
            }
            if local_max {
                joined.push(v);
            }
        }

        let mut excluded = Vec::new();
        for &v in &joined {
            for &u in g.neighbors(v) {
                if undecided[u] && !dropped[u] {
                    dropped[u] = true;
                    excluded.push(u);
                }
            }
        }
        excluded.sort_unstable();

        // notifications go to neighbors that were undecided at round start
        let notifications: u64 = joined
            .iter()
            .chain(&excluded)
            .map(|&v| g.neighbors(v).iter().filter(|&&u| undecided[u]).count() as u64)
            .sum();

        for &v in &joined {
            selected[v] = true;
            undecided[v] = false;
        }
        for &v in &excluded {
            undecided[v] = false;
        }
        active.retain(|&v| undecided[v]);

        trace.push(RoundTrace {
            round: trace.len(),
            joined,
            excluded,
            weight_messages,
            notifications,
        });
    }

    let p2p_messages = count_messages(&trace);
    Ok(Schedule {
        selected: VertexSet::from_mask(selected),
        rounds: trace.len(),
        p2p_messages,
        trace,
    })
}

/// Reason a vertex set is not an acceptable schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Both endpoints of this edge are selected.
    Edge(usize, usize),
    /// This positive-weight vertex is unselected yet has no selected neighbor.
    NonMaximal(usize),
    /// Selected id outside the graph, or length mismatch.
    OutOfRange(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Edge(a, b) => write!(f, "edge ({a},{b}) inside the schedule"),
            Violation::NonMaximal(v) => write!(f, "vertex {v} could join the schedule"),
            Violation::OutOfRange(v) => write!(f, "vertex {v} is not in the graph"),
        }
    }
}

/// Checks independence and maximality over positive-weight contenders.
pub fn validate_schedule(
    g: &ConflictGraph,
    w: &[f64],
    selected: &VertexSet,
) -> std::result::Result<(), Violation> {
    if selected.universe() != g.n() || w.len() != g.n() {
        return Err(Violation::OutOfRange(selected.universe().max(w.len())));
    }
    if let Some((a, b)) = g.find_internal_edge(selected) {
        return Err(Violation::Edge(a, b));
    }
    for v in 0..g.n() {
        if w[v] > 0.0
            && !selected.contains(v)
            && !g.neighbors(v).iter().any(|&u| selected.contains(u))
        {
            return Err(Violation::NonMaximal(v));
        }
    }
    Ok(())
}

/// Sequential greedy reference: repeatedly take the best remaining positive
/// vertex by `(weight, -id)` and delete its closed neighborhood.
pub fn sequential_greedy(g: &ConflictGraph, w: &[f64]) -> VertexSet {
    let mut order: Vec<usize> = (0..g.n()).filter(|&v| w[v] > 0.0).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut blocked = vec![false; g.n()];
    let mut chosen = vec![false; g.n()];
    for v in order {
        if !blocked[v] {
            chosen[v] = true;
            blocked[v] = true;
            for &u in g.neighbors(v) {
                blocked[u] = true;
            }
        }
    }
    VertexSet::from_mask(chosen)
}
