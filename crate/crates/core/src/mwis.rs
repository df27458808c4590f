//! Exact maximum weighted independent set by branch and bound. Exponential;
//! used as a test oracle and by the `mwis-oracle` command.

use crate::error::{Error, Result};
use crate::graph::{ConflictGraph, VertexSet};

pub const MAX_EXACT_VERTICES: usize = 30;

/// Exact MWIS for graphs with at most [`MAX_EXACT_VERTICES`] vertices.
///
/// The optimum is searched over positive-weight vertices only; among optimal
/// sets the lexicographically smallest sorted member list wins. Zero-weight
/// vertices are then appended in ascending id order wherever they fit, so the
/// returned set is always maximal.
pub fn brute_force_mwis(g: &ConflictGraph, w: &[f64]) -> Result<(VertexSet, f64)> {
    let n = g.n();
    if n > MAX_EXACT_VERTICES {
        return Err(Error::TooLarge {
            n,
            limit: MAX_EXACT_VERTICES,
        });
    }
    if w.len() != n {
        return Err(Error::param(format!("weight vector has length {}, expected {n}", w.len())));
    }
    if let Some(x) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::param(format!("weights must be finite and nonnegative, got {x}")));
    }

    let nbr: Vec<u32> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |acc, &u| acc | (1 << u)))
        .collect();
    let positive = (0..n).filter(|&v| w[v] > 0.0).fold(0u32, |acc, v| acc | (1 << v));

    let mut search = Search {
        w,
        nbr: &nbr,
        best_weight: -1.0,
        best: Vec::new(),
        current: Vec::new(),
    };
    search.branch(positive, 0.0);

    let mut chosen: u32 = search.best.iter().fold(0, |acc, &v| acc | (1 << v));
    let mut blocked = search.best.iter().fold(0u32, |acc, &v| acc | nbr[v]);
    for v in 0..n {
        let bit = 1 << v;
        if chosen & bit == 0 && blocked & bit == 0 {
            chosen |= bit;
            blocked |= nbr[v];
        }
    }
    let set = VertexSet::from_members(n, (0..n).filter(|v| chosen & (1 << v) != 0))?;
    let total = search.best_weight.max(0.0);
    Ok((set, total))
}

struct Search<'a> {
    w: &'a [f64],
    nbr: &'a [u32],
    best_weight: f64,
    best: Vec<usize>,
    current: Vec<usize>,
}

impl Search<'_> {
    fn branch(&mut self, candidates: u32, weight: f64) {
        if candidates == 0 {
            if weight > self.best_weight
                || (weight == self.best_weight && self.current < self.best)
            {
                self.best_weight = weight;
                self.best.clone_from(&self.current);
            }
            return;
        }
        let bound: f64 = weight + bits(candidates).map(|v| self.w[v]).sum::<f64>();
        if bound < self.best_weight {
            return;
        }
        let v = candidates.trailing_zeros() as usize;
        let bit = 1u32 << v;

        self.current.push(v);
        self.branch(candidates & !bit & !self.nbr[v], weight + self.w[v]);
        self.current.pop();

        self.branch(candidates & !bit, weight);
    }
}

fn bits(mut x: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if x == 0 {
            None
        } else {
            let v = x.trailing_zeros() as usize;
            x &= x - 1;
            Some(v)
        }
    })
}
