//! Link sparsification for distributed wireless scheduling.
//!
//! A featureless GCN maps each conflict graph to per-link multipliers that
//! decide whether a link joins the scheduling contention in a given slot.
//! Withdrawn links stay silent, which shrinks the contention graph and the
//! message count of the distributed greedy scheduler.

pub mod error;
pub mod gcn;
pub mod graph;
pub mod harness;
pub mod mwis;
pub mod scheduler;
pub mod sparsifier;
pub mod traffic;
pub mod training;

pub use error::{Error, Result};
pub use gcn::{Checkpoint, GcnModel, TargetMatrix};
pub use graph::{gen_er, normalized_laplacian, ConflictGraph, NormalizedLaplacian, VertexSet};
pub use mwis::brute_force_mwis;
pub use scheduler::{count_messages, lgs_schedule, validate_schedule, Schedule, Violation};
pub use sparsifier::{h_v, sparse_schedule, sparsify, statistical_baseline, Embeddings, SparseResult};
pub use traffic::{EmpiricalDistribution, QueueSim, QueueState, TrafficConfig};
