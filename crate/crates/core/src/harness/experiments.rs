//! Quantile sweep on i.i.d. utilities and closed-loop time-slotted
//! simulation, each comparing vanilla LGS, quantile thresholding and the GCN
//! sparsifier on identical inputs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gcn::GcnModel;
use crate::graph::ConflictGraph;
use crate::harness::dataset::DatasetManifest;
use crate::harness::metrics::{metrics, ratio};
use crate::scheduler::lgs_schedule;
use crate::sparsifier::{schedule_sparse, sparsify, Embeddings};
use crate::traffic::{EmpiricalDistribution, QueueSim, RateModel, TrafficConfig};

/// Cut-off quantiles of the sweep.
pub const ETA_GRID: [f64; 12] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vanilla,
    Stat,
    Gcn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Stat => "stat",
            Method::Gcn => "gcn",
        }
    }
}

/// A test graph with its identifying metadata.
#[derive(Debug, Clone)]
pub struct TestInstance {
    pub id: usize,
    pub graph: ConflictGraph,
    pub d_bar: f64,
}

/// Pairs manifest entries with their graphs.
pub fn test_instances(manifest: &DatasetManifest, graphs: Vec<ConflictGraph>) -> Vec<TestInstance> {
    manifest
        .entries
        .iter()
        .zip(graphs)
        .map(|(e, graph)| TestInstance {
            id: e.id,
            graph,
            d_bar: e.d_bar,
        })
        .collect()
}

/// SplitMix64 finalizer over the combined inputs.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub graph_id: usize,
    #[serde(rename = "V")]
    pub v: usize,
    pub d_bar: f64,
    pub eta: f64,
    pub method: Method,
    pub ar_utility: f64,
    pub rr_vertices: f64,
    pub rr_avg_degree: f64,
    pub rr_messages: f64,
}

/// One utility realization per `(graph, eta)`; every method sees the same
/// realization. Without a model only the quantile-thresholding rows are
/// produced.
pub fn experiment_quantile_sweep(
    model: Option<&GcnModel>,
    instances: &[TestInstance],
    ecdf: &EmpiricalDistribution,
    etas: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let per_instance = instances
        .par_iter()
        .map(|inst| {
            let g = &inst.graph;
            let z_gcn = model.map(|m| m.embeddings_for(g));
            let z_stat = Embeddings::ones(g.n());
            let mut rows = Vec::new();
            for &eta in etas {
                // keyed by the eta value so a row does not depend on the rest of the grid
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, inst.id as u64, eta.to_bits()));
                let u = ecdf.sample_vec(&mut rng, g.n());
                let u_eta = ecdf.quantile(eta)?;
                let vanilla = lgs_schedule(g, &u)?;
                let mut methods = vec![(Method::Stat, &z_stat)];
                if let Some(z) = &z_gcn {
                    methods.push((Method::Gcn, z));
                }
                for (method, z) in methods {
                    let sparse = sparsify(g, &u, z, u_eta)?;
                    let s = schedule_sparse(g, &sparse)?;
                    let r = metrics(g, &u, &vanilla, &s, &sparse)?;
                    rows.push(SweepRow {
                        graph_id: inst.id,
                        v: g.n(),
                        d_bar: inst.d_bar,
                        eta,
                        method,
                        ar_utility: r.ar_utility,
                        rr_vertices: r.rr_vertices,
                        rr_avg_degree: r.rr_avg_degree,
                        rr_messages: r.rr_messages,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_instance.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimesimConfig {
    pub slots: usize,
    pub eta: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub rate: RateModel,
}

impl Default for TimesimConfig {
    fn default() -> Self {
        Self {
            slots: 300,
            eta: 0.95,
            mu_lo: 0.03,
            mu_hi: 0.05,
            rate: RateModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimesimRow {
    pub graph_id: usize,
    #[serde(rename = "V")]
    pub v: usize,
    pub d_bar: f64,
    pub method: Method,
    pub rr_avg_degree: f64,
    pub rr_messages: f64,
    pub delivered: u64,
    pub arrivals: u64,
}

/// Everything recorded about one closed-loop run.
#[derive(Debug, Clone)]
pub struct TimesimRun {
    pub row: TimesimRow,
    pub mu: f64,
    pub backlog: Vec<u64>,
    pub residual: u64,
    pub conserved: bool,
    pub messages: u64,
}

/// Closed-loop run of one scheduler. Every run on an instance uses the same
/// seed, so rate and arrival draws coincide across schedulers.
fn run_closed_loop(
    inst: &TestInstance,
    method: Method,
    z: Option<&Embeddings>,
    u_eta: f64,
    cfg: TrafficConfig,
    slots: usize,
    seed: u64,
) -> Result<(TimesimRun, f64)> {
    let g = &inst.graph;
    let mut sim = QueueSim::new(g, cfg, seed);
    let mut messages = 0u64;
    let mut degree_sum = 0.0;
    for _ in 0..slots {
        let (rates, u) = sim.observe();
        let schedule = match z {
            None => {
                degree_sum += g.avg_degree();
                lgs_schedule(g, &u)?
            }
            Some(z) => {
                let sparse = sparsify(g, &u, z, u_eta)?;
                degree_sum += sparse.graph.avg_degree();
                schedule_sparse(g, &sparse)?
            }
        };
        messages += schedule.p2p_messages;
        sim.advance(&schedule.selected, &rates)?;
    }
    let mean_degree = degree_sum / slots.max(1) as f64;
    let run = TimesimRun {
        row: TimesimRow {
            graph_id: inst.id,
            v: g.n(),
            d_bar: inst.d_bar,
            method,
            rr_avg_degree: 0.0,
            rr_messages: 0.0,
            delivered: sim.delivered,
            arrivals: sim.arrivals,
        },
        mu: cfg.mu,
        residual: sim.state.total(),
        conserved: sim.conserved(),
        backlog: sim.backlog,
        messages,
    };
    Ok((run, mean_degree))
}

/// Per instance: traffic load drawn uniformly from `[mu_lo, mu_hi]`, then
/// vanilla, quantile-thresholding and (if a model is given) GCN schedulers each
/// run their own queues for `slots` slots.
pub fn experiment_time_sim(
    model: Option<&GcnModel>,
    instances: &[TestInstance],
    ecdf: &EmpiricalDistribution,
    cfg: &TimesimConfig,
    seed: u64,
) -> Result<Vec<TimesimRun>> {
    let u_eta = ecdf.quantile(cfg.eta)?;
    let per_instance = instances
        .par_iter()
        .map(|inst| {
            let g = &inst.graph;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, inst.id as u64, 0));
            let mu = if cfg.mu_hi > cfg.mu_lo {
                rng.random_range(cfg.mu_lo..cfg.mu_hi)
            } else {
                cfg.mu_lo
            };
            let traffic = TrafficConfig { mu, rate: cfg.rate };
            traffic.validate()?;
            let sim_seed = mix_seed(seed, inst.id as u64, 1);

            let z_stat = Embeddings::ones(g.n());
            let z_gcn = model.map(|m| m.embeddings_for(g));
            let mut plan: Vec<(Method, Option<&Embeddings>)> =
                vec![(Method::Vanilla, None), (Method::Stat, Some(&z_stat))];
            if let Some(z) = &z_gcn {
                plan.push((Method::Gcn, Some(z)));
            }

            let mut runs = Vec::with_capacity(plan.len());
            let mut vanilla_messages = 0.0;
            let base_degree = g.avg_degree();
            for (method, z) in plan {
                let (mut run, mean_degree) =
                    run_closed_loop(inst, method, z, u_eta, traffic, cfg.slots, sim_seed)?;
                if method == Method::Vanilla {
                    vanilla_messages = run.messages as f64;
                }
                run.row.rr_avg_degree = ratio(mean_degree, base_degree, 0.0);
                run.row.rr_messages = ratio(run.messages as f64, vanilla_messages, 0.0);
                runs.push(run);
            }
            Ok(runs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_instance.concat())
}

/// Mean of a field grouped by a key, in key order.
pub fn group_mean<T, K: Ord + Clone>(
    rows: &[T],
    key: impl Fn(&T) -> K,
    value: impl Fn(&T) -> f64,
) -> Vec<(K, f64, usize)> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(key(r)).or_insert((0.0, 0));
        e.0 += value(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64, c)).collect()
}

/// Orders `f64` keys for grouping; all keys here are finite grid values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Key(pub f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub fn write_csv<W: std::io::Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
