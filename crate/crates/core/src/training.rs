//! Two-stage regression training of the GCN sparsifier.
//!
//! Stage 1 compares the sparse scheduler at a fixed cut-off quantile against
//! the dense scheduler; stage 2 draws a random quantile per episode and
//! compares against plain quantile thresholding at the same quantile. Each
//! episode yields regression targets for `z0` and `z1`; the network is fitted
//! to them by Adam on minibatches drawn from a per-epoch replay buffer.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{calibrate_z1, Adam, ExpDecay, GcnModel, TargetMatrix};
use crate::graph::{ConflictGraph, NormalizedLaplacian, VertexSet};
use crate::scheduler::lgs_schedule;
use crate::sparsifier::{schedule_sparse, sparse_schedule, statistical_baseline};
use crate::traffic::EmpiricalDistribution;

/// Normalization of the stage-2 threshold target is skipped when its mean is
/// at or below this value.
pub const RHO3_MEAN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Fixed quantile, dense scheduler as baseline.
    One,
    /// Random quantile, quantile thresholding as baseline.
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Target utility ratio.
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: ExpDecay,
    pub seed: u64,
    /// Fixed cut-off quantile in stage 1.
    pub stage1_eta: f64,
    /// Value of the utility ratio when only the baseline total is zero.
    pub epsilon_cap: f64,
    /// Optimizer moments are cleared every this many epochs.
    pub reset_every: usize,
    /// One optimizer step after this many new episodes.
    pub replay_every: usize,
    /// Stage 2 starts from the stage-1 weights instead of a fresh init.
    pub continue_stage2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 0.97,
            batch_size: 200,
            epochs: 25,
            lr: ExpDecay::default(),
            seed: 0,
            stage1_eta: 0.95,
            epsilon_cap: 2.0,
            reset_every: 1,
            replay_every: 1,
            continue_stage2: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("target ratio {} outside (0, 1)", self.delta)));
        }
        if self.batch_size == 0 || self.replay_every == 0 || self.reset_every == 0 {
            return Err(Error::param("batch size and periods must be positive"));
        }
        if !(self.stage1_eta > 0.0 && self.stage1_eta < 1.0) {
            return Err(Error::param(format!("stage-1 quantile {} outside (0, 1)", self.stage1_eta)));
        }
        Ok(())
    }
}

/// `rho0 = eps * v_s + z0 * (1 - v_s)`.
pub fn compute_rho0(z0: &[f64], scheduled: &VertexSet, epsilon: f64) -> Vec<f64> {
    z0.iter()
        .enumerate()
        .map(|(v, &z)| if scheduled.contains(v) { epsilon } else { z })
        .collect()
}

/// Ratio of scheduled utility totals, `u(sparse) / u(baseline)`. `0/0` gives
/// 1; `x/0` gives `cap`.
pub fn compute_epsilon(u: &[f64], sparse: &VertexSet, baseline: &VertexSet, cap: f64) -> f64 {
    let num = sparse.total(u);
    let den = baseline.total(u);
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        cap
    } else {
        1.0
    }
}

/// `b = 1.1` when the ratio meets the target, else `0.9`.
pub fn removal_gain(epsilon: f64, delta: f64) -> f64 {
    if epsilon >= delta {
        1.1
    } else {
        0.9
    }
}

/// `rho2 = (b / u_eta) z0 * u * v_r + z1 * (1 - v_r)`.
pub fn compute_rho2(
    z0: &[f64],
    z1: &[f64],
    u: &[f64],
    removed: &VertexSet,
    epsilon: f64,
    delta: f64,
    u_eta: f64,
) -> Result<Vec<f64>> {
    if !(u_eta > 0.0) {
        return Err(Error::param(format!("threshold utility must be positive, got {u_eta}")));
    }
    let scale = removal_gain(epsilon, delta) / u_eta;
    Ok((0..z0.len())
        .map(|v| {
            if removed.contains(v) {
                scale * z0[v] * u[v]
            } else {
                z1[v]
            }
        })
        .collect())
}

/// `rho3 = rho2 - 0.2 z1 * v_s`, then divided by its mean unless the mean is
/// at or below [`RHO3_MEAN_FLOOR`].
pub fn compute_rho1_stage2(rho2: &[f64], z1: &[f64], scheduled: &VertexSet) -> Vec<f64> {
    let rho3: Vec<f64> = rho2
        .iter()
        .enumerate()
        .map(|(v, &r)| if scheduled.contains(v) { r - 0.2 * z1[v] } else { r })
        .collect();
    let mean = rho3.iter().sum::<f64>() / rho3.len().max(1) as f64;
    if mean <= RHO3_MEAN_FLOOR {
        rho3
    } else {
        rho3.into_iter().map(|x| x / mean).collect()
    }
}

/// Threshold utility for quantile `eta`, falling back to the smallest positive
/// sample when the quantile is zero.
pub fn threshold_for(ecdf: &EmpiricalDistribution, eta: f64) -> Result<f64> {
    let q = ecdf.quantile(eta)?;
    if q > 0.0 {
        return Ok(q);
    }
    ecdf.min_positive()
        .ok_or_else(|| Error::param("utility distribution has no positive samples"))
}

/// Freshly initialized network: weights uniform in `[-0.5, 0.5]`, then the
/// output layer shifted so an isolated link starts at `Z = [1, 1]`, i.e. at
/// the thresholding baseline. A start with `z0 <= 0` everywhere removes every
/// link and produces no learning signal.
pub fn initial_model(dims: &[usize], seed: u64) -> Result<GcnModel> {
    let mut model = GcnModel::new(dims, seed, 0.5)?;
    model.anchor_isolated_output([1.0, 1.0]);
    Ok(model)
}

/// A conflict graph with its cached Laplacian.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: ConflictGraph,
    pub lap: NormalizedLaplacian,
}

impl PreparedGraph {
    pub fn new(graph: ConflictGraph) -> Self {
        let lap = NormalizedLaplacian::new(&graph);
        Self { graph, lap }
    }
}

#[derive(Debug, Clone)]
pub struct ExperienceTuple {
    pub graph: usize,
    pub u: Vec<f64>,
    pub scheduled: VertexSet,
    pub removed: VertexSet,
    pub targets: TargetMatrix,
    pub eta: f64,
    pub epsilon: f64,
}

impl ExperienceTuple {
    pub fn removed_fraction(&self) -> f64 {
        self.removed.len() as f64 / self.removed.universe().max(1) as f64
    }
}

/// One episode on graph `graph_idx`: draw utilities, run the sparse and the
/// baseline schedulers, and build regression targets from the current
/// network output.
pub fn run_episode<R: Rng + ?Sized>(
    model: &GcnModel,
    graphs: &[PreparedGraph],
    graph_idx: usize,
    ecdf: &EmpiricalDistribution,
    stage: Stage,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ExperienceTuple> {
    let pg = &graphs[graph_idx];
    let g = &pg.graph;
    let n = g.n();
    let eta = match stage {
        Stage::One => cfg.stage1_eta,
        Stage::Two => loop {
            let x: f64 = rng.random();
            if x > 0.0 {
                break x;
            }
        },
    };
    let u = ecdf.sample_vec(rng, n);
    let u_eta = threshold_for(ecdf, eta)?;

    let (z, _) = model.forward(&pg.lap);
    let (sparse, sparse_result) = sparse_schedule(g, &u, &z, u_eta)?;
    let baseline = match stage {
        Stage::One => lgs_schedule(g, &u)?.selected,
        Stage::Two => schedule_sparse(g, &statistical_baseline(g, &u, u_eta)?)?.selected,
    };
    let epsilon = compute_epsilon(&u, &sparse.selected, &baseline, cfg.epsilon_cap);

    let rho0 = compute_rho0(&z.z0, &sparse.selected, epsilon);
    let rho2 = compute_rho2(&z.z0, &z.z1, &u, &sparse_result.removed, epsilon, cfg.delta, u_eta)?;
    let rho1 = match stage {
        Stage::One => rho2,
        Stage::Two => compute_rho1_stage2(&rho2, &z.z1, &sparse.selected),
    };
    Ok(ExperienceTuple {
        graph: graph_idx,
        u,
        scheduled: sparse.selected,
        removed: sparse_result.removed,
        targets: TargetMatrix { rho0, rho1 },
        eta,
        epsilon,
    })
}

/// Mean loss and mean gradient over a batch of stored tuples.
pub fn batch_gradient(
    model: &GcnModel,
    graphs: &[PreparedGraph],
    batch: &[&ExperienceTuple],
) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|t| model.loss_and_grad(&graphs[t.graph].lap, &t.targets))
        .collect();
    let k = batch.len().max(1) as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut total = 0.0;
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|x| *x /= k);
    (total / k, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: u8,
    pub mean_loss: f64,
    pub mean_epsilon: f64,
    pub mean_removed_fraction: f64,
    pub lr: f64,
}

/// Trains one stage in place and returns the per-epoch log.
pub fn train(
    model: &mut GcnModel,
    graphs: &[PreparedGraph],
    ecdf: &EmpiricalDistribution,
    stage: Stage,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(stage.number()) << 56));
    let mut opt = Adam::new(model.num_params());
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if epoch % cfg.reset_every == 0 {
            opt.reset();
        }
        let lr = cfg.lr.lr(epoch);
        order.shuffle(&mut rng);
        let mut buffer: Vec<ExperienceTuple> = Vec::with_capacity(graphs.len());
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        let (mut eps_sum, mut removed_sum) = (0.0, 0.0);

        for (i, &gi) in order.iter().enumerate() {
            let tuple = run_episode(model, graphs, gi, ecdf, stage, cfg, &mut rng)?;
            eps_sum += tuple.epsilon;
            removed_sum += tuple.removed_fraction();
            buffer.push(tuple);

            if (i + 1) % cfg.replay_every == 0 {
                let k = cfg.batch_size.min(buffer.len());
                let picks = sample_indices(&mut rng, buffer.len(), k);
                let batch: Vec<&ExperienceTuple> = picks.iter().map(|j| &buffer[j]).collect();
                let (l, grad) = batch_gradient(model, graphs, &batch);
                let mut params = model.params();
                opt.step(&mut params, &grad, lr);
                model.set_params(&params);
                loss_sum += l;
                steps += 1;
            }
        }

        let episodes = order.len() as f64;
        log.push(EpochLog {
            epoch,
            stage: stage.number(),
            mean_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
            mean_epsilon: eps_sum / episodes,
            mean_removed_fraction: removed_sum / episodes,
            lr,
        });
        log::info!(
            "stage {} epoch {epoch}: loss {:.4} eps {:.4} removed {:.4}",
            stage.number(),
            log[epoch].mean_loss,
            log[epoch].mean_epsilon,
            log[epoch].mean_removed_fraction
        );
    }
    Ok(log)
}

/// Stage 1, stage 2, then `z1` calibration on `calibration` graphs.
pub fn train_two_stage(
    model: &mut GcnModel,
    graphs: &[PreparedGraph],
    calibration: &[ConflictGraph],
    ecdf: &EmpiricalDistribution,
    cfg: &TrainConfig,
    fresh_init: impl FnOnce() -> GcnModel,
) -> Result<Vec<EpochLog>> {
    model.z1_calibration = 1.0;
    let mut log = train(model, graphs, ecdf, Stage::One, cfg)?;
    if !cfg.continue_stage2 {
        *model = fresh_init();
    }
    log.extend(train(model, graphs, ecdf, Stage::Two, cfg)?);
    calibrate_z1(model, calibration)?;
    Ok(log)
}

pub fn write_log_csv<W: std::io::Write>(out: W, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
