//! Per-link queues, Poisson arrivals, clipped-normal link rates, and the
//! empirical utility distribution used to pick cut-off thresholds.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{ConflictGraph, VertexSet};
use crate::scheduler::lgs_schedule;

/// Clipped normal link-rate model, in packets per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub mean: f64,
    pub std: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        Self {
            mean: 50.0,
            std: 25.0,
            clip_lo: 0.0,
            clip_hi: 100.0,
        }
    }
}

impl RateModel {
    /// Mean of the clipped distribution. Exact when the clip interval is
    /// symmetric about `mean`, which holds for the default model.
    pub fn expected_rate(&self) -> f64 {
        self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    /// Traffic load `lambda / E(r)`.
    pub mu: f64,
    pub rate: RateModel,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            mu: 0.04,
            rate: RateModel::default(),
        }
    }
}

impl TrafficConfig {
    pub fn with_load(mu: f64) -> Result<Self> {
        let cfg = Self {
            mu,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::param(format!("traffic load {} outside [0, 1)", self.mu)));
        }
        let r = &self.rate;
        if !(r.std >= 0.0 && r.clip_lo >= 0.0 && r.clip_lo <= r.clip_hi && r.mean.is_finite()) {
            return Err(Error::param(format!("invalid rate model {r:?}")));
        }
        Ok(())
    }

    /// Poisson arrival rate in packets per slot.
    pub fn lambda(&self) -> f64 {
        self.mu * self.rate.expected_rate()
    }
}

pub fn sample_rate<R: Rng + ?Sized>(rng: &mut R, model: &RateModel) -> f64 {
    let x = if model.std > 0.0 {
        Normal::new(model.mean, model.std)
            .expect("validated std")
            .sample(rng)
    } else {
        model.mean
    };
    x.clamp(model.clip_lo, model.clip_hi)
}

pub fn sample_arrivals<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

/// `u(v) = q(v) r(v)`.
pub fn utility(q: u64, r: f64) -> f64 {
    q as f64 * r
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueueState {
    pub q: Vec<u64>,
    pub t: u64,
}

impl QueueState {
    pub fn new(n: usize) -> Self {
        Self { q: vec![0; n], t: 0 }
    }

    pub fn total(&self) -> u64 {
        self.q.iter().sum()
    }

    pub fn utilities(&self, rates: &[f64]) -> Vec<f64> {
        self.q.iter().zip(rates).map(|(&q, &r)| utility(q, r)).collect()
    }
}

/// Outcome of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub delivered: Vec<u64>,
    pub arrivals: Vec<u64>,
}

/// Advances one slot: scheduled links transmit `min(q, floor(r))` packets,
/// then every link receives its Poisson arrivals.
pub fn step<R: Rng + ?Sized>(
    g: &ConflictGraph,
    state: &mut QueueState,
    schedule: &VertexSet,
    rates: &[f64],
    rng: &mut R,
    cfg: &TrafficConfig,
) -> Result<SlotOutcome> {
    let n = g.n();
    if state.q.len() != n || rates.len() != n || schedule.universe() != n {
        return Err(Error::Contract("queue, rate, and schedule sizes must match the graph".into()));
    }
    if let Some((a, b)) = g.find_internal_edge(schedule) {
        return Err(Error::Contract(format!("schedule contains conflicting links {a} and {b}")));
    }
    let lambda = cfg.lambda();
    let mut delivered = vec![0u64; n];
    let mut arrivals = vec![0u64; n];
    for v in 0..n {
        if schedule.contains(v) {
            let capacity = rates[v].max(0.0).floor() as u64;
            delivered[v] = state.q[v].min(capacity);
            state.q[v] -= delivered[v];
        }
    }
    for v in 0..n {
        arrivals[v] = sample_arrivals(rng, lambda);
        state.q[v] += arrivals[v];
    }
    state.t += 1;
    Ok(SlotOutcome { delivered, arrivals })
}

/// Closed-loop queue simulation on one conflict graph.
#[derive(Debug, Clone)]
pub struct QueueSim<'g> {
    pub graph: &'g ConflictGraph,
    pub cfg: TrafficConfig,
    pub state: QueueState,
    pub initial_total: u64,
    pub delivered: u64,
    pub arrivals: u64,
    /// Total backlog after every slot.
    pub backlog: Vec<u64>,
    rng: ChaCha8Rng,
}

impl<'g> QueueSim<'g> {
    pub fn new(graph: &'g ConflictGraph, cfg: TrafficConfig, seed: u64) -> Self {
        Self {
            graph,
            cfg,
            state: QueueState::new(graph.n()),
            initial_total: 0,
            delivered: 0,
            arrivals: 0,
            backlog: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Draws this slot's link rates and returns them with the utilities the
    /// scheduler should see.
    pub fn observe(&mut self) -> (Vec<f64>, Vec<f64>) {
        let rates: Vec<f64> = (0..self.graph.n())
            .map(|_| sample_rate(&mut self.rng, &self.cfg.rate))
            .collect();
        let u = self.state.utilities(&rates);
        (rates, u)
    }

    pub fn advance(&mut self, schedule: &VertexSet, rates: &[f64]) -> Result<SlotOutcome> {
        let out = step(self.graph, &mut self.state, schedule, rates, &mut self.rng, &self.cfg)?;
        self.delivered += out.delivered.iter().sum::<u64>();
        self.arrivals += out.arrivals.iter().sum::<u64>();
        self.backlog.push(self.state.total());
        Ok(out)
    }

    /// `delivered + backlog == initial + arrivals`.
    pub fn conserved(&self) -> bool {
        self.delivered + self.state.total() == self.initial_total + self.arrivals
    }
}

/// Sorted pool of observed utility values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("empirical distribution needs at least one sample"));
        }
        if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::param("utility samples must be finite and nonnegative"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `u^(eta)`: zero at `eta = 0`, otherwise the `ceil(eta N)`-th order
    /// statistic.
    pub fn quantile(&self, eta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::param(format!("quantile level {eta} outside [0, 1]")));
        }
        if eta == 0.0 {
            return Ok(0.0);
        }
        let n = self.samples.len();
        let k = ((eta * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.samples[k - 1])
    }

    /// Smallest strictly positive sample, if any.
    pub fn min_positive(&self) -> Option<f64> {
        let i = self.samples.partition_point(|&x| x <= 0.0);
        self.samples.get(i).copied()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.samples[rng.random_range(0..self.samples.len())]
    }

    pub fn sample_vec<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// SHA-256 over the little-endian sample bytes.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for x in &self.samples {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn write_csv<W: Write>(&self, mut out: W, meta: &EcdfMeta) -> Result<()> {
        writeln!(
            out,
            "# ecdf pool_size={} mu={} rate_mean={} rate_std={} rate_clip={}:{} slots={} dataset_sha256={}",
            self.samples.len(),
            meta.cfg.mu,
            meta.cfg.rate.mean,
            meta.cfg.rate.std,
            meta.cfg.rate.clip_lo,
            meta.cfg.rate.clip_hi,
            meta.slots,
            meta.dataset_hash,
        )?;
        for x in &self.samples {
            writeln!(out, "{x}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut samples = Vec::new();
        let mut declared = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                declared = header
                    .split_whitespace()
                    .find_map(|kv| kv.strip_prefix("pool_size="))
                    .and_then(|s| s.parse::<usize>().ok());
                continue;
            }
            let x: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad utility sample {line:?}", i + 1)))?;
            samples.push(x);
        }
        if let Some(n) = declared {
            if n != samples.len() {
                return Err(Error::Parse(format!(
                    "header declares {n} samples, found {}",
                    samples.len()
                )));
            }
        }
        Self::new(samples)
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &EcdfMeta) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w, meta)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Provenance recorded in the eCDF file header.
#[derive(Debug, Clone)]
pub struct EcdfMeta {
    pub cfg: TrafficConfig,
    pub slots: usize,
    pub dataset_hash: String,
}

/// Runs vanilla LGS in closed loop for `slots` slots on every graph and pools
/// every observed `u(v, t)`.
pub fn collect_ecdf<R: RngCore + ?Sized>(
    graphs: &[ConflictGraph],
    cfg: &TrafficConfig,
    slots: usize,
    rng: &mut R,
) -> Result<EmpiricalDistribution> {
    if graphs.is_empty() {
        return Err(Error::param("eCDF collection needs at least one graph"));
    }
    cfg.validate()?;
    let seeds: Vec<u64> = graphs.iter().map(|_| rng.next_u64()).collect();
    let pools = graphs
        .par_iter()
        .zip(seeds)
        .map(|(g, seed)| {
            let mut sim = QueueSim::new(g, *cfg, seed);
            let mut pool = Vec::with_capacity(g.n() * slots);
            for _ in 0..slots {
                let (rates, u) = sim.observe();
                let s = lgs_schedule(g, &u)?;
                pool.extend_from_slice(&u);
                sim.advance(&s.selected, &rates)?;
            }
            Ok(pool)
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalDistribution::new(pools.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_er;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rates_are_clipped() {
        let mut r = rng(1);
        let model = RateModel::default();
        let draws: Vec<f64> = (0..100_000).map(|_| sample_rate(&mut r, &model)).collect();
        assert!(draws.iter().all(|&x| (0.0..=100.0).contains(&x)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 50.0).abs() < 0.5, "mean rate {mean}");
        assert_eq!((model.mean, model.std), (50.0, 25.0));
    }

    #[test]
    fn poisson_arrivals() {
        let mut r = rng(2);
        assert_eq!(sample_arrivals(&mut r, 0.0), 0);
        let cfg = TrafficConfig::with_load(0.04).unwrap();
        assert!((cfg.lambda() - 2.0).abs() < 1e-12);
        let mean = (0..100_000).map(|_| sample_arrivals(&mut r, 2.0)).sum::<u64>() as f64 / 1e5;
        assert!((mean - 2.0).abs() < 0.02, "mean arrivals {mean}");
    }

    #[test]
    fn utility_is_product() {
        assert_eq!(utility(0, 70.0), 0.0);
        assert_eq!(utility(3, 50.0), 150.0);
        assert_eq!(utility(10, 0.0), 0.0);
    }

    #[test]
    fn service_then_arrival() {
        let g = ConflictGraph::empty(1);
        let cfg = TrafficConfig::default();
        let all = VertexSet::full(1);

        let mut s = QueueState { q: vec![5], t: 0 };
        let out = step(&g, &mut s, &all, &[50.0], &mut rng(3), &cfg).unwrap();
        assert_eq!(out.delivered, vec![5]);
        assert_eq!(s.q[0], out.arrivals[0]);
        assert_eq!(s.t, 1);

        let mut s = QueueState { q: vec![80], t: 0 };
        let out = step(&g, &mut s, &all, &[50.7], &mut rng(4), &cfg).unwrap();
        assert_eq!(out.delivered, vec![50]);
        assert_eq!(s.q[0], 30 + out.arrivals[0]);

        let mut s = QueueState { q: vec![9], t: 0 };
        let out = step(&g, &mut s, &VertexSet::empty(1), &[50.0], &mut rng(5), &cfg).unwrap();
        assert_eq!(out.delivered, vec![0]);
        assert_eq!(s.q[0], 9 + out.arrivals[0]);
    }

    #[test]
    fn step_rejects_conflicting_schedule() {
        let g = ConflictGraph::from_edges(2, &[(0, 1)]).unwrap();
        let mut s = QueueState::new(2);
        let err = step(&g, &mut s, &VertexSet::full(2), &[1.0, 1.0], &mut rng(0), &TrafficConfig::default());
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn quantiles() {
        let d = EmpiricalDistribution::new((1..=100).map(f64::from).collect()).unwrap();
        assert_eq!(d.quantile(0.95).unwrap(), 95.0);
        assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        assert_eq!(d.quantile(1.0).unwrap(), 100.0);
        assert_eq!(d.quantile(0.001).unwrap(), 1.0);
        assert!(d.quantile(1.1).is_err());
        assert!(d.quantile(-0.1).is_err());
    }

    #[test]
    fn sampling_stays_in_pool() {
        let single = EmpiricalDistribution::new(vec![7.0]).unwrap();
        assert_eq!(single.sample(&mut rng(0)), 7.0);

        let d = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut r = rng(6);
        let mut counts = [0usize; 4];
        let draws = 40_000;
        for _ in 0..draws {
            let x = d.sample(&mut r);
            counts[x as usize - 1] += 1;
        }
        // chi-square with 3 dof; 16.27 is the 0.999 quantile
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(EmpiricalDistribution::new(vec![]).is_err());
        assert!(collect_ecdf(&[], &TrafficConfig::default(), 10, &mut rng(0)).is_err());
    }

    #[test]
    fn zero_traffic_pool_is_all_zero() {
        let graphs: Vec<_> = (0..3).map(|s| gen_er(20, 0.2, s).unwrap()).collect();
        let cfg = TrafficConfig::with_load(0.0).unwrap();
        let d = collect_ecdf(&graphs, &cfg, 15, &mut rng(1)).unwrap();
        assert_eq!(d.len(), 3 * 20 * 15);
        assert!(d.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn collected_pool_shape() {
        let graphs: Vec<_> = (0..4).map(|s| gen_er(100, 0.05, s).unwrap()).collect();
        let cfg = TrafficConfig::with_load(0.04).unwrap();
        let d = collect_ecdf(&graphs, &cfg, 100, &mut rng(2)).unwrap();
        assert_eq!(d.len(), 4 * 100 * 100);
        assert!(d.samples()[0] >= 0.0);
        // point mass at zero and a right tail far above the median
        let zeros = d.samples().iter().filter(|&&x| x == 0.0).count() as f64 / d.len() as f64;
        assert!(zeros > 0.05, "zero mass {zeros}");
        let median = d.quantile(0.5).unwrap();
        let tail = d.quantile(0.99).unwrap();
        assert!(tail > 3.0 * median, "median {median}, p99 {tail}");
    }

    #[test]
    fn csv_round_trip() {
        let d = EmpiricalDistribution::new(vec![0.0, 0.25, 1e-7, 12345.678]).unwrap();
        let meta = EcdfMeta {
            cfg: TrafficConfig::default(),
            slots: 10,
            dataset_hash: "abc".into(),
        };
        let mut buf = Vec::new();
        d.write_csv(&mut buf, &meta).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# ecdf pool_size=4 mu=0.04"));
        let back = EmpiricalDistribution::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.hash(), d.hash());
    }
}
