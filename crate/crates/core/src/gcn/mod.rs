//! Featureless graph convolutional network producing per-link multipliers.
//!
//! Layer `l` computes `X_l = act(X_{l-1} W0_l + L X_{l-1} W1_l)` where `L` is
//! the normalized Laplacian and `X_0` is the all-ones column. Hidden layers use
//! leaky ReLU, the output layer is linear with two channels `[z0, z1]`.

mod adam;

pub use adam::{Adam, ExpDecay};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConflictGraph, NormalizedLaplacian};
use crate::sparsifier::Embeddings;

pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `a (n x k) * b (k x m)`, both row-major.
fn matmul(a: &[f64], n: usize, b: &Mat) -> Vec<f64> {
    let (k, m) = (b.rows, b.cols);
    debug_assert_eq!(a.len(), n * k);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = a[i * k + p];
            if x != 0.0 {
                for (o, &w) in row.iter_mut().zip(&b.data[p * m..(p + 1) * m]) {
                    *o += x * w;
                }
            }
        }
    }
    out
}

/// `a^T (k x n) * d (n x m)` with `a` given as `n x k`.
fn matmul_tn(a: &[f64], k: usize, d: &[f64], m: usize) -> Mat {
    let n = a.len() / k;
    let mut out = Mat::zeros(k, m);
    for i in 0..n {
        for p in 0..k {
            let x = a[i * k + p];
            for (o, &y) in out.data[p * m..(p + 1) * m].iter_mut().zip(&d[i * m..(i + 1) * m]) {
                *o += x * y;
            }
        }
    }
    out
}

/// `d (n x m) * w^T (m x k)` with `w` given as `k x m`.
fn matmul_nt(d: &[f64], n: usize, w: &Mat) -> Vec<f64> {
    let (k, m) = (w.rows, w.cols);
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for p in 0..k {
            out[i * k + p] = (0..m).map(|j| d[i * m + j] * w.get(p, j)).sum();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub theta0: Mat,
    pub theta1: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub layers: Vec<Layer>,
    pub leaky_slope: f64,
    /// Estimate of the expected vertex-mean of raw `z1`; deployed `z1` is
    /// divided by it.
    pub z1_calibration: f64,
}

/// Per-layer inputs and pre-activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    inputs: Vec<Vec<f64>>,
    lap_inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Smallest `|pre-activation|` over hidden layers, i.e. the distance to the
    /// nearest leaky-ReLU kink. `None` for a single-layer model.
    pub fn min_hidden_preactivation(&self) -> Option<f64> {
        let hidden = &self.pre[..self.pre.len().saturating_sub(1)];
        hidden.iter().flatten().map(|x| x.abs()).reduce(f64::min)
    }
}

impl GcnModel {
    /// Model with layer widths `dims = [1, .., 2]`, weights uniform in
    /// `[-scale, scale]`.
    pub fn new(dims: &[usize], seed: u64, scale: f64) -> Result<Self> {
        if dims.len() < 2 || dims[0] != 1 || *dims.last().unwrap() != 2 || dims.contains(&0) {
            return Err(Error::param(format!(
                "layer widths must start at 1, end at 2, and be positive: {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |r: usize, c: usize| Mat {
            rows: r,
            cols: c,
            data: (0..r * c).map(|_| rng.random_range(-scale..=scale)).collect(),
        };
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                theta0: init(w[0], w[1]),
                theta1: init(w[0], w[1]),
            })
            .collect();
        Ok(Self {
            layers,
            leaky_slope: 0.2,
            z1_calibration: 1.0,
        })
    }

    /// Single linear layer `Z = 1 w0 + (L 1) w1`.
    pub fn single_layer(w0: [f64; 2], w1: [f64; 2]) -> Self {
        Self {
            layers: vec![Layer {
                theta0: Mat {
                    rows: 1,
                    cols: 2,
                    data: w0.to_vec(),
                },
                theta1: Mat {
                    rows: 1,
                    cols: 2,
                    data: w1.to_vec(),
                },
            }],
            leaky_slope: 0.2,
            z1_calibration: 1.0,
        }
    }

    /// Shifts the output layer so that an isolated vertex (zero Laplacian row)
    /// maps exactly to `target`. Other vertices deviate through the
    /// Laplacian terms only.
    pub fn anchor_isolated_output(&mut self, target: [f64; 2]) {
        let lap = NormalizedLaplacian::new(&ConflictGraph::empty(1));
        let (_, cache) = self.forward(&lap);
        let last = self.layers.len() - 1;
        let h = &cache.inputs[last];
        let norm2: f64 = h.iter().map(|x| x * x).sum();
        if norm2 == 0.0 {
            return;
        }
        let (z, _) = self.forward(&lap);
        let gap = [target[0] - z.z0[0], target[1] - z.z1[0]];
        let theta0 = &mut self.layers[last].theta0;
        for (r, &hr) in h.iter().enumerate() {
            for (c, g) in gap.iter().enumerate() {
                theta0.data[r * 2 + c] += hr * g / norm2;
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].theta0.rows];
        d.extend(self.layers.iter().map(|l| l.theta0.cols));
        d
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.theta0.data.len() + l.theta1.data.len())
            .sum()
    }

    /// All weights, layer by layer, `theta0` before `theta1`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.theta0.data);
            out.extend_from_slice(&l.theta1.data);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut i = 0;
        for l in &mut self.layers {
            for m in [&mut l.theta0, &mut l.theta1] {
                let k = m.data.len();
                m.data.copy_from_slice(&flat[i..i + k]);
                i += k;
            }
        }
    }

    fn activate(&self, x: f64, last: bool) -> f64 {
        if last || x > 0.0 {
            x
        } else {
            self.leaky_slope * x
        }
    }

    fn activate_grad(&self, x: f64, last: bool) -> f64 {
        if last || x > 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    /// Raw network output (no calibration) and the cache for [`Self::backward`].
    pub fn forward(&self, lap: &NormalizedLaplacian) -> (Embeddings, ForwardCache) {
        let n = lap.n();
        let depth = self.layers.len();
        let mut x = vec![1.0; n];
        let mut cache = ForwardCache {
            n,
            inputs: Vec::with_capacity(depth),
            lap_inputs: Vec::with_capacity(depth),
            pre: Vec::with_capacity(depth),
        };
        for (li, layer) in self.layers.iter().enumerate() {
            let k = layer.theta0.rows;
            let lx = lap.matmul(&x, k);
            let mut p = matmul(&x, n, &layer.theta0);
            for (a, b) in p.iter_mut().zip(matmul(&lx, n, &layer.theta1)) {
                *a += b;
            }
            let last = li + 1 == depth;
            let next: Vec<f64> = p.iter().map(|&v| self.activate(v, last)).collect();
            cache.inputs.push(x);
            cache.lap_inputs.push(lx);
            cache.pre.push(p);
            x = next;
        }
        (Embeddings::from_matrix(&x), cache)
    }

    /// Deployed multipliers: raw output with `z1` divided by the calibration.
    pub fn embeddings(&self, lap: &NormalizedLaplacian) -> Embeddings {
        let (mut z, _) = self.forward(lap);
        for x in &mut z.z1 {
            *x /= self.z1_calibration;
        }
        z
    }

    pub fn embeddings_for(&self, g: &ConflictGraph) -> Embeddings {
        self.embeddings(&NormalizedLaplacian::new(g))
    }

    /// Gradient of a scalar objective given `d_out = dObj/dZ` (row-major
    /// `n x 2`). Returned in the layout of [`Self::params`].
    pub fn backward(&self, lap: &NormalizedLaplacian, cache: &ForwardCache, d_out: &[f64]) -> Vec<f64> {
        let n = cache.n;
        let depth = self.layers.len();
        let mut grads: Vec<(Mat, Mat)> = Vec::with_capacity(depth);
        let mut d_x = d_out.to_vec();
        for li in (0..depth).rev() {
            let layer = &self.layers[li];
            let last = li + 1 == depth;
            let (k, m) = (layer.theta0.rows, layer.theta0.cols);
            let d_pre: Vec<f64> = d_x
                .iter()
                .zip(&cache.pre[li])
                .map(|(&d, &p)| d * self.activate_grad(p, last))
                .collect();
            let g0 = matmul_tn(&cache.inputs[li], k, &d_pre, m);
            let g1 = matmul_tn(&cache.lap_inputs[li], k, &d_pre, m);
            if li > 0 {
                let mut dx = matmul_nt(&d_pre, n, &layer.theta0);
                // L is symmetric, so L^T (dP W1^T) = L (dP W1^T)
                let back = lap.matmul(&matmul_nt(&d_pre, n, &layer.theta1), k);
                for (a, b) in dx.iter_mut().zip(back) {
                    *a += b;
                }
                d_x = dx;
            }
            grads.push((g0, g1));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.num_params());
        for (g0, g1) in grads {
            flat.extend(g0.data);
            flat.extend(g1.data);
        }
        flat
    }

    /// Loss against `targets` and its parameter gradient.
    pub fn loss_and_grad(&self, lap: &NormalizedLaplacian, targets: &TargetMatrix) -> (f64, Vec<f64>) {
        let (z, cache) = self.forward(lap);
        let zm = z.to_matrix();
        let tm = targets.to_matrix();
        let value = loss(&zm, &tm);
        let d = loss_grad(&zm, &tm);
        (value, self.backward(lap, &cache, &d))
    }
}

/// Regression targets `[rho0, rho1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
}

impl TargetMatrix {
    pub fn to_matrix(&self) -> Vec<f64> {
        self.rho0.iter().zip(&self.rho1).flat_map(|(&a, &b)| [a, b]).collect()
    }
}

/// Root-mean-square loss `||Z - T||_F / sqrt(n)` on row-major `n x 2` matrices.
pub fn loss(z: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(z.len(), targets.len());
    let n = z.len() / 2;
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = z.iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum();
    sq.sqrt() / (n as f64).sqrt()
}

/// `d loss / d Z = R / (sqrt(n) ||R||_F)`, zero at zero residual.
pub fn loss_grad(z: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = z.len() / 2;
    let r: Vec<f64> = z.iter().zip(targets).map(|(a, b)| a - b).collect();
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || n == 0 {
        return vec![0.0; r.len()];
    }
    let s = 1.0 / ((n as f64).sqrt() * norm);
    r.into_iter().map(|x| x * s).collect()
}

/// Mean over graphs of the vertex-mean raw `z1`. Refuses non-positive values.
pub fn estimate_z1_calibration(model: &GcnModel, graphs: &[ConflictGraph]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::param("calibration needs at least one graph"));
    }
    let total: f64 = graphs
        .iter()
        .map(|g| {
            let (z, _) = model.forward(&NormalizedLaplacian::new(g));
            z.z1.iter().sum::<f64>() / z.n().max(1) as f64
        })
        .sum();
    let c = total / graphs.len() as f64;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Calibration(c));
    }
    Ok(c)
}

/// Estimates and stores the `z1` calibration.
pub fn calibrate_z1(model: &mut GcnModel, graphs: &[ConflictGraph]) -> Result<f64> {
    let c = estimate_z1_calibration(model, graphs)?;
    model.z1_calibration = c;
    Ok(c)
}

/// Serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub layers: usize,
    pub dims: Vec<usize>,
    pub leaky_slope: f64,
    /// Row-major weights per layer.
    pub theta0: Vec<Vec<f64>>,
    pub theta1: Vec<Vec<f64>>,
    pub z1_calibration: f64,
    pub stage1_eta: f64,
    pub ecdf_sha256: String,
    #[serde(default)]
    pub stage: u8,
}

impl Checkpoint {
    pub fn from_model(model: &GcnModel, stage: u8, stage1_eta: f64, ecdf_sha256: &str) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA,
            layers: model.depth(),
            dims: model.dims(),
            leaky_slope: model.leaky_slope,
            theta0: model.layers.iter().map(|l| l.theta0.data.clone()).collect(),
            theta1: model.layers.iter().map(|l| l.theta1.data.clone()).collect(),
            z1_calibration: model.z1_calibration,
            stage1_eta,
            ecdf_sha256: ecdf_sha256.to_string(),
            stage,
        }
    }

    pub fn to_model(&self) -> Result<GcnModel> {
        if self.schema_version != CHECKPOINT_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported checkpoint schema {}",
                self.schema_version
            )));
        }
        let bad = |what: &str| Error::Parse(format!("checkpoint {what} inconsistent with dims {:?}", self.dims));
        if self.dims.len() != self.layers + 1
            || self.theta0.len() != self.layers
            || self.theta1.len() != self.layers
        {
            return Err(bad("layer count"));
        }
        let mut model = GcnModel::new(&self.dims, 0, 0.0)?;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            if self.theta0[l].len() != layer.theta0.data.len()
                || self.theta1[l].len() != layer.theta1.data.len()
            {
                return Err(bad("weight shape"));
            }
            layer.theta0.data.clone_from(&self.theta0[l]);
            layer.theta1.data.clone_from(&self.theta1[l]);
        }
        if !(self.z1_calibration > 0.0) {
            return Err(Error::Calibration(self.z1_calibration));
        }
        model.leaky_slope = self.leaky_slope;
        model.z1_calibration = self.z1_calibration;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
