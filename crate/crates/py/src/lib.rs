use linksparse::gcn::{calibrate_z1, GcnModel};
use linksparse::harness::{experiment_quantile_sweep, test_instances, DatasetManifest};
use linksparse::training::{initial_model, train_two_stage, PreparedGraph, TrainConfig};
use linksparse::{Checkpoint, Embeddings, EmpiricalDistribution, Error};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Undirected conflict graph; vertices are links, edges are interference.
#[pyclass(name = "ConflictGraph", from_py_object)]
#[derive(Clone)]
pub struct PyConflictGraph {
    inner: linksparse::ConflictGraph,
}

#[pymethods]
impl PyConflictGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = linksparse::ConflictGraph::from_edges(n, &edges).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Erdos-Renyi graph with edge probability `p`.
    #[staticmethod]
    fn erdos_renyi(n: usize, p: f64, seed: u64) -> PyResult<Self> {
        let inner = linksparse::gen_er(n, p, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = linksparse::ConflictGraph::parse(text).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn avg_degree(&self) -> f64 {
        self.inner.avg_degree()
    }

    fn degree(&self, v: usize) -> PyResult<usize> {
        self.check(v)?;
        Ok(self.inner.degree(v))
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<usize>> {
        self.check(v)?;
        Ok(self.inner.neighbors(v).to_vec())
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    /// Dense normalized Laplacian as a list of rows.
    fn laplacian(&self) -> Vec<Vec<f64>> {
        linksparse::normalized_laplacian(&self.inner).to_dense()
    }

    fn __repr__(&self) -> String {
        format!("ConflictGraph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

impl PyConflictGraph {
    fn check(&self, v: usize) -> PyResult<()> {
        if v < self.inner.n() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("vertex {v} out of range")))
        }
    }
}

/// Result of one distributed greedy contention.
#[pyclass(name = "Schedule", get_all)]
pub struct PySchedule {
    selected: Vec<usize>,
    rounds: usize,
    p2p_messages: u64,
}

#[pymethods]
impl PySchedule {
    fn __repr__(&self) -> String {
        format!(
            "Schedule(selected={:?}, rounds={}, p2p_messages={})",
            self.selected, self.rounds, self.p2p_messages
        )
    }
}

impl From<linksparse::Schedule> for PySchedule {
    fn from(s: linksparse::Schedule) -> Self {
        Self {
            selected: s.selected.members().to_vec(),
            rounds: s.rounds,
            p2p_messages: s.p2p_messages,
        }
    }
}

#[pyfunction]
fn lgs_schedule(graph: &PyConflictGraph, weights: Vec<f64>) -> PyResult<PySchedule> {
    if weights.len() != graph.inner.n() {
        return Err(PyValueError::new_err("one weight per vertex required"));
    }
    Ok(linksparse::lgs_schedule(&graph.inner, &weights).map_err(to_py)?.into())
}

/// Exact maximum weighted independent set for small graphs.
#[pyfunction]
fn brute_force_mwis(graph: &PyConflictGraph, weights: Vec<f64>) -> PyResult<(Vec<usize>, f64)> {
    let (set, total) = linksparse::brute_force_mwis(&graph.inner, &weights).map_err(to_py)?;
    Ok((set.members().to_vec(), total))
}

#[pyfunction]
fn h_v(u: f64, z0: f64, z1: f64, u_eta: f64) -> f64 {
    linksparse::h_v(u, z0, z1, u_eta)
}

/// Sparse scheduling round: returns `(kept, schedule)` with parent ids.
#[pyfunction]
#[pyo3(signature = (graph, u, u_eta, z0=None, z1=None))]
fn sparse_schedule(
    graph: &PyConflictGraph,
    u: Vec<f64>,
    u_eta: f64,
    z0: Option<Vec<f64>>,
    z1: Option<Vec<f64>>,
) -> PyResult<(Vec<usize>, PySchedule)> {
    let n = graph.inner.n();
    let z = Embeddings {
        z0: z0.unwrap_or_else(|| vec![1.0; n]),
        z1: z1.unwrap_or_else(|| vec![1.0; n]),
    };
    let (s, r) = linksparse::sparse_schedule(&graph.inner, &u, &z, u_eta).map_err(to_py)?;
    Ok((r.keep.members().to_vec(), s.into()))
}

/// Sorted pool of utility samples.
#[pyclass(name = "EmpiricalDistribution")]
pub struct PyEmpiricalDistribution {
    inner: EmpiricalDistribution,
}

#[pymethods]
impl PyEmpiricalDistribution {
    #[new]
    fn new(samples: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: EmpiricalDistribution::new(samples).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EmpiricalDistribution::load(path).map_err(to_py)?,
        })
    }

    fn quantile(&self, eta: f64) -> PyResult<f64> {
        self.inner.quantile(eta).map_err(to_py)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.inner.sample_vec(&mut ChaCha8Rng::seed_from_u64(seed), n)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn sha256(&self) -> String {
        self.inner.hash()
    }
}

/// Featureless GCN producing the per-link multipliers `(z0, z1)`.
#[pyclass(name = "GcnModel")]
pub struct PyGcnModel {
    inner: GcnModel,
}

#[pymethods]
impl PyGcnModel {
    /// Fresh model with layer widths `dims` (first 1, last 2).
    #[new]
    #[pyo3(signature = (dims=vec![1, 2], seed=0))]
    fn new(dims: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: initial_model(&dims, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn single_layer(w0: [f64; 2], w1: [f64; 2]) -> Self {
        Self {
            inner: GcnModel::single_layer(w0, w1),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = Checkpoint::load(path).and_then(|c| c.to_model()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (path, stage=2, stage1_eta=0.95, ecdf_sha256=""))]
    fn save(&self, path: &str, stage: u8, stage1_eta: f64, ecdf_sha256: &str) -> PyResult<()> {
        Checkpoint::from_model(&self.inner, stage, stage1_eta, ecdf_sha256)
            .save(path)
            .map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn z1_calibration(&self) -> f64 {
        self.inner.z1_calibration
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn set_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        if params.len() != self.inner.num_params() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters",
                self.inner.num_params()
            )));
        }
        self.inner.set_params(&params);
        Ok(())
    }

    /// Deployed multipliers `(z0, z1)` for every link of `graph`.
    fn embeddings(&self, graph: &PyConflictGraph) -> (Vec<f64>, Vec<f64>) {
        let z = self.inner.embeddings_for(&graph.inner);
        (z.z0, z.z1)
    }

    /// Sets the `z1` calibration from a list of graphs; returns it.
    fn calibrate(&mut self, graphs: Vec<PyConflictGraph>) -> PyResult<f64> {
        let gs: Vec<_> = graphs.into_iter().map(|g| g.inner).collect();
        calibrate_z1(&mut self.inner, &gs).map_err(to_py)
    }

    /// Two-stage training in place. Returns the mean loss of each epoch.
    #[pyo3(signature = (graphs, ecdf, seed=0, epochs=25))]
    fn train(
        &mut self,
        py: Python<'_>,
        graphs: Vec<PyConflictGraph>,
        ecdf: &PyEmpiricalDistribution,
        seed: u64,
        epochs: usize,
    ) -> PyResult<Vec<f64>> {
        let gs: Vec<_> = graphs.into_iter().map(|g| g.inner).collect();
        let prepared: Vec<_> = gs.iter().cloned().map(PreparedGraph::new).collect();
        let cfg = TrainConfig {
            seed,
            epochs,
            ..TrainConfig::default()
        };
        let dims = self.inner.dims();
        let model = &mut self.inner;
        let log = py
            .detach(|| {
                train_two_stage(model, &prepared, &gs, &ecdf.inner, &cfg, || {
                    initial_model(&dims, seed).expect("dims already validated")
                })
            })
            .map_err(to_py)?;
        Ok(log.into_iter().map(|e| e.mean_loss).collect())
    }

    fn __repr__(&self) -> String {
        format!("GcnModel(dims={:?})", self.inner.dims())
    }
}

/// Quantile sweep over a dataset manifest; returns one dict per row.
#[pyfunction]
#[pyo3(signature = (manifest, ecdf, etas, model=None, seed=0))]
fn quantile_sweep<'py>(
    py: Python<'py>,
    manifest: &str,
    ecdf: &PyEmpiricalDistribution,
    etas: Vec<f64>,
    model: Option<&PyGcnModel>,
    seed: u64,
) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
    let m = DatasetManifest::read(manifest).map_err(to_py)?;
    let base = std::path::Path::new(manifest)
        .parent()
        .unwrap_or(std::path::Path::new("."));
    let graphs = m.load_graphs(base).map_err(to_py)?;
    let instances = test_instances(&m, graphs);
    let rows = experiment_quantile_sweep(model.map(|m| &m.inner), &instances, &ecdf.inner, &etas, seed)
        .map_err(to_py)?;
    rows.into_iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("graph_id", r.graph_id)?;
            d.set_item("V", r.v)?;
            d.set_item("d_bar", r.d_bar)?;
            d.set_item("eta", r.eta)?;
            d.set_item("method", r.method.name())?;
            d.set_item("ar_utility", r.ar_utility)?;
            d.set_item("rr_vertices", r.rr_vertices)?;
            d.set_item("rr_avg_degree", r.rr_avg_degree)?;
            d.set_item("rr_messages", r.rr_messages)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "linksparse")]
fn linksparse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConflictGraph>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyEmpiricalDistribution>()?;
    m.add_class::<PyGcnModel>()?;
    m.add_function(wrap_pyfunction!(lgs_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_mwis, m)?)?;
    m.add_function(wrap_pyfunction!(h_v, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_sweep, m)?)?;
    Ok(())
}
