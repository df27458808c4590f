//! Synthetic ER dataset recipes and their JSON manifests.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{gen_er, ConflictGraph};

pub const TRAIN_SIZES: [usize; 5] = [100, 150, 200, 250, 300];
pub const TRAIN_DEGREES: [f64; 5] = [2.0, 5.0, 7.5, 10.0, 12.5];
pub const TRAIN_PER_DEGREE_PAIR: usize = 200;
pub const TRAIN_DENSE_SIZES: [usize; 2] = [30, 100];
pub const TRAIN_DENSE_PER_PAIR: usize = 50;
pub const TEST_SIZES: [usize; 5] = [100, 150, 200, 250, 300];
pub const TEST_DEGREES: [f64; 5] = [2.0, 5.0, 10.0, 15.0, 20.0];
pub const TEST_PER_PAIR: usize = 20;
/// Every this-many-th training entry is held out for `z1` calibration.
pub const CALIBRATION_STRIDE: usize = 10;

fn dense_probabilities() -> impl Iterator<Item = f64> {
    (1..=9).map(|k| k as f64 / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    /// Graph file relative to the manifest directory, once written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub n: usize,
    pub p: f64,
    /// Expected average degree `n p`.
    pub d_bar: f64,
    pub m: usize,
    pub seed: u64,
    pub split: Split,
}

impl ManifestEntry {
    pub fn generate(&self) -> Result<ConflictGraph> {
        gen_er(self.n, self.p, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub seed: u64,
    pub scale: f64,
    pub entries: Vec<ManifestEntry>,
}

/// `(n, p, d_bar)` triples to generate.
type Recipe = Vec<(usize, f64, f64)>;

fn scaled(count: usize, scale: f64) -> usize {
    (count as f64 * scale).round() as usize
}

fn training_recipe(scale: f64) -> Recipe {
    let mut out = Vec::new();
    let k = scaled(TRAIN_PER_DEGREE_PAIR, scale);
    for &n in &TRAIN_SIZES {
        for &d in &TRAIN_DEGREES {
            out.extend(std::iter::repeat_n((n, d / n as f64, d), k));
        }
    }
    let k = scaled(TRAIN_DENSE_PER_PAIR, scale);
    for &n in &TRAIN_DENSE_SIZES {
        for p in dense_probabilities() {
            out.extend(std::iter::repeat_n((n, p, n as f64 * p), k));
        }
    }
    out
}

fn test_recipe(scale: f64) -> Recipe {
    let mut out = Vec::new();
    let k = scaled(TEST_PER_PAIR, scale);
    for &n in &TEST_SIZES {
        for &d in &TEST_DEGREES {
            out.extend(std::iter::repeat_n((n, d / n as f64, d), k));
        }
    }
    out
}

fn distinct_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = rng.next_u64();
        if seen.insert(s) {
            out.push(s);
        }
    }
    out
}

fn build(recipe: Recipe, split: Split, seed: u64, scale: f64, max_n: Option<usize>) -> Result<DatasetManifest> {
    if !(scale > 0.0) {
        return Err(Error::param(format!("scale must be positive, got {scale}")));
    }
    let recipe: Recipe = recipe
        .into_iter()
        .filter(|&(n, _, _)| max_n.is_none_or(|cap| n <= cap))
        .collect();
    // training sets get an extra held-out slice drawn from every tenth recipe slot
    let extra: Recipe = match split {
        Split::Train => recipe
            .iter()
            .skip(CALIBRATION_STRIDE - 1)
            .step_by(CALIBRATION_STRIDE)
            .copied()
            .collect(),
        _ => Vec::new(),
    };
    let main_len = recipe.len();
    let all: Recipe = recipe.into_iter().chain(extra).collect();
    let seeds = distinct_seeds(seed, all.len());
    let entries = all
        .into_par_iter()
        .zip(seeds)
        .enumerate()
        .map(|(id, ((n, p, d_bar), s))| {
            let m = gen_er(n, p, s)?.m();
            Ok(ManifestEntry {
                id,
                file: None,
                n,
                p,
                d_bar,
                m,
                seed: s,
                split: if id < main_len { split } else { Split::Calibration },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        split,
        seed,
        scale,
        entries,
    })
}

/// 200 graphs per `(V, d_bar)` over five sizes and five densities, plus 50 per
/// `(V, p)` for `V` in {30, 100} and `p` in {0.1, .., 0.9}; counts scaled by
/// `scale`. A held-out calibration slice repeating every tenth recipe slot is
/// appended with fresh seeds.
pub fn gen_training_set(seed: u64, scale: f64, max_n: Option<usize>) -> Result<DatasetManifest> {
    build(training_recipe(scale), Split::Train, seed, scale, max_n)
}

/// 20 graphs per `(V, d_bar)`, `V` in {100, .., 300}, `d_bar` in {2, 5, 10, 15, 20}.
pub fn gen_test_set(seed: u64, scale: f64, max_n: Option<usize>) -> Result<DatasetManifest> {
    build(test_recipe(scale), Split::Test, seed, scale, max_n)
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Splits `graphs` (aligned with the entries) into the main split and the
    /// held-out calibration slice. Without a calibration slice the main split
    /// doubles as one.
    pub fn partition(&self, graphs: Vec<ConflictGraph>) -> (Vec<ConflictGraph>, Vec<ConflictGraph>) {
        let (mut main, mut calib) = (Vec::new(), Vec::new());
        for (e, g) in self.entries.iter().zip(graphs) {
            if e.split == Split::Calibration {
                calib.push(g);
            } else {
                main.push(g);
            }
        }
        if calib.is_empty() {
            calib = main.clone();
        }
        (main, calib)
    }

    /// Generates every graph in memory.
    pub fn materialize(&self) -> Result<Vec<ConflictGraph>> {
        self.entries.par_iter().map(ManifestEntry::generate).collect()
    }

    /// Writes graph files under `dir/graphs/` and `dir/manifest.json`.
    pub fn write(&mut self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("graphs"))?;
        for e in &mut self.entries {
            let rel = format!("graphs/g{:05}.json", e.id);
            std::fs::write(dir.join(&rel), e.generate()?.to_json())?;
            e.file = Some(rel);
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Loads the graphs a manifest points to, regenerating entries that have
    /// no file, and checks recorded sizes against the contents.
    pub fn load_graphs(&self, base: impl AsRef<Path>) -> Result<Vec<ConflictGraph>> {
        let base = base.as_ref();
        self.entries
            .par_iter()
            .map(|e| {
                let g = match &e.file {
                    Some(f) => ConflictGraph::load(base.join(f))?,
                    None => e.generate()?,
                };
                if g.n() != e.n || g.m() != e.m {
                    return Err(Error::Parse(format!(
                        "graph {} has n = {}, m = {}; manifest says n = {}, m = {}",
                        e.id,
                        g.n(),
                        g.m(),
                        e.n,
                        e.m
                    )));
                }
                Ok(g)
            })
            .collect()
    }

    /// SHA-256 over the entries' generating parameters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.n.to_le_bytes());
            h.update(e.p.to_le_bytes());
            h.update(e.seed.to_le_bytes());
            h.update(e.m.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
