//! Conflict graphs: vertices are wireless links, edges mark pairs of links
//! that cannot be active in the same slot.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph with dense ids `0..n` and sorted adjacency lists.
#[derive(Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    adj: Vec<Vec<usize>>,
    m: usize,
}

impl fmt::Debug for ConflictGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConflictGraph")
            .field("n", &self.n())
            .field("m", &self.m)
            .finish()
    }
}

impl ConflictGraph {
    /// Graph on `n` vertices without edges.
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            m: 0,
        }
    }

    /// Builds a graph from an edge list. Duplicate edges are merged; self-loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Parse(format!("edge ({a},{b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::Parse(format!("self-loop on vertex {a}")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut m2 = 0;
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            m2 += list.len();
        }
        Ok(Self { adj, m: m2 / 2 })
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// `2m / n`; zero for the empty vertex set.
    pub fn avg_degree(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            2.0 * self.m as f64 / self.n() as f64
        }
    }

    /// Subgraph induced on `keep`. The returned map sends each subgraph id to
    /// its id in `self`.
    pub fn induced_subgraph(&self, keep: &VertexSet) -> (ConflictGraph, Vec<usize>) {
        let ids = keep.members().to_vec();
        let mut local = vec![usize::MAX; self.n()];
        for (k, &v) in ids.iter().enumerate() {
            local[v] = k;
        }
        let mut m2 = 0;
        let adj: Vec<Vec<usize>> = ids
            .iter()
            .map(|&v| {
                // parent lists are sorted and `local` is monotone on `keep`,
                // so the mapped list stays sorted
                let list: Vec<usize> = self.adj[v]
                    .iter()
                    .filter_map(|&u| (local[u] != usize::MAX).then_some(local[u]))
                    .collect();
                m2 += list.len();
                list
            })
            .collect();
        (ConflictGraph { adj, m: m2 / 2 }, ids)
    }

    /// Relabels vertices: vertex `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<ConflictGraph> {
        if perm.len() != self.n() {
            return Err(Error::param("permutation length does not match vertex count"));
        }
        let edges: Vec<_> = self.edges().map(|(a, b)| (perm[a], perm[b])).collect();
        ConflictGraph::from_edges(self.n(), &edges)
    }

    /// Checks that no edge has both endpoints in `set`; returns the first
    /// offending edge otherwise.
    pub fn find_internal_edge(&self, set: &VertexSet) -> Option<(usize, usize)> {
        for &v in set.members() {
            for &u in &self.adj[v] {
                if u > v && set.contains(u) {
                    return Some((v, u));
                }
            }
        }
        None
    }

    pub fn to_file_format(&self) -> GraphFile {
        GraphFile {
            n: self.n(),
            edges: self.edges().map(|(a, b)| [a, b]).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file_format()).expect("graph serialization is infallible")
    }

    /// Parses either the JSON form `{"n": .., "edges": [[i,j],..]}` or a
    /// whitespace-delimited edge list with an `n m` header line.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let file: GraphFile = serde_json::from_str(text)?;
            let edges: Vec<_> = file.edges.iter().map(|e| (e[0], e[1])).collect();
            ConflictGraph::from_edges(file.n, &edges)
        } else {
            parse_edge_list(text)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

fn parse_edge_list(text: &str) -> Result<ConflictGraph> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty edge list".into()))?;
    let mut fields = header.split_whitespace().map(str::parse::<usize>);
    let (n, m) = match (fields.next(), fields.next(), fields.next()) {
        (Some(Ok(n)), Some(Ok(m)), None) => (n, m),
        _ => return Err(Error::Parse(format!("bad header line {header:?}, expected \"n m\""))),
    };
    let mut edges = Vec::with_capacity(m);
    for line in lines {
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad edge line {line:?}"))))
            .collect::<Result<_>>()?;
        match nums.as_slice() {
            [a, b] => edges.push((*a, *b)),
            _ => return Err(Error::Parse(format!("bad edge line {line:?}"))),
        }
    }
    let g = ConflictGraph::from_edges(n, &edges)?;
    if g.m() != m {
        return Err(Error::Parse(format!("header declares {m} edges, found {}", g.m())));
    }
    Ok(g)
}

/// On-disk graph representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Erdős–Rényi G(n, p): one Bernoulli draw per pair in `(i < j)` order from a
/// ChaCha8 stream seeded with `seed`.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<ConflictGraph> {
    if n == 0 {
        return Err(Error::param("vertex count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    ConflictGraph::from_edges(n, &edges)
}

/// A subset of `0..n`, kept both as a sorted member list and a mask.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct VertexSet {
    members: Vec<usize>,
    mask: Vec<bool>,
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.members).finish()
    }
}

impl VertexSet {
    pub fn empty(n: usize) -> Self {
        Self {
            members: Vec::new(),
            mask: vec![false; n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            members: (0..n).collect(),
            mask: vec![true; n],
        }
    }

    pub fn from_members(n: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; n];
        for v in members {
            if v >= n {
                return Err(Error::param(format!("vertex {v} out of range for n = {n}")));
            }
            mask[v] = true;
        }
        Ok(Self::from_mask(mask))
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        let members = mask
            .iter()
            .enumerate()
            .filter_map(|(v, &b)| b.then_some(v))
            .collect();
        Self { members, mask }
    }

    /// Size of the ground set.
    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.mask.get(v).copied().unwrap_or(false)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// 0/1 indicator vector.
    pub fn indicator(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn complement(&self) -> VertexSet {
        Self::from_mask(self.mask.iter().map(|b| !b).collect())
    }

    /// Sum of `w` over members.
    pub fn total(&self, w: &[f64]) -> f64 {
        self.members.iter().map(|&v| w[v]).sum()
    }

    /// Maps members of a subgraph-local set to parent ids.
    pub fn lift(&self, id_map: &[usize], parent_n: usize) -> VertexSet {
        let mut mask = vec![false; parent_n];
        for &v in &self.members {
            mask[id_map[v]] = true;
        }
        Self::from_mask(mask)
    }
}

/// Sparse `I - D^{-1/2} A D^{-1/2}` in CSR form. Rows and columns of isolated
/// vertices are entirely zero, diagonal included.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl NormalizedLaplacian {
    pub fn new(g: &ConflictGraph) -> Self {
        let n = g.n();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|v| {
                let d = g.degree(v);
                if d == 0 {
                    0.0
                } else {
                    1.0 / (d as f64).sqrt()
                }
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(2 * g.m() + n);
        let mut vals = Vec::with_capacity(2 * g.m() + n);
        row_ptr.push(0);
        for v in 0..n {
            if g.degree(v) > 0 {
                // keep columns sorted: neighbors below v, diagonal, neighbors above v
                let nbrs = g.neighbors(v);
                let split = nbrs.partition_point(|&u| u < v);
                for &u in &nbrs[..split] {
                    cols.push(u);
                    vals.push(-inv_sqrt[v] * inv_sqrt[u]);
                }
                cols.push(v);
                vals.push(1.0);
                for &u in &nbrs[split..] {
                    cols.push(u);
                    vals.push(-inv_sqrt[v] * inv_sqrt[u]);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// Product with a row-major `n x k` dense matrix.
    pub fn matmul(&self, x: &[f64], k: usize) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(x.len(), n * k);
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            let row = &mut out[i * k..(i + 1) * k];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (c, a) = (self.cols[p], self.vals[p]);
                for (o, xv) in row.iter_mut().zip(&x[c * k..(c + 1) * k]) {
                    *o += a * xv;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.cols[p]] = self.vals[p];
            }
        }
        out
    }
}

pub fn normalized_laplacian(g: &ConflictGraph) -> NormalizedLaplacian {
    NormalizedLaplacian::new(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn triangle() -> ConflictGraph {
        ConflictGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn er_extremes() {
        let g = gen_er(2, 1.0, 99).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(gen_er(40, 0.0, 1).unwrap().m(), 0);
        assert_eq!(gen_er(10, 1.0, 1).unwrap().m(), 45);
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(matches!(gen_er(5, 1.5, 0), Err(Error::Param(_))));
        assert!(matches!(gen_er(5, -0.1, 0), Err(Error::Param(_))));
        assert!(matches!(gen_er(0, 0.5, 0), Err(Error::Param(_))));
    }

    #[test]
    fn er_is_deterministic() {
        assert_eq!(gen_er(80, 0.1, 5).unwrap(), gen_er(80, 0.1, 5).unwrap());
        assert_ne!(gen_er(80, 0.1, 5).unwrap(), gen_er(80, 0.1, 6).unwrap());
    }

    #[test]
    fn er_mean_degree_monte_carlo() {
        // E[avg degree] = (n - 1) p = 4.95
        let mean: f64 = (0..1000)
            .map(|s| gen_er(100, 0.05, s).unwrap().avg_degree())
            .sum::<f64>()
            / 1000.0;
        assert!((mean - 4.95).abs() < 0.1, "mean avg degree {mean}");
    }

    #[test]
    fn er_paper_density() {
        let mean: f64 = (0..200)
            .map(|s| gen_er(300, 2.0 / 300.0, s).unwrap().avg_degree())
            .sum::<f64>()
            / 200.0;
        assert!((mean - 2.0).abs() < 0.1, "mean avg degree {mean}");
    }

    #[test]
    fn laplacian_single_edge() {
        let g = ConflictGraph::from_edges(2, &[(0, 1)]).unwrap();
        let l = normalized_laplacian(&g).to_dense();
        assert_eq!(l, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_isolated_vertex_is_zero() {
        let g = ConflictGraph::from_edges(3, &[(0, 1)]).unwrap();
        let l = normalized_laplacian(&g).to_dense();
        assert!(l[2].iter().all(|&x| x == 0.0));
        assert!(l.iter().all(|row| row[2] == 0.0));
    }

    #[test]
    fn laplacian_triangle() {
        let l = normalized_laplacian(&triangle()).to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { -0.5 };
                assert_abs_diff_eq!(l[i][j], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_matmul_matches_matvec() {
        let g = gen_er(30, 0.2, 3).unwrap();
        let l = normalized_laplacian(&g);
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = l.matmul(&x, 2);
        let c0: Vec<f64> = x.iter().step_by(2).copied().collect();
        let c1: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
        let (y0, y1) = (l.matvec(&c0), l.matvec(&c1));
        for i in 0..30 {
            assert_abs_diff_eq!(y[2 * i], y0[i], epsilon = 1e-12);
            assert_abs_diff_eq!(y[2 * i + 1], y1[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn induced_subgraphs() {
        let tri = triangle();
        let (all, map) = tri.induced_subgraph(&VertexSet::full(3));
        assert_eq!(all, tri);
        assert_eq!(map, vec![0, 1, 2]);

        let (sub, map) = tri.induced_subgraph(&VertexSet::from_members(3, [0, 1]).unwrap());
        assert_eq!((sub.n(), sub.m()), (2, 1));
        assert_eq!(map, vec![0, 1]);

        let path = ConflictGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let (sub, map) = path.induced_subgraph(&VertexSet::from_members(3, [0, 2]).unwrap());
        assert_eq!((sub.n(), sub.m()), (2, 0));
        assert_eq!(map, vec![0, 2]);
    }

    #[test]
    fn average_degree() {
        assert_eq!(ConflictGraph::from_edges(2, &[(0, 1)]).unwrap().avg_degree(), 1.0);
        assert_eq!(triangle().avg_degree(), 2.0);
        assert_eq!(ConflictGraph::empty(5).avg_degree(), 0.0);
    }

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        assert!(ConflictGraph::from_edges(3, &[(1, 1)]).is_err());
        assert!(ConflictGraph::from_edges(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn parses_both_file_formats() {
        let g = gen_er(20, 0.3, 11).unwrap();
        assert_eq!(ConflictGraph::parse(&g.to_json()).unwrap(), g);

        let mut text = format!("{} {}\n", g.n(), g.m());
        for (a, b) in g.edges() {
            text.push_str(&format!("{a} {b}\n"));
        }
        assert_eq!(ConflictGraph::parse(&text).unwrap(), g);

        assert!(ConflictGraph::parse("3 2\n0 1\n").is_err());
        assert!(ConflictGraph::parse("3\n0 1\n").is_err());
    }

    #[test]
    fn json_edges_are_sorted() {
        let g = ConflictGraph::from_edges(4, &[(3, 1), (2, 0), (1, 0)]).unwrap();
        assert_eq!(g.to_json(), r#"{"n":4,"edges":[[0,1],[0,2],[1,3]]}"#);
    }
}
