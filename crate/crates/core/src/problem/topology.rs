use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected, connected communication graph with a symmetric doubly
/// stochastic weight matrix `W` and its Laplacian `L` (`l_ii = Σ_{j≠i} w_ij`,
/// `l_ij = −w_ij`).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    edge_weights: Vec<f64>,
    /// Per agent, `(j, w_ij)` in ascending `j`.
    neighbors: Vec<Vec<(usize, f64)>>,
    weights: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

fn normalize_edges(n: usize, adjacency: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut set = BTreeSet::new();
    for &(i, j) in adjacency {
        if i >= n || j >= n {
            return Err(Error::Topology(format!(
                "edge ({i}, {j}) out of range for {n} agents"
            )));
        }
        if i == j {
            return Err(Error::Topology(format!("self loop on agent {i}")));
        }
        set.insert((i.min(j), i.max(j)));
    }
    Ok(set.into_iter().collect())
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Metropolis–Hastings weights: `w_ij = 1/(1 + max(deg_i, deg_j))` on edges,
/// `w_ii = 1 − Σ_{j≠i} w_ij`.
pub fn metropolis_weights(n: usize, adjacency: &[(usize, usize)]) -> Result<Topology> {
    let edges = normalize_edges(n, adjacency)?;
    let mut degree = vec![0usize; n];
    for &(i, j) in &edges {
        degree[i] += 1;
        degree[j] += 1;
    }
    let weights: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| 1.0 / (1 + degree[i].max(degree[j])) as f64)
        .collect();
    Topology::from_weighted_edges(n, &edges, &weights)
}

impl Topology {
    /// Builds a topology from explicit symmetric edge weights; the diagonal of
    /// `W` is completed so rows sum to one.
    pub fn from_weighted_edges(
        n: usize,
        edges: &[(usize, usize)],
        edge_weights: &[f64],
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::Topology("empty graph".into()));
        }
        if edges.len() != edge_weights.len() {
            return Err(Error::Topology(format!(
                "{} edges but {} weights",
                edges.len(),
                edge_weights.len()
            )));
        }
        let mut pairs: Vec<((usize, usize), f64)> = Vec::with_capacity(edges.len());
        for (&(i, j), &w) in edges.iter().zip(edge_weights) {
            if i >= n || j >= n || i == j {
                return Err(Error::Topology(format!("invalid edge ({i}, {j})")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Topology(format!(
                    "edge ({i}, {j}) weight must be positive, got {w}"
                )));
            }
            pairs.push(((i.min(j), i.max(j)), w));
        }
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Topology("duplicate edge".into()));
        }
        let edges: Vec<(usize, usize)> = pairs.iter().map(|p| p.0).collect();
        let edge_weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if !is_connected(n, &edges) {
            return Err(Error::Topology("graph is disconnected".into()));
        }

        let mut neighbors = vec![Vec::new(); n];
        for (&(i, j), &w) in edges.iter().zip(&edge_weights) {
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }

        let mut weights = DMatrix::zeros(n, n);
        let mut laplacian = DMatrix::zeros(n, n);
        for (i, list) in neighbors.iter().enumerate() {
            let mut off = 0.0;
            for &(j, w) in list {
                weights[(i, j)] = w;
                laplacian[(i, j)] = -w;
                off += w;
            }
            let diag = 1.0 - off;
            if diag < -STOCHASTIC_TOL {
                return Err(Error::Topology(format!(
                    "agent {i}: off-diagonal weights sum to {off} > 1"
                )));
            }
            weights[(i, i)] = diag;
            laplacian[(i, i)] = off;
        }

        Ok(Self {
            n,
            edges,
            edge_weights,
            neighbors,
            weights,
            laplacian,
        })
    }

    /// Ring `0–1–…–(n−1)–0`; for `n = 2` the ring is a single edge.
    pub fn ring_edges(n: usize) -> Vec<(usize, usize)> {
        match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// `Σ_j w_ij (v_i − v_j)` for agent `i`, accumulated in ascending `j`.
    pub fn local_difference(&self, i: usize, values: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(values[i].len());
        for &(j, w) in &self.neighbors[i] {
            acc += w * (&values[i] - &values[j]);
        }
        acc
    }

    /// Applies `L ⊗ I` to a per-agent list of vectors.
    pub fn laplacian_apply(&self, values: &[DVector<f64>]) -> Vec<DVector<f64>> {
        (0..self.n).map(|i| self.local_difference(i, values)).collect()
    }

    /// Eigenvalues of `L` in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut eig: Vec<f64> = self
            .laplacian
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        eig
    }
}
