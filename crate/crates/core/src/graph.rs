//! Undirected, unit-weight communication graphs and their Laplacians.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero by the pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Duplicate pairs collapse to one edge.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
        }
        Ok(Graph { n, edges, adjacency })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges).expect("path edges are valid")
    }

    pub fn ring(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Graph::new(n, &edges).expect("ring edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Graph::new(n, &edges).expect("complete edges are valid")
    }

    /// Random spanning tree plus each remaining pair with probability `extra_edge_fraction`.
    pub fn random_connected(n: usize, extra_edge_fraction: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        for k in 1..n {
            let parent = order[rng.random_range(0..k)];
            let (i, j) = (order[k], parent);
            edges.insert((i.min(j), i.max(j)));
        }
        let frac = extra_edge_fraction.clamp(0.0, 1.0);
        for i in 0..n {
            for j in i + 1..n {
                if !edges.contains(&(i, j)) && rng.random::<f64>() < frac {
                    edges.insert((i, j));
                }
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        Graph::new(n, &edges).expect("generated edges are valid")
    }

    pub fn from_topology(topology: Topology, n: usize, extra_edge_fraction: f64, seed: u64) -> Self {
        match topology {
            Topology::Ring => Graph::ring(n),
            Topology::Path => Graph::path(n),
            Topology::Complete => Graph::complete(n),
            Topology::Random => Graph::random_connected(n, extra_edge_fraction, seed),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Nodes within two hops of `i`, including `i`.
    pub fn two_hop(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::from([i]);
        for &j in &self.adjacency[i] {
            out.insert(j);
            out.extend(self.adjacency[j].iter().copied());
        }
        out
    }

    /// Dense Laplacian: degree on the diagonal, -1 per edge.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// `(L y)_i = sum_{j in N_i} (y_i - y_j)`, using one-hop data only.
    pub fn apply_laplacian(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.laplacian_row(i, y)).collect()
    }

    #[inline]
    pub fn laplacian_row(&self, i: usize, y: &[f64]) -> f64 {
        let yi = y[i];
        self.adjacency[i].iter().map(|&j| yi - y[j]).sum()
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Ascending Laplacian spectrum.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.laplacian()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Moore-Penrose pseudoinverse of `L` via eigendecomposition.
    pub fn pseudo_inverse(&self) -> Result<DMatrix<f64>> {
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        let eig = SymmetricEigen::new(self.laplacian());
        let inv = eig.eigenvalues.map(|lambda| if lambda.abs() < PINV_CUTOFF { 0.0 } else { 1.0 / lambda });
        let q = &eig.eigenvectors;
        Ok(q * DMatrix::from_diagonal(&inv) * q.transpose())
    }

    /// Closed-form auxiliary optimum `y* = -L^+ (p_i x_i)_i + (kappa / n) 1`.
    pub fn y_star(&self, p: &[f64], x: &[f64], kappa: f64) -> Result<Vec<f64>> {
        if p.len() != self.n || x.len() != self.n {
            return Err(Error::Shape(format!("p ({}) and x ({}) must have graph size {}", p.len(), x.len(), self.n)));
        }
        let pinv = self.pseudo_inverse()?;
        let px = DVector::from_iterator(self.n, p.iter().zip(x).map(|(p, x)| p * x));
        let offset = kappa / self.n as f64;
        Ok((-(pinv * px)).iter().map(|v| v + offset).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    Path,
    Complete,
    Random,
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Topology::Ring),
            "path" => Ok(Topology::Path),
            "complete" => Ok(Topology::Complete),
            "random" => Ok(Topology::Random),
            other => Err(Error::Parse(format!("unknown topology `{other}`"))),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Ring => "ring",
            Topology::Path => "path",
            Topology::Complete => "complete",
            Topology::Random => "random",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat())
    }

    #[test]
    fn laplacian_examples() {
        let l = Graph::path(3).laplacian();
        assert_eq!(l, mat(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]]));
        assert_eq!(Graph::complete(2).laplacian(), mat(&[&[1.0, -1.0], &[-1.0, 1.0]]));
        assert_eq!(Graph::new(3, &[]).unwrap().laplacian(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(matches!(Graph::new(3, &[(1, 1)]), Err(Error::InvalidGraph(_))));
        assert!(matches!(Graph::new(3, &[(0, 3)]), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn connectivity_examples() {
        assert!(Graph::path(3).is_connected());
        assert!(!Graph::new(2, &[]).unwrap().is_connected());
        assert!(Graph::complete(5).is_connected());
    }

    #[test]
    fn pseudo_inverse_complete_two() {
        let pinv = Graph::complete(2).pseudo_inverse().unwrap();
        let expected = mat(&[&[0.25, -0.25], &[-0.25, 0.25]]);
        assert!((pinv - expected).abs().max() < 1e-14);
        assert!(matches!(Graph::new(2, &[]).unwrap().pseudo_inverse(), Err(Error::Disconnected)));
    }

    #[test]
    fn pseudo_inverse_defining_property() {
        for seed in 0..20 {
            let g = Graph::random_connected(9, 0.25, seed);
            let l = g.laplacian();
            let pinv = g.pseudo_inverse().unwrap();
            let n = g.n();
            let target = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
            assert!((&l * &pinv - target).abs().max() < 1e-10);
            let ones = DVector::from_element(n, 1.0);
            assert!((&pinv * ones).abs().max() < 1e-10);
        }
    }

    #[test]
    fn y_star_examples() {
        let g = Graph::complete(2);
        let y = g.y_star(&[3.0, 1.0], &[1.0, 0.0], 0.0).unwrap();
        assert!((y[0] + 0.75).abs() < 1e-14 && (y[1] - 0.75).abs() < 1e-14);
        let y = g.y_star(&[3.0, 1.0], &[0.0, 0.0], 0.0).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-15));
        let y = g.y_star(&[3.0, 1.0], &[0.0, 0.0], 2.0).unwrap();
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let ring = Graph::ring(4);
        assert!(matches!(
            Graph::new(3, &[(0, 1)]).unwrap().y_star(&[1.0; 3], &[0.0; 3], 0.0),
            Err(Error::Disconnected)
        ));
        assert!(matches!(ring.y_star(&[1.0; 3], &[0.0; 4], 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn random_graph_examples() {
        let g = Graph::random_connected(1, 0.5, 4);
        assert_eq!(g.n(), 1);
        assert!(g.edges().is_empty());
        for seed in 0..30 {
            assert!(Graph::random_connected(12, 0.1, seed).is_connected());
        }
        assert_eq!(Graph::random_connected(7, 1.0, 9), Graph::complete(7));
        assert_eq!(Graph::random_connected(15, 0.2, 3), Graph::random_connected(15, 0.2, 3));
    }

    #[test]
    fn two_hop_neighbourhood() {
        let g = Graph::path(6);
        assert_eq!(g.two_hop(2), BTreeSet::from([0, 1, 2, 3, 4]));
        assert_eq!(g.two_hop(0), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn topology_parse() {
        assert_eq!("ring".parse::<Topology>().unwrap(), Topology::Ring);
        assert!("star".parse::<Topology>().is_err());
        assert_eq!(Graph::from_topology(Topology::Ring, 2, 0.0, 0), Graph::complete(2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn laplacian_rows_and_columns_sum_to_zero(n in 1usize..15, frac in 0.0f64..1.0, seed in 0u64..1000) {
                let l = Graph::random_connected(n, frac, seed).laplacian();
                for i in 0..n {
                    prop_assert_eq!(l.row(i).sum(), 0.0);
                    prop_assert_eq!(l.column(i).sum(), 0.0);
                }
                prop_assert_eq!(&l, &l.transpose());
            }

            #[test]
            fn connected_graphs_have_positive_fiedler_value(n in 2usize..15, frac in 0.0f64..0.5, seed in 0u64..1000) {
                let spec = Graph::random_connected(n, frac, seed).laplacian_spectrum();
                prop_assert!(spec[0].abs() < 1e-9);
                prop_assert!(spec[1] > 1e-9);
            }

            #[test]
            fn apply_matches_dense(n in 1usize..12, seed in 0u64..500) {
                let g = Graph::random_connected(n, 0.3, seed);
                let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
                let dense = g.laplacian() * DVector::from_column_slice(&y);
                let sparse = g.apply_laplacian(&y);
                for i in 0..n {
                    prop_assert!((dense[i] - sparse[i]).abs() < 1e-12);
                }
            }
        }
    }
}
