//! Communication graph, Laplacian and the visibility-weighted matrix `H = L + D_v`.
//!
//! Drones are indexed from zero.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

/// Serialized graph description: `{"n": 3, "edges": [[0, 1], ...], "d": [1, 1, 1]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub d: Option<Vec<f64>>,
}

impl GraphSpec {
    /// Complete graph on `n` drones with unit visibility weights.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push([i, j]);
            }
        }
        Self { n, edges, d: None }
    }

    pub fn build(&self) -> Result<DroneGraph, NetworkError> {
        let d = self.d.clone().unwrap_or_else(|| vec![1.0; self.n]);
        DroneGraph::new(self.n, self.edges.iter().map(|e| (e[0], e[1])), d)
    }
}

/// Fixed, undirected, connected drone network.
#[derive(Clone, Debug, PartialEq)]
pub struct DroneGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<BTreeSet<usize>>,
    d: Vec<f64>,
}

impl DroneGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, d: Vec<f64>) -> Result<Self, NetworkError> {
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        if d.len() != n {
            return Err(NetworkError::LengthMismatch {
                expected: n,
                got: d.len(),
            });
        }
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(NetworkError::InvalidWeight { index, value });
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(NetworkError::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(NetworkError::SelfLoop(i, j));
            }
            adjacency[i].insert(j);
            adjacency[j].insert(i);
            set.insert((i.min(j), i.max(j)));
        }
        let graph = Self {
            n,
            edges: set.into_iter().collect(),
            adjacency,
            d,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    pub fn complete(n: usize) -> Result<Self, NetworkError> {
        GraphSpec::complete(n).build()
    }

    fn check_connected(&self) -> Result<(), NetworkError> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(NetworkError::NotConnected(i)),
            None => Ok(()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.d
    }

    pub fn neighbors(&self, i: usize) -> Result<&BTreeSet<usize>, NetworkError> {
        self.adjacency
            .get(i)
            .ok_or(NetworkError::IndexOutOfRange { index: i, n: self.n })
    }

    /// Unit-weight graph Laplacian.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
        }
        for i in 0..self.n {
            l[(i, i)] = self.adjacency[i].len() as f64;
        }
        l
    }

    /// `H = L + diag(d_i v_i)` together with its smallest eigenvalue.
    pub fn h_matrix(&self, visible: &[bool]) -> Result<HMatrix, NetworkError> {
        if visible.len() != self.n {
            return Err(NetworkError::LengthMismatch {
                expected: self.n,
                got: visible.len(),
            });
        }
        let mut h = self.laplacian();
        for (i, &v) in visible.iter().enumerate() {
            if v {
                h[(i, i)] += self.d[i];
            }
        }
        let min_eigenvalue = h.clone().symmetric_eigen().eigenvalues.min();
        Ok(HMatrix {
            matrix: h,
            min_eigenvalue,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HMatrix {
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl HMatrix {
    /// Eigenvalues below this are treated as zero.
    pub const EIGEN_TOLERANCE: f64 = 1e-10;

    pub fn check_positive_definite(&self) -> Result<(), NetworkError> {
        if self.min_eigenvalue > Self::EIGEN_TOLERANCE {
            Ok(())
        } else {
            Err(NetworkError::NotPositiveDefinite {
                min_eigenvalue: self.min_eigenvalue,
            })
        }
    }
}

/// `P^i`: 1 on `(i, i)`, 0.5 on the rest of row and column `i`, 0 elsewhere.
pub fn p_matrix(i: usize, n: usize) -> Result<DMatrix<f64>, NetworkError> {
    if i >= n {
        return Err(NetworkError::IndexOutOfRange { index: i, n });
    }
    Ok(DMatrix::from_fn(n, n, |j, k| match (j == i, k == i) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.5,
        (false, false) => 0.0,
    }))
}
