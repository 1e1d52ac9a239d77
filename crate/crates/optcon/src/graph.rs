//! Weighted digraphs, their Laplacians, and the spectral quantities that
//! drive gain selection.
//!
//! Conventions: nodes are indexed `0..n`; the adjacency weight `a[(i, j)]`
//! is positive exactly when information flows from node `j` to node `i`
//! (edge `j -> i`), and the in-degree Laplacian is `L = D_in - A`.  The
//! coordination layer only relies on graphs that are weight-balanced and
//! strongly connected, so the spectral routine checks both before it
//! reports anything.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance used for the weight-balance check and for deciding that the
/// smallest symmetrized-Laplacian eigenvalue is numerically zero.
const BALANCE_TOL: f64 = 1e-9;

/// A weighted directed graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    n: usize,
    weights: DMatrix<f64>,
}

/// The two eigenvalues of `(L + L^T) / 2` that bound the coordination
/// gains: the algebraic connectivity `lambda2` and the largest eigenvalue
/// `lambda_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralInfo {
    pub lambda2: f64,
    pub lambda_n: f64,
}

impl Digraph {
    /// Builds a digraph from `(from, to, weight)` edges.  Weights must be
    /// positive and finite, self-loops are rejected, and listing the same
    /// edge twice overwrites the earlier weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights = DMatrix::zeros(n, n);
        for &(from, to, w) in edges {
            let reason = if from >= n || to >= n {
                Some("node index out of range")
            } else if from == to {
                Some("self-loops are not allowed")
            } else if !w.is_finite() {
                Some("weight must be finite")
            } else if w <= 0.0 {
                Some("weight must be positive")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(Error::InvalidEdge {
                    from,
                    to,
                    weight: w,
                    reason,
                });
            }
            weights[(to, from)] = w;
        }
        Ok(Self { n, weights })
    }

    /// Wraps an adjacency matrix directly (row `i`, column `j` holds the
    /// weight of edge `j -> i`).  The matrix must be square with zero
    /// diagonal and non-negative finite entries.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "adjacency matrix columns",
                expected: n,
                got: weights.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                let reason = if !w.is_finite() {
                    Some("weight must be finite")
                } else if w < 0.0 {
                    Some("weight must be non-negative")
                } else if i == j && w != 0.0 {
                    Some("self-loops are not allowed")
                } else {
                    None
                };
                if let Some(reason) = reason {
                    return Err(Error::InvalidEdge {
                        from: j,
                        to: i,
                        weight: w,
                        reason,
                    });
                }
            }
        }
        Ok(Self { n, weights })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Adjacency weights; `weights()[(i, j)]` is the gain node `i` applies
    /// to information received from node `j`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weighted in-degree of every node (row sums of the adjacency).
    pub fn in_degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.weights.row(i).sum()).collect()
    }

    /// Weighted out-degree of every node (column sums of the adjacency).
    pub fn out_degrees(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.weights.column(j).sum()).collect()
    }

    /// In-degree Laplacian `L = D_in - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for (i, d) in self.in_degrees().into_iter().enumerate() {
            l[(i, i)] += d;
        }
        l
    }

    /// True when every node's in-degree matches its out-degree within a
    /// small absolute tolerance, i.e. `1^T L = 0`.
    pub fn is_weight_balanced(&self) -> bool {
        self.worst_imbalance().1 <= BALANCE_TOL
    }

    fn worst_imbalance(&self) -> (usize, f64) {
        let din = self.in_degrees();
        let dout = self.out_degrees();
        let mut worst = (0, 0.0);
        for i in 0..self.n {
            let gap = (din[i] - dout[i]).abs();
            if gap > worst.1 {
                worst = (i, gap);
            }
        }
        worst
    }

    /// True when every node can reach every other node along directed
    /// edges.  A single node counts as strongly connected.
    pub fn is_strongly_connected(&self) -> bool {
        self.first_unreachable().is_none()
    }

    /// Node 0 must reach everyone and be reachable from everyone; returns
    /// the first node violating either direction.
    fn first_unreachable(&self) -> Option<usize> {
        if self.n == 0 {
            return None;
        }
        let forward = self.reachable_from(0, false);
        let backward = self.reachable_from(0, true);
        (0..self.n).find(|&i| !forward[i] || !backward[i])
    }

    /// Breadth-first reachability from `start`; `reversed` walks edges
    /// backwards.  Edge `j -> i` exists when `weights[(i, j)] > 0`.
    fn reachable_from(&self, start: usize, reversed: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(a) = queue.pop_front() {
            for b in 0..self.n {
                let w = if reversed {
                    self.weights[(a, b)]
                } else {
                    self.weights[(b, a)]
                };
                if w > 0.0 && !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        seen
    }

    /// Checks the standing connectivity assumptions, naming the one that
    /// failed.
    pub fn check_assumptions(&self) -> Result<()> {
        let (node, imbalance) = self.worst_imbalance();
        if imbalance > BALANCE_TOL {
            return Err(Error::NotWeightBalanced { node, imbalance });
        }
        if let Some(unreachable) = self.first_unreachable() {
            return Err(Error::NotStronglyConnected { unreachable });
        }
        Ok(())
    }

    /// Eigenvalue bounds of the symmetrized Laplacian `(L + L^T) / 2`.
    ///
    /// Requires a weight-balanced, strongly connected graph with at least
    /// two nodes; under those assumptions the smallest eigenvalue is zero
    /// (checked, as a guard against numerical trouble) and the returned
    /// `lambda2` is strictly positive.
    pub fn sym_spectrum(&self) -> Result<SpectralInfo> {
        if self.n < 2 {
            return Err(Error::DimensionMismatch {
                what: "nodes for spectral analysis",
                expected: 2,
                got: self.n,
            });
        }
        self.check_assumptions()?;
        let l = self.laplacian();
        let sym = (&l + l.transpose()) * 0.5;
        let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        if eigs[0].abs() > 1e-10 {
            return Err(Error::SpectrumResidual { lambda1: eigs[0] });
        }
        Ok(SpectralInfo {
            lambda2: eigs[1],
            lambda_n: eigs[self.n - 1],
        })
    }

    /// The induced subgraph on all nodes except `node` (used to inspect
    /// what remains after a node is cut off).
    pub fn without_node(&self, node: usize) -> Result<Self> {
        if node >= self.n {
            return Err(Error::DimensionMismatch {
                what: "node index",
                expected: self.n,
                got: node,
            });
        }
        let keep: Vec<usize> = (0..self.n).filter(|&i| i != node).collect();
        let mut weights = DMatrix::zeros(self.n - 1, self.n - 1);
        for (bi, &i) in keep.iter().enumerate() {
            for (bj, &j) in keep.iter().enumerate() {
                weights[(bi, bj)] = self.weights[(i, j)];
            }
        }
        Self::from_weights(weights)
    }
}
