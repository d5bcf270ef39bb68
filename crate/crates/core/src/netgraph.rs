//! Weighted digraphs, their Laplacians and the spectral data the consensus
//! controllers depend on.
//!
//! Edges are written `(src, dst, weight)` with 1-based node indices and mean
//! that `dst` receives information from `src`, i.e. `a[dst][src] = weight`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::linalg;
use crate::policy::NumericPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({src}, {dst}) is a self-loop")]
    SelfLoop { src: usize, dst: usize },
    #[error("edge ({src}, {dst}) appears more than once")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("edge ({src}, {dst}) references a node outside 1..={n}")]
    BadIndex { src: usize, dst: usize, n: usize },
    #[error("edge ({src}, {dst}) has non-positive or non-finite weight {weight}")]
    BadWeight { src: usize, dst: usize, weight: f64 },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("kernel of the transposed Laplacian has dimension {dim}, expected 1")]
    NullSpaceDegenerate { dim: usize },
}

/// A weighted digraph stored as its adjacency matrix: `weights[(i, j)] > 0`
/// iff node `i` receives from node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    weights: DMatrix<f64>,
}

impl Digraph {
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut weights = DMatrix::zeros(n, n);
        for &(src, dst, weight) in edges {
            if src == 0 || dst == 0 || src > n || dst > n {
                return Err(GraphError::BadIndex { src, dst, n });
            }
            if src == dst {
                return Err(GraphError::SelfLoop { src, dst });
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::BadWeight { src, dst, weight });
            }
            let entry = &mut weights[(dst - 1, src - 1)];
            if *entry != 0.0 {
                return Err(GraphError::DuplicateEdge { src, dst });
            }
            *entry = weight;
        }
        Ok(Self { weights })
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `a_ij`: weight with which node `i` hears node `j` (0-based).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// In-neighbors of node `i` (0-based) with their weights, in index order.
    pub fn in_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.node_count())
            .filter_map(|j| {
                let a = self.weights[(i, j)];
                (a > 0.0).then_some((j, a))
            })
            .collect()
    }

    /// Edges as `(src, dst, weight)`, 1-based, ordered by destination then source.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for dst in 0..n {
            for src in 0..n {
                let w = self.weights[(dst, src)];
                if w > 0.0 {
                    out.push((src + 1, dst + 1, w));
                }
            }
        }
        out
    }

    /// `l_ii = Σ_j a_ij`, `l_ij = -a_ij`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut deg = 0.0;
            for j in 0..n {
                if i != j {
                    deg += self.weights[(i, j)];
                    l[(i, j)] = -self.weights[(i, j)];
                }
            }
            l[(i, i)] = deg;
        }
        l
    }

    /// Kosaraju: DFS finishing order on the graph, then DFS on the reverse
    /// graph from the last-finished node must reach everything.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        // forward adjacency: j -> i when weights[(i, j)] > 0
        let out_adj: Vec<Vec<usize>> = (0..n)
            .map(|j| (0..n).filter(|&i| self.weights[(i, j)] > 0.0).collect())
            .collect();
        let in_adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| self.weights[(i, j)] > 0.0).collect())
            .collect();

        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut stack = vec![(root, 0usize)];
            while let Some((node, next)) = stack.pop() {
                if next < out_adj[node].len() {
                    stack.push((node, next + 1));
                    let child = out_adj[node][next];
                    if !visited[child] {
                        visited[child] = true;
                        stack.push((child, 0));
                    }
                } else {
                    order.push(node);
                }
            }
        }

        let start = *order.last().expect("n >= 1");
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut stack = vec![start];
        let mut count = 1;
        while let Some(node) = stack.pop() {
            for &prev in &in_adj[node] {
                if !seen[prev] {
                    seen[prev] = true;
                    count += 1;
                    stack.push(prev);
                }
            }
        }
        count == n
    }

    pub fn spectral_info(&self, policy: &NumericPolicy) -> Result<SpectralInfo, GraphError> {
        if !self.is_strongly_connected() {
            return Err(GraphError::NotStronglyConnected);
        }
        let n = self.node_count();
        let laplacian = self.laplacian();

        let kernel_dim = {
            let sv = laplacian.transpose().singular_values();
            let scale = sv.max().max(1.0);
            sv.iter()
                .filter(|s| **s <= policy.structural_zero * scale)
                .count()
        };
        if kernel_dim != 1 && n > 1 {
            return Err(GraphError::NullSpaceDegenerate { dim: kernel_dim });
        }

        // [Lᵀ; 1ᵀ] r = [0; 1]
        let mut stacked = DMatrix::zeros(n + 1, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&laplacian.transpose());
        stacked.row_mut(n).fill(1.0);
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let mut r = linalg::min_norm_solve(&stacked, &rhs, 1e-14);
        let total: f64 = r.sum();
        r /= total;

        let r_min = r.min();
        if r_min <= 0.0 {
            return Err(GraphError::NullSpaceDegenerate { dim: kernel_dim });
        }

        let rmat = DMatrix::from_diagonal(&r);
        let sym = (&rmat * &laplacian + laplacian.transpose() * &rmat) * 0.5;
        let sym = (&sym + sym.transpose()) * 0.5;

        let mut eig: Vec<f64> = SymmetricEigen::new(sym.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| a.total_cmp(b));
        let lambda2 = if n == 1 {
            0.0
        } else {
            let zero_idx = eig
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(k, _)| k)
                .expect("n >= 1");
            eig.iter()
                .enumerate()
                .filter(|(k, _)| *k != zero_idx)
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min)
        };

        Ok(SpectralInfo {
            laplacian,
            r,
            r_min,
            lambda2,
            sym_laplacian: sym,
            sym_eigenvalues: eig,
        })
    }
}

/// Laplacian-derived quantities of a strongly connected digraph.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    pub laplacian: DMatrix<f64>,
    /// Positive left null vector of the Laplacian, normalized to sum 1.
    pub r: DVector<f64>,
    pub r_min: f64,
    /// Second-smallest eigenvalue of `(R L + Lᵀ R) / 2`.
    pub lambda2: f64,
    pub sym_laplacian: DMatrix<f64>,
    /// Eigenvalues of `sym_laplacian`, ascending.
    pub sym_eigenvalues: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    pub(crate) fn fig2() -> Digraph {
        Digraph::from_edges(
            4,
            &[(3, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 2, 1.0)],
        )
        .unwrap()
    }

    fn fig5() -> Digraph {
        Digraph::from_edges(
            6,
            &[
                (1, 3, 1.0),
                (2, 1, 1.0),
                (2, 4, 1.0),
                (3, 2, 1.0),
                (4, 5, 1.0),
                (5, 6, 1.0),
                (6, 3, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_cycle() {
        let g = Digraph::from_edges(2, &[(1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
        assert_eq!(g.laplacian(), dmatrix![1.0, -1.0; -1.0, 1.0]);
        assert!(g.is_strongly_connected());
        let s = g.spectral_info(&NumericPolicy::default()).unwrap();
        assert!((s.r[0] - 0.5).abs() < 1e-14 && (s.r[1] - 0.5).abs() < 1e-14);
        assert!((s.lambda2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fig2_laplacian_by_hand() {
        let expected = dmatrix![
            1.0, 0.0, -1.0, 0.0;
            -1.0, 2.0, 0.0, -1.0;
            0.0, -1.0, 1.0, 0.0;
            0.0, 0.0, -1.0, 1.0
        ];
        assert_eq!(fig2().laplacian(), expected);
    }

    #[test]
    fn fig5_laplacian_row3() {
        let l = fig5().laplacian();
        let row: Vec<f64> = l.row(2).iter().copied().collect();
        assert_eq!(row, vec![-1.0, 0.0, 2.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn left_eigenvectors_by_hand() {
        let p = NumericPolicy::default();
        let s2 = fig2().spectral_info(&p).unwrap();
        for (got, want) in s2.r.iter().zip([0.2, 0.2, 0.4, 0.2]) {
            assert!((got - want).abs() < 1e-12);
        }
        let s5 = fig5().spectral_info(&p).unwrap();
        for (got, want) in s5.r.iter().zip([1.0, 2.0, 1.0, 1.0, 1.0, 1.0]) {
            assert!((got - want / 7.0).abs() < 1e-12);
        }
        assert!(fig5().is_strongly_connected());
    }

    #[test]
    fn one_way_edge_is_not_strongly_connected() {
        let g = Digraph::from_edges(2, &[(1, 2, 1.0)]).unwrap();
        assert!(!g.is_strongly_connected());
        assert_eq!(
            g.spectral_info(&NumericPolicy::default()),
            Err(GraphError::NotStronglyConnected)
        );
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            Digraph::from_edges(2, &[(1, 1, 1.0)]),
            Err(GraphError::SelfLoop { src: 1, dst: 1 })
        );
        assert_eq!(
            Digraph::from_edges(2, &[(1, 2, 1.0), (1, 2, 2.0)]),
            Err(GraphError::DuplicateEdge { src: 1, dst: 2 })
        );
        assert_eq!(
            Digraph::from_edges(2, &[(1, 3, 1.0)]),
            Err(GraphError::BadIndex { src: 1, dst: 3, n: 2 })
        );
        assert!(matches!(
            Digraph::from_edges(2, &[(1, 2, -1.0)]),
            Err(GraphError::BadWeight { .. })
        ));
        assert_eq!(Digraph::from_edges(0, &[]), Err(GraphError::Empty));
    }

    #[test]
    fn single_node() {
        let g = Digraph::from_edges(1, &[]).unwrap();
        assert!(g.is_strongly_connected());
        let s = g.spectral_info(&NumericPolicy::default()).unwrap();
        assert_eq!(s.r[0], 1.0);
    }

    #[test]
    fn edges_round_trip() {
        let g = fig5();
        let again = Digraph::from_edges(6, &g.edges()).unwrap();
        assert_eq!(g, again);
    }
}
