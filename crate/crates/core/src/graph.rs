//! Weighted undirected graphs and the algebraic objects derived from them:
//! Laplacian, signed incidence matrix, their Moore–Penrose pseudoinverses,
//! the centering projector and the algebraic connectivity.
//!
//! Node indices are 0-based here. Edges are enumerated in lexicographic
//! `(i, j)` order with `i < j`, and the tail `i` receives `−√a_ij` in the
//! incidence matrix while the head `j` receives `+√a_ij`. Any other
//! orientation or ordering gives the same `B Bᵀ`, which is all the closed
//! loops depend on.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg::{
    asymmetry, centering_projector, eigen_cutoff, max_abs, max_abs_diff, sorted_symmetric_eigen,
    symmetric_pinv_unchecked,
};

/// Symmetry tolerance for user-supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("negative weight at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize },
    #[error("self loop at node {i}")]
    SelfLoop { i: usize },
    #[error("graph is disconnected: Laplacian has {zero_eigenvalues} zero eigenvalues")]
    Disconnected { zero_eigenvalues: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("edge ({i}, {j}) is out of range for {n} nodes")]
    EdgeOutOfRange { i: usize, j: usize, n: usize },
    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("edge weight must be positive, got {weight} on ({i}, {j})")]
    NonPositiveWeight { i: usize, j: usize, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Endpoint that receives `−√weight` in the incidence matrix.
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// Connected weighted undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    edges: Vec<Edge>,
}

impl Graph {
    /// Validates an adjacency matrix and enumerates its edges.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        let scale = max_abs(&adjacency).max(1.0);
        if let Some((i, j)) = asymmetry(&adjacency, SYMMETRY_TOL * scale) {
            return Err(GraphError::NotSymmetric { i, j });
        }
        for i in 0..rows {
            if adjacency[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop { i });
            }
            for j in 0..rows {
                if adjacency[(i, j)] < 0.0 {
                    return Err(GraphError::NegativeWeight { i, j });
                }
            }
        }
        // Average the two triangles so the stored matrix is exactly symmetric.
        let adjacency = (&adjacency + adjacency.transpose()) * 0.5;
        let mut edges = Vec::new();
        for i in 0..rows {
            for j in (i + 1)..rows {
                let w = adjacency[(i, j)];
                if w > 0.0 {
                    edges.push(Edge {
                        tail: i,
                        head: j,
                        weight: w,
                    });
                }
            }
        }
        let graph = Graph { adjacency, edges };
        let (values, _) = sorted_symmetric_eigen(&graph.laplacian());
        let zeros = count_zero_eigenvalues(&values);
        if zeros != 1 {
            return Err(GraphError::Disconnected {
                zero_eigenvalues: zeros,
            });
        }
        Ok(graph)
    }

    /// Builds a graph from 0-based `(i, j, weight)` triples.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n_nodes == 0 {
            return Err(GraphError::Empty);
        }
        let mut a = DMatrix::zeros(n_nodes, n_nodes);
        for &(i, j, w) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(GraphError::EdgeOutOfRange { i, j, n: n_nodes });
            }
            if i == j {
                return Err(GraphError::SelfLoop { i });
            }
            if !(w > 0.0) {
                return Err(GraphError::NonPositiveWeight { i, j, weight: w });
            }
            if a[(i, j)] != 0.0 {
                return Err(GraphError::DuplicateEdge { i, j });
            }
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        Self::from_adjacency(a)
    }

    /// Complete graph on `n` nodes with uniform weight.
    pub fn complete(n: usize, weight: f64) -> Result<Self, GraphError> {
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { weight });
        Self::from_adjacency(a)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Weighted degrees `Δ_i = Σ_j a_ij`.
    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_nodes(), self.adjacency.row_iter().map(|r| r.sum()))
    }

    /// `L = Δ − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees()) - &self.adjacency
    }

    /// Signed square-root-weighted incidence matrix, `N × E`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n_nodes(), self.n_edges());
        for (g, e) in self.edges.iter().enumerate() {
            let s = e.weight.sqrt();
            b[(e.tail, g)] = -s;
            b[(e.head, g)] = s;
        }
        b
    }

    /// Returns the common weight when every pair of distinct nodes is
    /// joined by an edge of that same weight.
    pub fn complete_uniform_weight(&self) -> Result<f64, CompletenessError> {
        let n = self.n_nodes();
        let expected = n * (n - 1) / 2;
        if self.edges.len() != expected {
            return Err(CompletenessError::NotComplete {
                edges: self.edges.len(),
                expected,
            });
        }
        let a = self.edges.first().map(|e| e.weight).unwrap_or(1.0);
        let tol = 1e-12 * a.abs().max(1.0);
        if let Some(e) = self.edges.iter().find(|e| (e.weight - a).abs() > tol) {
            return Err(CompletenessError::NonUniform {
                first: a,
                other: e.weight,
            });
        }
        Ok(a)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompletenessError {
    #[error("graph is not complete: {edges} edges, complete graph needs {expected}")]
    NotComplete { edges: usize, expected: usize },
    #[error("edge weights are not uniform: {first} vs {other}")]
    NonUniform { first: f64, other: f64 },
}

fn count_zero_eigenvalues(values: &DVector<f64>) -> usize {
    let lmax = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cutoff = eigen_cutoff(lmax);
    values.iter().filter(|v| v.abs() <= cutoff).count()
}

/// Every matrix the controllers and analysis need, computed once per graph.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub laplacian: DMatrix<f64>,
    pub incidence: DMatrix<f64>,
    pub laplacian_pinv: DMatrix<f64>,
    pub incidence_pinv: DMatrix<f64>,
    pub projector: DMatrix<f64>,
    /// Laplacian spectrum, ascending.
    pub eigenvalues: DVector<f64>,
    /// Smallest nonzero Laplacian eigenvalue.
    pub lambda2: f64,
}

impl GraphOperators {
    pub fn new(graph: &Graph) -> Result<Self, GraphError> {
        let laplacian = graph.laplacian();
        let incidence = graph.incidence();
        let (eigenvalues, vectors) = sorted_symmetric_eigen(&laplacian);
        let zeros = count_zero_eigenvalues(&eigenvalues);
        if zeros != 1 {
            return Err(GraphError::Disconnected {
                zero_eigenvalues: zeros,
            });
        }
        let n = graph.n_nodes();
        let mut laplacian_pinv = DMatrix::zeros(n, n);
        for k in 1..n {
            let v = vectors.column(k);
            laplacian_pinv += (v * v.transpose()) / eigenvalues[k];
        }
        let incidence_pinv = incidence.transpose() * &laplacian_pinv;
        let lambda2 = if n > 1 { eigenvalues[1] } else { 0.0 };
        Ok(GraphOperators {
            laplacian,
            incidence,
            laplacian_pinv,
            incidence_pinv,
            projector: centering_projector(n),
            eigenvalues,
            lambda2,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.ncols()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Moore–Penrose pseudoinverse of a symmetric positive semidefinite matrix.
/// Random connected weighted graph on `n ≥ 1` nodes: a random spanning tree
/// plus each remaining pair with probability `extra_edge_prob`, weights
/// uniform on `weights`.
pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, weights: (f64, f64), rng: &mut R) -> Graph {
    let mut a = DMatrix::zeros(n, n);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let w = rng.gen_range(weights.0..=weights.1);
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] == 0.0 && rng.gen_bool(extra_edge_prob) {
                let w = rng.gen_range(weights.0..=weights.1);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    Graph::from_adjacency(a).expect("spanning tree with positive weights")
}

pub fn pseudoinverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, GraphError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let scale = max_abs(m).max(1.0);
    if let Some((i, j)) = asymmetry(m, SYMMETRY_TOL * scale) {
        return Err(GraphError::NotSymmetric { i, j });
    }
    Ok(symmetric_pinv_unchecked(m))
}

/// Outcome of comparing a given incidence matrix with a graph's Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceReport {
    /// `max |B Bᵀ − L|`.
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that a supplied incidence matrix reproduces the graph's
/// Laplacian. Orientation and edge order are free.
pub fn verify_incidence(graph: &Graph, given: &DMatrix<f64>) -> Result<IncidenceReport, GraphError> {
    let (n, e) = (graph.n_nodes(), graph.n_edges());
    if given.shape() != (n, e) {
        return Err(GraphError::DimensionMismatch {
            expected: format!("{n}x{e}"),
            got: format!("{}x{}", given.nrows(), given.ncols()),
        });
    }
    let l = graph.laplacian();
    let residual = max_abs_diff(&(given * given.transpose()), &l);
    let tolerance = 1e-10 * max_abs(&l).max(1.0);
    Ok(IncidenceReport {
        residual,
        tolerance,
        pass: residual <= tolerance,
    })
}

/// Residuals of the identities every connected graph must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResiduals {
    /// `max |L − B Bᵀ|`
    pub laplacian_factorization: f64,
    /// `max |Bᵀ 1|`
    pub incidence_kernel: f64,
    /// `max |L 1|`
    pub laplacian_kernel: f64,
    /// `max |B B⁺ − Π|`
    pub incidence_projector: f64,
    /// `max |L L⁺ − Π|`
    pub laplacian_projector: f64,
    /// `max |Π² − Π|`
    pub projector_idempotent: f64,
}

impl IdentityResiduals {
    pub fn compute(ops: &GraphOperators) -> Self {
        let n = ops.n_nodes();
        let ones = DVector::from_element(n, 1.0);
        let b = &ops.incidence;
        let l = &ops.laplacian;
        let p = &ops.projector;
        IdentityResiduals {
            laplacian_factorization: max_abs_diff(l, &(b * b.transpose())),
            incidence_kernel: (b.transpose() * &ones).amax(),
            laplacian_kernel: (l * &ones).amax(),
            incidence_projector: max_abs_diff(&(b * &ops.incidence_pinv), p),
            laplacian_projector: max_abs_diff(&(l * &ops.laplacian_pinv), p),
            projector_idempotent: max_abs_diff(&(p * p), p),
        }
    }

    pub fn max(&self) -> f64 {
        [
            self.laplacian_factorization,
            self.incidence_kernel,
            self.laplacian_kernel,
            self.incidence_projector,
            self.laplacian_projector,
            self.projector_idempotent,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lbar() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                5.0, -1.0, 0.0, -4.0, -1.0, 14.0, -9.0, -4.0, 0.0, -9.0, 10.0, -1.0, -4.0, -4.0, -1.0, 9.0,
            ],
        )
    }

    fn adjacency_from_laplacian(l: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(l.nrows(), l.ncols(), |i, j| if i == j { 0.0 } else { -l[(i, j)] })
    }

    #[test]
    fn two_node_graph() {
        let g = Graph::from_adjacency(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(
            g.edges()[0],
            Edge {
                tail: 0,
                head: 1,
                weight: 1.0
            }
        );
        let ops = GraphOperators::new(&g).unwrap();
        assert_eq!(ops.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(ops.incidence, DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]));
        assert_abs_diff_eq!(ops.lambda2, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn section_six_sparse_graph() {
        let a = adjacency_from_laplacian(&(lbar() * 0.09));
        let g = Graph::from_adjacency(a).unwrap();
        assert_eq!(g.n_edges(), 5);
        // lexicographic: (1,2) (1,4) (2,3) (2,4) (3,4)
        let expected = [0.09, 0.36, 0.81, 0.36, 0.09];
        for (e, w) in g.edges().iter().zip(expected) {
            assert_abs_diff_eq!(e.weight, w, epsilon = 1e-15);
        }
        let mut sorted: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
        sorted.sort_by(f64::total_cmp);
        let mut spec = vec![0.09, 0.36, 0.81, 0.09, 0.36];
        spec.sort_by(f64::total_cmp);
        for (x, y) in sorted.iter().zip(&spec) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
        let ops = GraphOperators::new(&g).unwrap();
        // 30-digit reference eigensolve: 0.398860048757089200847...
        assert_abs_diff_eq!(ops.lambda2, 0.398_860_048_757_089_2, epsilon = 1e-12);
        assert!(IdentityResiduals::compute(&ops).max() < 1e-10);
    }

    #[test]
    fn complete_k4_is_four_times_projector() {
        let g = Graph::complete(4, 1.0).unwrap();
        assert_eq!(g.n_edges(), 6);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
        let ops = GraphOperators::new(&g).unwrap();
        assert!(max_abs_diff(&ops.laplacian, &(centering_projector(4) * 4.0)) < 1e-14);
        assert_abs_diff_eq!(ops.lambda2, 4.0, epsilon = 1e-12);
        assert_eq!(g.complete_uniform_weight(), Ok(1.0));
    }

    #[test]
    fn build_graph_errors() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(
            Graph::from_adjacency(asym),
            Err(GraphError::NotSymmetric { .. })
        ));
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(matches!(
            Graph::from_adjacency(neg),
            Err(GraphError::NegativeWeight { .. })
        ));
        let looped = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(Graph::from_adjacency(looped), Err(GraphError::SelfLoop { i: 0 }));
        let split = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
            ],
        );
        assert_eq!(
            Graph::from_adjacency(split),
            Err(GraphError::Disconnected { zero_eigenvalues: 2 })
        );
        assert!(matches!(
            Graph::from_adjacency(DMatrix::zeros(2, 3)),
            Err(GraphError::NotSquare { .. })
        ));
    }

    #[test]
    fn paper_incidences_reproduce_laplacians() {
        let bbar = DMatrix::from_row_slice(
            4,
            5,
            &[
                1.0, 0.0, 0.0, 0.0, 2.0, -1.0, 3.0, 2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 1.0, 0.0, 0.0, 0.0, -2.0, -1.0, -2.0,
            ],
        );
        let g = Graph::from_adjacency(adjacency_from_laplacian(&(lbar() * 0.09))).unwrap();
        assert!(verify_incidence(&g, &(bbar * 0.3)).unwrap().pass);

        let b4 = DMatrix::from_row_slice(
            4,
            6,
            &[
                1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0,
                -1.0, -1.0, 0.0, -1.0,
            ],
        );
        let k4 = Graph::complete(4, 1.0).unwrap();
        assert!(verify_incidence(&k4, &b4).unwrap().pass);

        let mut flipped = b4.clone();
        flipped.column_mut(2).neg_mut();
        assert!(verify_incidence(&k4, &flipped).unwrap().pass);

        assert!(matches!(
            verify_incidence(&k4, &DMatrix::zeros(4, 5)),
            Err(GraphError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pseudoinverse_examples() {
        assert_eq!(pseudoinverse(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::zeros(3, 3));
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!(max_abs_diff(&pseudoinverse(&l).unwrap(), &expected) < 1e-14);

        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let ops = GraphOperators::new(&g).unwrap();
        let b_pinv = DMatrix::from_row_slice(1, 2, &[-0.5, 0.5]);
        assert!(max_abs_diff(&ops.incidence_pinv, &b_pinv) < 1e-14);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(pseudoinverse(&bad), Err(GraphError::NotSymmetric { .. })));
    }

    #[test]
    fn complete_uniform_detection() {
        let path = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(matches!(
            path.complete_uniform_weight(),
            Err(CompletenessError::NotComplete { .. })
        ));
        let tri = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2.0)]).unwrap();
        assert!(matches!(
            tri.complete_uniform_weight(),
            Err(CompletenessError::NonUniform { .. })
        ));
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!(
            Graph::from_edges(2, &[(0, 2, 1.0)]),
            Err(GraphError::EdgeOutOfRange { .. })
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 0.0)]),
            Err(GraphError::NonPositiveWeight { .. })
        ));
    }
}
