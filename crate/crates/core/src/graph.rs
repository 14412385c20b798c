//! Graph-derived matrices and spectral objects for an undirected
//! communication topology: incidence, Laplacian and its pseudoinverse, the
//! edge Laplacian, the projected edge matrix, and the orthogonal transform
//! that splits edge space into cycle and tree-like parts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance under which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIG_TOL: f64 = 1e-9;

/// An undirected graph over nodes `1..=node_count` given as an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    connected: bool,
}

impl NetworkGraph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as entered (1-based node indices).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// True when the graph has exactly `node_count - 1` edges (and is
    /// connected), i.e. the edge space has no cycle part.
    pub fn is_spanning_tree(&self) -> bool {
        self.connected && self.edges.len() == self.node_count - 1
    }

    /// Complete graph on `n` nodes, edges ordered lexicographically.
    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in (i + 1)..=n {
                edges.push((i, j));
            }
        }
        build_graph(n, &edges)
    }

    /// Path graph 1-2-...-n.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        build_graph(n, &edges)
    }
}

/// Validate an edge list and record connectivity.
///
/// Rejects self-loops, out-of-range node indices and duplicate edges
/// (regardless of orientation). Disconnected graphs are accepted here and
/// only refused once spectral data is requested.
pub fn build_graph(node_count: usize, edges: &[(usize, usize)]) -> Result<NetworkGraph> {
    if node_count < 2 {
        return Err(Error::DegenerateGraph);
    }
    let mut seen = std::collections::HashSet::new();
    for &(i, j) in edges {
        if i == j {
            return Err(Error::InvalidEdge(format!("self-loop at node {i}")));
        }
        if i < 1 || i > node_count || j < 1 || j > node_count {
            return Err(Error::InvalidEdge(format!(
                "edge ({i}, {j}) out of range 1..={node_count}"
            )));
        }
        let key = (i.min(j), i.max(j));
        if !seen.insert(key) {
            return Err(Error::InvalidEdge(format!("duplicate edge ({i}, {j})")));
        }
    }

    // Connectivity by union-find.
    let mut parent: Vec<usize> = (0..node_count).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in edges {
        let (ri, rj) = (find(&mut parent, i - 1), find(&mut parent, j - 1));
        if ri != rj {
            parent[ri] = rj;
        }
    }
    let root = find(&mut parent, 0);
    let connected = (1..node_count).all(|x| find(&mut parent, x) == root);

    Ok(NetworkGraph {
        node_count,
        edges: edges.to_vec(),
        connected,
    })
}

/// Dense matrices derived from the incidence structure.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    /// Incidence matrix, `node_count x edge_count`. Each edge is oriented
    /// from its lower to its higher node index: +1 at the tail, -1 at the
    /// head. Column order follows the input edge order.
    pub incidence: DMatrix<f64>,
    /// Laplacian `L = E Eᵀ`.
    pub laplacian: DMatrix<f64>,
    /// Moore-Penrose pseudoinverse of the Laplacian.
    pub pseudoinverse: DMatrix<f64>,
    /// Edge Laplacian `EᵀE`.
    pub edge_laplacian: DMatrix<f64>,
    /// Projected edge matrix `Eᵀ L† E`; eigenvalues lie in {0, 1}.
    pub lbar: DMatrix<f64>,
}

impl GraphMatrices {
    pub fn node_count(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.incidence.ncols()
    }
}

/// Build incidence, Laplacian, pseudoinverse, edge Laplacian and the
/// projected edge matrix for a validated graph.
pub fn graph_matrices(graph: &NetworkGraph) -> GraphMatrices {
    let n = graph.node_count();
    let m = graph.edge_count();
    let mut incidence = DMatrix::zeros(n, m);
    for (col, &(i, j)) in graph.edges().iter().enumerate() {
        let (lo, hi) = (i.min(j), i.max(j));
        incidence[(lo - 1, col)] = 1.0;
        incidence[(hi - 1, col)] = -1.0;
    }
    let laplacian = &incidence * incidence.transpose();
    let pseudoinverse = linalg::symmetric_pseudoinverse(&laplacian, ZERO_EIG_TOL);
    let edge_laplacian = incidence.transpose() * &incidence;
    let lbar = incidence.transpose() * &pseudoinverse * &incidence;
    GraphMatrices {
        incidence,
        laplacian,
        pseudoinverse,
        edge_laplacian,
        lbar,
    }
}

/// Spectral objects of a connected graph: Laplacian eigen-data and the
/// orthogonal edge-space transform `U = [U1, U2]`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// All Laplacian eigenvalues, ascending (first is zero).
    pub lambda: Vec<f64>,
    /// Orthogonal eigenvector matrix of the Laplacian; first column is
    /// `1/sqrt(N) * ones`.
    pub v: DMatrix<f64>,
    /// Columns 2..N of `v` (eigenvectors of the nonzero eigenvalues).
    pub v2: DMatrix<f64>,
    /// Nonzero Laplacian eigenvalues (diagonal of the mode matrix).
    pub gamma: DVector<f64>,
    /// Orthogonal edge-space transform, `edge_count x edge_count`.
    pub u: DMatrix<f64>,
    /// Basis of the cycle space (null space of the incidence matrix);
    /// `edge_count x (edge_count - node_count + 1)`, possibly 0 columns.
    pub u1: DMatrix<f64>,
    /// Tree-like part, `Eᵀ V2 Γ^(-1/2)`; `edge_count x (node_count - 1)`.
    pub u2: DMatrix<f64>,
}

impl SpectralData {
    /// Algebraic connectivity (smallest nonzero Laplacian eigenvalue).
    pub fn lambda2(&self) -> f64 {
        self.gamma[0]
    }

    /// Largest Laplacian eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        self.gamma[self.gamma.len() - 1]
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.gamma)
    }

    /// Nonzero eigenvalues `lambda_2..lambda_N` as a list.
    pub fn nonzero_eigenvalues(&self) -> Vec<f64> {
        self.gamma.iter().copied().collect()
    }
}

/// Compute eigen-data and the edge-space transform.
///
/// Fails with `Disconnected` when the second-smallest Laplacian eigenvalue
/// falls below the zero tolerance. The returned transform is validated:
/// `UᵀU = I` to 1e-9, `U₂ᵀ L_e U₂ = Γ` to 1e-8, and the {0, 1} spectrum of
/// the projected edge matrix together with the Laplacian/edge-Laplacian
/// eigenvalue match to 1e-8.
pub fn spectral_data(mats: &GraphMatrices) -> Result<SpectralData> {
    let n = mats.node_count();
    let m = mats.edge_count();

    let (values, mut vectors) = linalg::sorted_symmetric_eigen(&mats.laplacian);
    let lambda_max = values[n - 1];
    let cutoff = ZERO_EIG_TOL * 1.0_f64.max(lambda_max);
    let lambda2 = values[1];
    if lambda2 <= cutoff {
        return Err(Error::Disconnected { lambda2 });
    }

    // The zero eigenvector is fixed to the positive uniform vector rather
    // than whatever the eigensolver returned.
    let uniform = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    vectors.set_column(0, &uniform);

    let v2 = vectors.columns(1, n - 1).into_owned();
    let gamma = DVector::from_iterator(n - 1, values.iter().skip(1).copied());

    let gamma_inv_sqrt =
        DMatrix::from_diagonal(&DVector::from_iterator(n - 1, gamma.iter().map(|g| 1.0 / g.sqrt())));
    let u2 = mats.incidence.transpose() * &v2 * gamma_inv_sqrt;

    // Cycle-space basis: eigenvectors of the edge Laplacian at eigenvalue
    // zero (the right-singular directions of E with zero singular value).
    let cycle_dim = m - (n - 1);
    let u1 = if cycle_dim == 0 {
        DMatrix::zeros(m, 0)
    } else {
        let (le_values, le_vectors) = linalg::sorted_symmetric_eigen(&mats.edge_laplacian);
        let le_cutoff = ZERO_EIG_TOL * 1.0_f64.max(le_values[m - 1]);
        let zero_count = le_values.iter().filter(|v| v.abs() <= le_cutoff).count();
        if zero_count != cycle_dim {
            return Err(Error::NumericalFailure(format!(
                "edge Laplacian null space has dimension {zero_count}, expected {cycle_dim}"
            )));
        }
        le_vectors.columns(0, cycle_dim).into_owned()
    };

    let mut u = DMatrix::zeros(m, m);
    u.columns_mut(0, cycle_dim).copy_from(&u1);
    u.columns_mut(cycle_dim, n - 1).copy_from(&u2);

    let data = SpectralData {
        lambda: values.iter().copied().collect(),
        v: vectors,
        v2,
        gamma,
        u,
        u1,
        u2,
    };
    validate_spectral(mats, &data)?;
    Ok(data)
}

fn validate_spectral(mats: &GraphMatrices, data: &SpectralData) -> Result<()> {
    let m = mats.edge_count();
    let n = mats.node_count();

    let ortho = linalg::max_abs_diff(&(data.u.transpose() * &data.u), &DMatrix::identity(m, m));
    if ortho > 1e-9 {
        return Err(Error::NumericalFailure(format!(
            "edge transform not orthogonal: deviation {ortho:.3e}"
        )));
    }

    let mode = data.u2.transpose() * &mats.edge_laplacian * &data.u2;
    let mode_err = linalg::max_abs_diff(&mode, &data.gamma_matrix());
    if mode_err > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "U2ᵀ Le U2 deviates from the mode matrix by {mode_err:.3e}"
        )));
    }

    // Spectrum of the projected edge matrix: zeros then ones.
    let lbar_eigs = linalg::symmetric_eigenvalues(&mats.lbar);
    for (idx, &ev) in lbar_eigs.iter().enumerate() {
        let target = if idx < m - (n - 1) { 0.0 } else { 1.0 };
        if (ev - target).abs() > 1e-8 {
            return Err(Error::NumericalFailure(format!(
                "projected edge matrix eigenvalue {ev:.12} not in {{0, 1}}"
            )));
        }
    }

    // Nonzero eigenvalues of the edge Laplacian match those of the Laplacian.
    let le_eigs = linalg::symmetric_eigenvalues(&mats.edge_laplacian);
    let le_nonzero: Vec<f64> = le_eigs.iter().copied().skip(m - (n - 1)).collect();
    for (a, b) in le_nonzero.iter().zip(data.gamma.iter()) {
        if (a - b).abs() > 1e-8 {
            return Err(Error::NumericalFailure(format!(
                "edge Laplacian eigenvalue {a:.12} does not match Laplacian eigenvalue {b:.12}"
            )));
        }
    }
    Ok(())
}
