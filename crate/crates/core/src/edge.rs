//! Relative-state (edge) dynamics: the stacked difference state, the
//! orthogonal edge-space transform, the distributed consensus input and its
//! reduced-system counterpart, and the trajectory equivalence check between
//! the full multi-agent system and the reduced subsystem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{GraphMatrices, SpectralData};
use crate::linalg;
use crate::sector::ChannelBank;
use crate::sim;

const EIG_REAL_TOL: f64 = 1e-9;

/// A single agent's linear dynamics `xdot = A x + B u`.
#[derive(Debug, Clone)]
pub struct AgentDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl AgentDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "state matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "input matrix has {} rows, state dimension is {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "state and input dimensions must be positive".into(),
            ));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Check stabilizability and the closed-left-half-plane condition on the
    /// open-loop spectrum. Violations are reported, not enforced: an
    /// unworkable pair surfaces again as LMI infeasibility.
    pub fn assumption_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let n = self.state_dim();

        let eigs = self.a.clone().complex_eigenvalues();
        if eigs.iter().any(|e| e.re > EIG_REAL_TOL) {
            warnings.push(
                "state matrix has eigenvalues in the open right half-plane".to_string(),
            );
        }

        // Controllability subspace via the staircase of [B, AB, ..., A^(n-1)B];
        // uncontrollable modes must be strictly stable.
        let mut ctrb = DMatrix::zeros(n, n * self.input_dim());
        let mut block = self.b.clone();
        for p in 0..n {
            ctrb.columns_mut(p * self.input_dim(), self.input_dim())
                .copy_from(&block);
            block = &self.a * block;
        }
        let svd = ctrb.svd(true, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-9 * 1.0_f64.max(smax))
            .count();
        if rank < n {
            let u = svd.u.as_ref().unwrap();
            let complement = u.columns(rank, n - rank);
            let a_unc = complement.transpose() * &self.a * complement;
            let unc_eigs = a_unc.complex_eigenvalues();
            if unc_eigs.iter().any(|e| e.re >= -EIG_REAL_TOL) {
                warnings.push("pair (A, B) is not stabilizable".to_string());
            }
        }
        warnings
    }
}

/// Stacked relative state `z = (Eᵀ ⊗ I_n) x`: block `j` is the difference
/// of the two agent states joined by edge `j`, tail minus head.
pub fn edge_state(x: &DVector<f64>, incidence: &DMatrix<f64>, n: usize) -> Result<DVector<f64>> {
    let (node_count, edge_count) = incidence.shape();
    if x.len() != node_count * n {
        return Err(Error::DimensionMismatch(format!(
            "state length {} != node_count {} * state_dim {}",
            x.len(),
            node_count,
            n
        )));
    }
    let mut z = DVector::zeros(edge_count * n);
    for j in 0..edge_count {
        for i in 0..node_count {
            let w = incidence[(i, j)];
            if w != 0.0 {
                for k in 0..n {
                    z[j * n + k] += w * x[i * n + k];
                }
            }
        }
    }
    Ok(z)
}

/// Apply `(Uᵀ ⊗ I_n)` to a stacked edge vector and split the result into
/// the cycle part (first `cycle_dim` blocks) and the tree-like part.
pub fn transform_edge_state(
    z: &DVector<f64>,
    u: &DMatrix<f64>,
    cycle_dim: usize,
    n: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = u.nrows();
    if u.ncols() != m {
        return Err(Error::DimensionMismatch("edge transform must be square".into()));
    }
    if z.len() != m * n {
        return Err(Error::DimensionMismatch(format!(
            "edge state length {} != edge_count {} * state_dim {}",
            z.len(),
            m,
            n
        )));
    }
    if cycle_dim > m {
        return Err(Error::DimensionMismatch(
            "cycle dimension exceeds edge count".into(),
        ));
    }
    let tilde = block_map(&u.transpose(), z, n);
    let z1 = tilde.rows(0, cycle_dim * n).into_owned();
    let z2 = tilde.rows(cycle_dim * n, (m - cycle_dim) * n).into_owned();
    Ok((z1, z2))
}

/// Reassemble a stacked edge vector from its transformed parts.
pub fn inverse_edge_transform(
    z1: &DVector<f64>,
    z2: &DVector<f64>,
    u: &DMatrix<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    let m = u.nrows();
    if z1.len() + z2.len() != m * n {
        return Err(Error::DimensionMismatch(
            "transformed parts do not add up to the edge dimension".into(),
        ));
    }
    let mut tilde = DVector::zeros(m * n);
    tilde.rows_mut(0, z1.len()).copy_from(z1);
    tilde.rows_mut(z1.len(), z2.len()).copy_from(z2);
    Ok(block_map(u, &tilde, n))
}

/// `(M ⊗ K) v` for a stacked vector of `v`-blocks, with `K` applied inside
/// each block.
fn block_map_gain(m: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let in_block = k.ncols();
    let out_block = k.nrows();
    let mut out = DVector::zeros(m.nrows() * out_block);
    for j in 0..m.ncols() {
        let vk = k * v.rows(j * in_block, in_block);
        for i in 0..m.nrows() {
            let w = m[(i, j)];
            if w != 0.0 {
                for r in 0..out_block {
                    out[i * out_block + r] += w * vk[r];
                }
            }
        }
    }
    out
}

/// `(M ⊗ I_n) v`.
fn block_map(m: &DMatrix<f64>, v: &DVector<f64>, n: usize) -> DVector<f64> {
    block_map_gain(m, &DMatrix::identity(n, n), v)
}

/// Distributed consensus input `u = (E ⊗ K) Phi((Eᵀ ⊗ I_n) x)`.
pub fn consensus_input(
    gain: &DMatrix<f64>,
    incidence: &DMatrix<f64>,
    bank: &ChannelBank,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = gain.ncols();
    let z = edge_state(x, incidence, n)?;
    let y = bank.apply(&z)?;
    Ok(block_map_gain(incidence, gain, &y))
}

/// Reduced-subsystem input `w2 = ((Γ U₂ᵀ) ⊗ K) Phi(z)`.
pub fn stabilizing_input(
    gain: &DMatrix<f64>,
    gamma: &DVector<f64>,
    u2: &DMatrix<f64>,
    bank: &ChannelBank,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    if gamma.len() != u2.ncols() {
        return Err(Error::DimensionMismatch(
            "mode count does not match transform columns".into(),
        ));
    }
    let y = bank.apply(&z.clone())?;
    let gamma_u2t = DMatrix::from_fn(u2.ncols(), u2.nrows(), |p, j| gamma[p] * u2[(j, p)]);
    Ok(block_map_gain(&gamma_u2t, gain, &y))
}

/// Reduced edge subsystem in Lur'e form: `z2dot = Abar z2 + Btilde v` with
/// `v = Phi(z)` and output `z = (U₂ ⊗ I_n) z2`.
#[derive(Debug, Clone)]
pub struct ReducedEdgeSystem {
    pub abar: DMatrix<f64>,
    pub btilde: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

pub fn reduced_edge_system(
    agents: &AgentDynamics,
    spectral: &SpectralData,
    gain: &DMatrix<f64>,
) -> ReducedEdgeSystem {
    let n = agents.state_dim();
    let modes = spectral.gamma.len();
    let eye_modes = DMatrix::identity(modes, modes);
    let gamma_u2t = spectral.gamma_matrix() * spectral.u2.transpose();
    ReducedEdgeSystem {
        abar: linalg::kron(&eye_modes, agents.a()),
        btilde: linalg::kron(&gamma_u2t, &(agents.b() * gain)),
        output: linalg::kron(&spectral.u2, &DMatrix::identity(n, n)),
    }
}

/// Discrepancy metrics between the closed-loop multi-agent system and the
/// reduced edge subsystem driven by the corresponding stabilizing input.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceReport {
    /// Max over time of the Euclidean gap between the projected edge state
    /// of the full system and the reduced-system state.
    pub max_projection_gap: f64,
    /// Max over time of the norm of the cycle-part residual of the full
    /// system's edge state.
    pub max_cycle_residual: f64,
    pub steps: usize,
}

/// Integrate both closed loops with the same fixed-step scheme and report
/// how far apart they drift.
///
/// The full system is `xdot = (I_N ⊗ A) x + (I_N ⊗ B) u` with the
/// distributed input; the reduced system is
/// `z2dot = (I ⊗ A) z2 + (I ⊗ B) w2` with the stabilizing input evaluated
/// on the reconstructed edge state.
pub fn equivalence_check(
    agents: &AgentDynamics,
    mats: &GraphMatrices,
    spectral: &SpectralData,
    gain: &DMatrix<f64>,
    bank: &ChannelBank,
    x0: &DVector<f64>,
    horizon: f64,
    step: f64,
) -> Result<EquivalenceReport> {
    let n = agents.state_dim();
    let node_count = mats.node_count();
    let edge_count = mats.edge_count();
    let cycle_dim = edge_count - (node_count - 1);
    if x0.len() != node_count * n {
        return Err(Error::DimensionMismatch(format!(
            "initial state length {} != {}",
            x0.len(),
            node_count * n
        )));
    }

    let full_dynamics = |_t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let u = consensus_input(gain, &mats.incidence, bank, x)?;
        let mut dx = DVector::zeros(x.len());
        for i in 0..node_count {
            let xi = x.rows(i * n, n);
            let ui = u.rows(i * agents.input_dim(), agents.input_dim());
            let dxi = agents.a() * xi + agents.b() * ui;
            dx.rows_mut(i * n, n).copy_from(&dxi);
        }
        Ok(dx)
    };

    let modes = node_count - 1;
    let reduced_dynamics = |_t: f64, z2: &DVector<f64>| -> Result<DVector<f64>> {
        let z = block_map(&spectral.u2, z2, n);
        let w2 = stabilizing_input(gain, &spectral.gamma, &spectral.u2, bank, &z)?;
        let mut dz = DVector::zeros(z2.len());
        for p in 0..modes {
            let zp = z2.rows(p * n, n);
            let wp = w2.rows(p * agents.input_dim(), agents.input_dim());
            let dzp = agents.a() * zp + agents.b() * wp;
            dz.rows_mut(p * n, n).copy_from(&dzp);
        }
        Ok(dz)
    };

    let z0 = edge_state(x0, &mats.incidence, n)?;
    let (_, z2_init) = transform_edge_state(&z0, &spectral.u, cycle_dim, n)?;

    let steps = (horizon / step).round() as usize;
    let mut x = x0.clone();
    let mut z2 = z2_init;
    let mut max_projection_gap = 0.0f64;
    let mut max_cycle_residual = 0.0f64;

    let mut measure = |x: &DVector<f64>, z2: &DVector<f64>| -> Result<()> {
        let z = edge_state(x, &mats.incidence, n)?;
        let (z1_full, z2_full) = transform_edge_state(&z, &spectral.u, cycle_dim, n)?;
        max_projection_gap = max_projection_gap.max((z2_full - z2).norm());
        max_cycle_residual = max_cycle_residual.max(z1_full.norm());
        Ok(())
    };

    measure(&x, &z2)?;
    let mut t = 0.0;
    for _ in 0..steps {
        x = sim::rk4_step(&full_dynamics, t, &x, step)?;
        z2 = sim::rk4_step(&reduced_dynamics, t, &z2, step)?;
        t += step;
        measure(&x, &z2)?;
    }

    Ok(EquivalenceReport {
        max_projection_gap,
        max_cycle_residual,
        steps,
    })
}
