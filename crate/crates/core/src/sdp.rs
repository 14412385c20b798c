//! Backend-agnostic representation of affine matrix-inequality systems over
//! a flat variable vector, and a thin adapter onto an interior-point conic
//! solver.
//!
//! Every constraint is a symmetric matrix block `C0 + sum_i v_i * C_i <= 0`
//! (negative semidefinite); scalar inequalities are 1x1 blocks. The adapter
//! is the only place that knows which solver runs underneath.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{self, NonnegativeConeT, PSDTriangleConeT},
};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// One affine matrix block `constant + sum_i vars[i] * coeffs[i] <= 0`.
#[derive(Debug, Clone)]
pub struct MatrixBlock {
    pub label: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// Sparse in the variable index: (variable, coefficient matrix).
    pub coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl MatrixBlock {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self {
            label: label.into(),
            dim,
            constant: DMatrix::zeros(dim, dim),
            coeffs: Vec::new(),
        }
    }

    pub fn with_constant(mut self, constant: DMatrix<f64>) -> Self {
        assert_eq!(constant.nrows(), self.dim);
        assert_eq!(constant.ncols(), self.dim);
        self.constant = constant;
        self
    }

    pub fn push_coeff(&mut self, var: usize, coeff: DMatrix<f64>) {
        assert_eq!(coeff.nrows(), self.dim);
        assert_eq!(coeff.ncols(), self.dim);
        self.coeffs.push((var, coeff));
    }

    /// Evaluate the block at a variable assignment.
    pub fn evaluate(&self, vars: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (var, coeff) in &self.coeffs {
            m += coeff * vars[*var];
        }
        m
    }

    /// Max eigenvalue of the evaluated block (negative when satisfied).
    pub fn residual(&self, vars: &[f64]) -> f64 {
        linalg::max_eigenvalue(&self.evaluate(vars))
    }
}

/// A full constraint system with an objective
/// `minimize objective . v + 1/2 sum_i quadratic_diag[i] v_i^2`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub num_vars: usize,
    pub blocks: Vec<MatrixBlock>,
    pub objective: Vec<f64>,
    pub quadratic_diag: Vec<f64>,
}

impl ConstraintSystem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            blocks: Vec::new(),
            objective: vec![0.0; num_vars],
            quadratic_diag: vec![0.0; num_vars],
        }
    }

    pub fn residuals(&self, vars: &[f64]) -> Vec<f64> {
        self.blocks.iter().map(|b| b.residual(vars)).collect()
    }

    pub fn max_residual(&self, vars: &[f64]) -> f64 {
        self.residuals(vars)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outcome of a feasibility solve.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure(String),
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub vars: Vec<f64>,
    /// Max eigenvalue of each block after substitution, in block order.
    pub residuals: Vec<f64>,
    pub solver_status: String,
    pub iterations: u32,
}

fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Scaled upper-triangular vectorization matching the conic backend:
/// column-major upper triangle, off-diagonal entries times sqrt(2).
fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for col in 0..n {
        for row in 0..=col {
            if row == col {
                out.push(m[(row, col)]);
            } else {
                out.push((m[(row, col)] + m[(col, row)]) * std::f64::consts::FRAC_1_SQRT_2);
            }
        }
    }
    out
}

/// Solve `min objective . v` subject to all blocks being negative
/// semidefinite, returning the variable assignment and per-block residuals.
pub fn solve(system: &ConstraintSystem) -> Result<SdpSolution> {
    let nv = system.num_vars;
    let total_rows: usize = system
        .blocks
        .iter()
        .map(|b| if b.dim == 1 { 1 } else { svec_len(b.dim) })
        .sum();

    // Conic form: A v + s = b with s in a product of cones. A block
    // C0 + sum v_i C_i <= 0 becomes s = svec(-C0) - sum v_i svec(C_i) >= 0
    // (PSD), i.e. rows svec(C_i) and right-hand side svec(-C0).
    let mut cones: Vec<SupportedConeT<f64>> = Vec::with_capacity(system.blocks.len());
    let mut b = Vec::with_capacity(total_rows);
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    let mut row_base = 0usize;
    for block in &system.blocks {
        let rows = if block.dim == 1 {
            cones.push(NonnegativeConeT(1));
            1
        } else {
            cones.push(PSDTriangleConeT(block.dim));
            svec_len(block.dim)
        };
        b.extend(svec(&(-&block.constant)));
        for (var, coeff) in &block.coeffs {
            for (offset, val) in svec(coeff).into_iter().enumerate() {
                if val != 0.0 {
                    columns[*var].push((row_base + offset, val));
                }
            }
        }
        row_base += rows;
    }

    let mut colptr = Vec::with_capacity(nv + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in columns.iter_mut() {
        col.sort_by_key(|&(row, _)| row);
        for &(row, val) in col.iter() {
            rowval.push(row);
            nzval.push(val);
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(total_rows, nv, colptr, rowval, nzval);

    let mut p_colptr = Vec::with_capacity(nv + 1);
    let mut p_rowval = Vec::new();
    let mut p_nzval = Vec::new();
    p_colptr.push(0);
    for (idx, &q) in system.quadratic_diag.iter().enumerate() {
        if q != 0.0 {
            p_rowval.push(idx);
            p_nzval.push(q);
        }
        p_colptr.push(p_rowval.len());
    }
    let p = CscMatrix::new(nv, nv, p_colptr, p_rowval, p_nzval);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_feas(1e-10)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .build()
        .map_err(|e| Error::NumericalFailure(format!("solver settings: {e}")))?;

    let mut solver = DefaultSolver::new(&p, &system.objective, &a, &b, &cones, settings)
        .map_err(|e| Error::NumericalFailure(format!("solver setup: {e:?}")))?;
    solver.solve();

    let raw_status = solver.solution.status;
    let vars = solver.solution.x.clone();
    let status = match raw_status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Feasible,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        other => SolveStatus::NumericalFailure(format!("{other:?}")),
    };
    let residuals = if status == SolveStatus::Feasible {
        system.residuals(&vars)
    } else {
        Vec::new()
    };
    Ok(SdpSolution {
        status,
        vars,
        residuals,
        solver_status: format!("{raw_status:?}"),
        iterations: solver.solution.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_bounds_solve() {
        // min v s.t. 1 - v <= 0  =>  v = 1.
        let mut system = ConstraintSystem::new(1);
        let mut block = MatrixBlock::new("lower", 1).with_constant(dmatrix![1.0]);
        block.push_coeff(0, dmatrix![-1.0]);
        system.blocks.push(block);
        system.objective = vec![1.0];
        let sol = solve(&system).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!((sol.vars[0] - 1.0).abs() < 1e-6);
        assert!(sol.residuals[0] <= 1e-8);
    }

    #[test]
    fn psd_block_caps_eigenvalue() {
        // Variables (v0, v1): M = [[v0, 1], [1, v1]] >= 0, v0 + v1 = trace
        // minimized. Optimum: v0 = v1 = 1 (rank-one boundary point).
        let mut system = ConstraintSystem::new(2);
        // -M <= 0 encodes M >= 0.
        let mut psd = MatrixBlock::new("psd", 2).with_constant(dmatrix![0.0, -1.0; -1.0, 0.0]);
        psd.push_coeff(0, dmatrix![-1.0, 0.0; 0.0, 0.0]);
        psd.push_coeff(1, dmatrix![0.0, 0.0; 0.0, -1.0]);
        system.blocks.push(psd);
        system.objective = vec![1.0, 1.0];
        let sol = solve(&system).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!((sol.vars[0] - 1.0).abs() < 1e-4, "vars {:?}", sol.vars);
        assert!((sol.vars[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn contradictory_scalars_are_infeasible() {
        // v <= -1 and v >= 1.
        let mut system = ConstraintSystem::new(1);
        let mut upper = MatrixBlock::new("upper", 1).with_constant(dmatrix![1.0]);
        upper.push_coeff(0, dmatrix![1.0]);
        let mut lower = MatrixBlock::new("lower", 1).with_constant(dmatrix![1.0]);
        lower.push_coeff(0, dmatrix![-1.0]);
        system.blocks.push(upper);
        system.blocks.push(lower);
        let sol = solve(&system).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn lyapunov_style_psd_problem() {
        // Find p with  2 a p + 1 <= 0  and  p >= 0.1  for a = -1:
        // feasible, p >= 0.5.
        let mut system = ConstraintSystem::new(1);
        let mut decay = MatrixBlock::new("decay", 1).with_constant(dmatrix![1.0]);
        decay.push_coeff(0, dmatrix![-2.0]);
        let mut floor = MatrixBlock::new("floor", 1).with_constant(dmatrix![0.1]);
        floor.push_coeff(0, dmatrix![-1.0]);
        system.blocks.push(decay);
        system.blocks.push(floor);
        system.objective = vec![1.0];
        let sol = solve(&system).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!(sol.vars[0] >= 0.5 - 1e-6);
    }
}
