//! Deterministic fixed-step closed-loop simulation with consensus,
//! Lyapunov-decay and channel-constraint metrics, plus CSV trace export.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::edge::{consensus_input, edge_state, transform_edge_state, AgentDynamics};
use crate::error::{Error, Result};
use crate::graph::{GraphMatrices, SpectralData};
use crate::sector::{ChannelBank, SectorBounds};

/// Absolute state magnitude beyond which a run is declared divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// One classical fourth-order Runge-Kutta step for `ydot = f(t, y)`.
pub fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + 0.5 * h * &k1))?;
    let k3 = f(t + 0.5 * h, &(y + 0.5 * h * &k2))?;
    let k4 = f(t + h, &(y + h * &k3))?;
    Ok(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Sampled closed-loop trajectory. All series share the time grid; the
/// Lyapunov series is present only when a weight matrix was supplied.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub lyapunov: Option<Vec<f64>>,
    pub consensus_error: Vec<f64>,
    pub node_count: usize,
    pub edge_count: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    /// Set when the divergence guard tripped; the trace holds the samples
    /// collected up to that point.
    pub diverged_at: Option<f64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Turn a truncated (divergent) trace into a hard error.
    pub fn ensure_finite(&self) -> Result<&Self> {
        match self.diverged_at {
            Some(t) => Err(Error::NonFiniteState {
                t,
                guard: DIVERGENCE_GUARD,
            }),
            None => Ok(self),
        }
    }

    pub fn final_consensus_error(&self) -> f64 {
        *self.consensus_error.last().unwrap_or(&0.0)
    }

    pub fn initial_consensus_error(&self) -> f64 {
        *self.consensus_error.first().unwrap_or(&0.0)
    }
}

fn max_pairwise_gap(x: &DVector<f64>, node_count: usize, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..node_count {
        for j in (i + 1)..node_count {
            let gap = (x.rows(i * n, n) - x.rows(j * n, n)).norm();
            worst = worst.max(gap);
        }
    }
    worst
}

/// Integrate the closed loop `xdot = (I ⊗ A) x + (I ⊗ B) u` with
/// `u = (E ⊗ K) Phi(z)` using fixed-step RK4; the input is re-evaluated in
/// every stage. When `lyapunov_weight` is given, the quadratic form of the
/// transformed tree-like edge state is recorded per sample.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    agents: &AgentDynamics,
    mats: &GraphMatrices,
    spectral: &SpectralData,
    gain: &DMatrix<f64>,
    bank: &ChannelBank,
    x0: &DVector<f64>,
    horizon: f64,
    step: f64,
    lyapunov_weight: Option<&DMatrix<f64>>,
) -> Result<SimulationTrace> {
    if step <= 0.0 || horizon < step {
        return Err(Error::DimensionMismatch(
            "need step > 0 and horizon >= step".into(),
        ));
    }
    let n = agents.state_dim();
    let m = agents.input_dim();
    let node_count = mats.node_count();
    let edge_count = mats.edge_count();
    if x0.len() != node_count * n {
        return Err(Error::DimensionMismatch(format!(
            "initial state length {} != {}",
            x0.len(),
            node_count * n
        )));
    }
    if bank.channel_count() != edge_count * n {
        return Err(Error::ChannelCountMismatch {
            expected: edge_count * n,
            got: bank.channel_count(),
        });
    }
    if let Some(p) = lyapunov_weight {
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::DimensionMismatch(
                "Lyapunov weight must be state_dim x state_dim".into(),
            ));
        }
    }
    let cycle_dim = edge_count - (node_count - 1);

    let dynamics = |_t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let u = consensus_input(gain, &mats.incidence, bank, x)?;
        let mut dx = DVector::zeros(x.len());
        for i in 0..node_count {
            let dxi = agents.a() * x.rows(i * n, n) + agents.b() * u.rows(i * m, m);
            dx.rows_mut(i * n, n).copy_from(&dxi);
        }
        Ok(dx)
    };

    let steps = (horizon / step).round() as usize;
    let mut trace = SimulationTrace {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        lyapunov: lyapunov_weight.map(|_| Vec::with_capacity(steps + 1)),
        consensus_error: Vec::with_capacity(steps + 1),
        node_count,
        edge_count,
        state_dim: n,
        input_dim: m,
        diverged_at: None,
    };

    let record = |trace: &mut SimulationTrace, t: f64, x: &DVector<f64>| -> Result<()> {
        let z = edge_state(x, &mats.incidence, n)?;
        let y = bank.apply(&z)?;
        let u = consensus_input(gain, &mats.incidence, bank, x)?;
        if let (Some(series), Some(p)) = (trace.lyapunov.as_mut(), lyapunov_weight) {
            let (_, z2) = transform_edge_state(&z, &spectral.u, cycle_dim, n)?;
            let mut v = 0.0;
            for block in 0..(node_count - 1) {
                let zb = z2.rows(block * n, n).into_owned();
                v += (zb.transpose() * p * &zb)[(0, 0)];
            }
            series.push(v);
        }
        trace.consensus_error.push(max_pairwise_gap(x, node_count, n));
        trace.times.push(t);
        trace.x.push(x.clone());
        trace.z.push(z);
        trace.y.push(y);
        trace.u.push(u);
        Ok(())
    };

    let mut x = x0.clone();
    record(&mut trace, 0.0, &x)?;
    for i in 0..steps {
        let t = i as f64 * step;
        x = rk4_step(&dynamics, t, &x, step)?;
        if x.amax() > DIVERGENCE_GUARD {
            trace.diverged_at = Some(t + step);
            return Ok(trace);
        }
        record(&mut trace, t + step, &x)?;
    }
    Ok(trace)
}

/// Result of checking exponential decay of the recorded Lyapunov series.
#[derive(Debug, Clone, Copy)]
pub struct DecayReport {
    pub pass: bool,
    pub epsilon: f64,
    /// First sample violating the bound, if any: (time, value, bound).
    pub first_violation: Option<(f64, f64, f64)>,
    /// Largest observed ratio value/bound.
    pub worst_ratio: f64,
}

/// Check `V(t) <= V(0) exp(-eps (t - t0)) (1 + 1e-6) + 1e-12` on every
/// sample of the trace.
pub fn lyapunov_audit(trace: &SimulationTrace, epsilon: f64) -> Result<DecayReport> {
    let series = trace
        .lyapunov
        .as_ref()
        .ok_or_else(|| Error::DimensionMismatch("trace has no Lyapunov series".into()))?;
    let v0 = series.first().copied().unwrap_or(0.0);
    let t0 = trace.times.first().copied().unwrap_or(0.0);
    let mut first_violation = None;
    let mut worst_ratio = 0.0f64;
    for (&t, &v) in trace.times.iter().zip(series) {
        let bound = v0 * (-epsilon * (t - t0)).exp() * (1.0 + 1e-6) + 1e-12;
        worst_ratio = worst_ratio.max(v / bound);
        if v > bound && first_violation.is_none() {
            first_violation = Some((t, v, bound));
        }
    }
    Ok(DecayReport {
        pass: first_violation.is_none(),
        epsilon,
        first_violation,
        worst_ratio,
    })
}

/// What to audit the exchanged signals against.
#[derive(Debug, Clone)]
pub enum ConstraintSpec {
    /// Per-channel magnitude limits on the exchanged signal.
    Limits(Vec<f64>),
    /// Sector membership of every (z, y) sample pair.
    Sector(SectorBounds),
}

#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub pass: bool,
    /// Max |y| per channel over the trace.
    pub per_channel_max: Vec<f64>,
    /// Worst sector product over the trace (sector audits only).
    pub worst_sector_product: Option<f64>,
}

/// Audit the exchanged signals along a trace, either against magnitude
/// limits (`|y| <= limit + 1e-9`) or against the sector product
/// (`(y - s1 z)(y - s2 z) <= 1e-12` pointwise).
pub fn constraint_audit(trace: &SimulationTrace, spec: &ConstraintSpec) -> Result<ConstraintReport> {
    let channels = trace.edge_count * trace.state_dim;
    let mut per_channel_max = vec![0.0f64; channels];
    for y in &trace.y {
        if y.len() != channels {
            return Err(Error::ChannelCountMismatch {
                expected: channels,
                got: y.len(),
            });
        }
        for (c, maxv) in per_channel_max.iter_mut().enumerate() {
            *maxv = maxv.max(y[c].abs());
        }
    }
    match spec {
        ConstraintSpec::Limits(limits) => {
            if limits.len() != channels {
                return Err(Error::ChannelCountMismatch {
                    expected: channels,
                    got: limits.len(),
                });
            }
            let pass = per_channel_max
                .iter()
                .zip(limits)
                .all(|(maxv, limit)| *maxv <= limit + 1e-9);
            Ok(ConstraintReport {
                pass,
                per_channel_max,
                worst_sector_product: None,
            })
        }
        ConstraintSpec::Sector(bounds) => {
            if bounds.dim() != trace.state_dim {
                return Err(Error::DimensionMismatch(
                    "sector dimension does not match state dimension".into(),
                ));
            }
            let mut worst = f64::NEG_INFINITY;
            for (z, y) in trace.z.iter().zip(&trace.y) {
                for c in 0..channels {
                    let k = c % trace.state_dim;
                    let product = (y[c] - bounds.sigma1()[k] * z[c])
                        * (y[c] - bounds.sigma2()[k] * z[c]);
                    worst = worst.max(product);
                }
            }
            Ok(ConstraintReport {
                pass: worst <= 1e-12,
                per_channel_max,
                worst_sector_product: Some(worst),
            })
        }
    }
}

/// Format with 12 significant digits, locale-independent.
pub fn format_sample(v: f64) -> String {
    format!("{v:.11e}")
}

/// Write the trace as CSV: one row per sample, columns
/// `t, x_i_k, z_j_k, y_j_k, u_i_k, V, consensus_error` with 1-based node and
/// edge indices.
pub fn write_csv<W: Write>(trace: &SimulationTrace, out: &mut W) -> std::io::Result<()> {
    let n = trace.state_dim;
    let m = trace.input_dim;
    let mut header = vec!["t".to_string()];
    for i in 1..=trace.node_count {
        for k in 1..=n {
            header.push(format!("x_{i}_{k}"));
        }
    }
    for j in 1..=trace.edge_count {
        for k in 1..=n {
            header.push(format!("z_{j}_{k}"));
        }
    }
    for j in 1..=trace.edge_count {
        for k in 1..=n {
            header.push(format!("y_{j}_{k}"));
        }
    }
    for i in 1..=trace.node_count {
        for k in 1..=m {
            header.push(format!("u_{i}_{k}"));
        }
    }
    header.push("V".to_string());
    header.push("consensus_error".to_string());
    writeln!(out, "{}", header.join(","))?;

    for idx in 0..trace.len() {
        let mut row = Vec::with_capacity(header.len());
        row.push(format_sample(trace.times[idx]));
        row.extend(trace.x[idx].iter().map(|&v| format_sample(v)));
        row.extend(trace.z[idx].iter().map(|&v| format_sample(v)));
        row.extend(trace.y[idx].iter().map(|&v| format_sample(v)));
        row.extend(trace.u[idx].iter().map(|&v| format_sample(v)));
        row.push(match &trace.lyapunov {
            Some(series) => format_sample(series[idx]),
            None => String::new(),
        });
        row.push(format_sample(trace.consensus_error[idx]));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, graph_matrices, spectral_data};
    use crate::sector::{ChannelBank, SectorBounds};
    use nalgebra::{dmatrix, dvector};

    fn pair_setup() -> (AgentDynamics, GraphMatrices, SpectralData) {
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let mats = graph_matrices(&g);
        let spectral = spectral_data(&mats).unwrap();
        let agents = AgentDynamics::new(dmatrix![0.0], dmatrix![1.0]).unwrap();
        (agents, mats, spectral)
    }

    #[test]
    fn pair_tracks_scalar_closed_form() {
        // zdot = -2 z, z0 = 2: z(1) = 2 exp(-2).
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::identity(1, SectorBounds::scalar(0.9, 1.1, 1).unwrap());
        let k = dmatrix![-1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![1.0, -1.0],
            1.0,
            1e-3,
            None,
        )
        .unwrap();
        let z_end = trace.z.last().unwrap()[0];
        let exact = 2.0 * (-2.0f64).exp();
        assert!(
            (z_end - exact).abs() / exact.abs() < 1e-6,
            "z(1) = {z_end}, exact {exact}"
        );
    }

    #[test]
    fn saturated_pair_has_linear_then_exponential_phase() {
        // zdot = -2 sat_1(z), z0 = 4: linear slope -2 until z = 1 at
        // t = 1.5, exponential afterwards.
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::saturation(1, 1.0, SectorBounds::scalar(0.1, 1.0, 1).unwrap());
        let k = dmatrix![-1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![2.0, -2.0],
            3.0,
            1e-3,
            None,
        )
        .unwrap();
        let z_at = |t: f64| {
            let idx = (t / 1e-3).round() as usize;
            trace.z[idx][0]
        };
        assert!((z_at(1.0) - 2.0).abs() < 1e-6); // 4 - 2*1
        assert!((z_at(1.5) - 1.0).abs() < 1e-6); // end of linear phase
        let expected_end = (-2.0 * (3.0 - 1.5f64)).exp();
        assert!((z_at(3.0) - expected_end).abs() < 1e-4);
    }

    #[test]
    fn consensus_initial_state_is_a_fixed_point() {
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::identity(1, SectorBounds::scalar(0.9, 1.1, 1).unwrap());
        let k = dmatrix![-1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![0.7, 0.7],
            1.0,
            1e-2,
            None,
        )
        .unwrap();
        assert!(trace.consensus_error.iter().all(|&e| e == 0.0));
        assert!(trace.x.iter().all(|x| (x[0] - 0.7).abs() < 1e-12));
    }

    #[test]
    fn divergence_guard_truncates() {
        // Positive feedback: gain +1 doubles the gap exponentially.
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::identity(1, SectorBounds::scalar(0.9, 1.1, 1).unwrap());
        let k = dmatrix![1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![1.0, -1.0],
            60.0,
            1e-2,
            None,
        )
        .unwrap();
        assert!(trace.diverged_at.is_some());
        assert!(trace.ensure_finite().is_err());
        assert!(trace.len() > 1);
    }

    #[test]
    fn lyapunov_audit_flags_overclaimed_rate() {
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::identity(1, SectorBounds::scalar(0.9, 1.1, 1).unwrap());
        let k = dmatrix![-1.0];
        let p = dmatrix![1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![1.0, -1.0],
            4.0,
            1e-3,
            Some(&p),
        )
        .unwrap();
        // V = z^2 decays at rate 4; certified rate 3 passes, 5 fails.
        assert!(lyapunov_audit(&trace, 3.0).unwrap().pass);
        let too_fast = lyapunov_audit(&trace, 5.0).unwrap();
        assert!(!too_fast.pass);
        assert!(too_fast.first_violation.is_some());
    }

    #[test]
    fn zero_trajectory_audits_vacuously() {
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::identity(1, SectorBounds::scalar(0.9, 1.1, 1).unwrap());
        let k = dmatrix![-1.0];
        let p = dmatrix![2.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![0.0, 0.0],
            1.0,
            1e-2,
            Some(&p),
        )
        .unwrap();
        assert!(lyapunov_audit(&trace, 10.0).unwrap().pass);
    }

    #[test]
    fn constraint_audit_reports_limits_and_sector() {
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::saturation(1, 1.0, SectorBounds::scalar(0.1, 1.0, 1).unwrap());
        let k = dmatrix![-1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![2.0, -2.0],
            2.0,
            1e-2,
            None,
        )
        .unwrap();
        let limits = constraint_audit(&trace, &ConstraintSpec::Limits(vec![1.0])).unwrap();
        assert!(limits.pass);
        assert!(limits.per_channel_max[0] <= 1.0 + 1e-9);

        // The saturated channel stays inside [sat(4)/4, 1] = [0.25, 1].
        let sector = SectorBounds::scalar(0.25, 1.0, 1).unwrap();
        let report = constraint_audit(&trace, &ConstraintSpec::Sector(sector)).unwrap();
        assert!(report.pass, "worst {:?}", report.worst_sector_product);
    }

    #[test]
    fn csv_is_deterministic_and_has_header() {
        let (agents, mats, spectral) = pair_setup();
        let bank = ChannelBank::identity(1, SectorBounds::scalar(0.9, 1.1, 1).unwrap());
        let k = dmatrix![-1.0];
        let trace = simulate(
            &agents,
            &mats,
            &spectral,
            &k,
            &bank,
            &dvector![1.0, -1.0],
            0.1,
            1e-2,
            None,
        )
        .unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&trace, &mut a).unwrap();
        write_csv(&trace, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("t,x_1_1,x_2_1,z_1_1,y_1_1,u_1_1,u_2_1,V,consensus_error"));
        assert_eq!(text.lines().count(), 12);
    }
}
