//! Trace diagnostics and the closed-form feasibility/accuracy bounds.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::SwarmState;
use crate::error::{Error, Result};
use crate::netsim::Trace;
use crate::oracle::OracleSolution;
use crate::problem::{HyperParams, ProblemInstance, SpectralConstants};

/// `max{Σ_i (A_i x_i − d_i), 0}` per constraint row.
pub fn violation_vector(instance: &ProblemInstance, xs: &[DVector<f64>]) -> DVector<f64> {
    (instance.coupled_load(xs) - instance.total_demand()).map(|v| v.max(0.0))
}

/// `‖max{Σ_i (A_i x_i − d_i), 0}‖₁`.
pub fn violation_l1(instance: &ProblemInstance, xs: &[DVector<f64>]) -> f64 {
    violation_vector(instance, xs).sum()
}

/// `‖x − x⋆‖²` over the stacked decision.
pub fn optimality_gap(xs: &[DVector<f64>], oracle: &OracleSolution) -> f64 {
    xs.iter()
        .zip(&oracle.x_star)
        .map(|(x, s)| (x - s).norm_squared())
        .sum()
}

/// `Σ_i (A_i x_i + δ_i − d_i)`.
pub fn slack_sum(
    instance: &ProblemInstance,
    xs: &[DVector<f64>],
    deltas: &[DVector<f64>],
) -> DVector<f64> {
    let queued = deltas
        .iter()
        .fold(DVector::zeros(instance.m()), |acc, d| acc + d);
    instance.coupled_load(xs) + queued - instance.total_demand()
}

pub fn state_slack_sum(instance: &ProblemInstance, state: &SwarmState) -> DVector<f64> {
    slack_sum(instance, &state.decisions(), &state.queues(instance.m()))
}

/// First recorded `k ≥ from_k` from which the violation stays exactly zero
/// over every later row.
pub fn recovery_iteration(trace: &Trace, from_k: u64) -> Option<u64> {
    let rows: Vec<_> = trace.rows.iter().filter(|r| r.k >= from_k).collect();
    let mut candidate = None;
    for r in rows.iter().rev() {
        if r.violation_l1 == 0.0 {
            candidate = Some(r.k);
        } else {
            break;
        }
    }
    candidate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub omega: f64,
    /// `ℓ√n·ω/(μσ̲_A)`
    pub accuracy_bound: f64,
    /// Smallest `t ≥ 0` with `(1−γ)^t·C ≤ nω`; `None` when `ω = 0` and `C > 0`.
    pub recovery_bound_t: Option<u64>,
    /// `ℓ(1−γ)^{t+1}C/(μσ̲_A√n)` evaluated at `recovery_bound_t`.
    pub tradeoff_rhs: f64,
    /// `nω/(1−γ)`
    pub one_step_threshold: f64,
    /// `C ≤ nω/(1−γ)`
    pub within_one_step: bool,
}

/// Evaluates the bounds for violation magnitude `c_vio`, with `ω` taken as
/// the schedule's nominal value.
pub fn bounds_report(
    sc: &SpectralConstants,
    hp: &HyperParams,
    n: usize,
    c_vio: f64,
) -> Result<BoundsReport> {
    let gamma = hp.gamma;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::HyperParams(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(c_vio >= 0.0 && c_vio.is_finite()) {
        return Err(Error::HyperParams(format!("violation magnitude must be ≥ 0, got {c_vio}")));
    }
    let omega = hp.buffer.nominal();
    let nf = n as f64;
    let budget = nf * omega;
    let recovery_bound_t = if c_vio <= budget {
        Some(0)
    } else if budget > 0.0 {
        let t = ((budget / c_vio).ln() / (1.0 - gamma).ln()).ceil();
        Some(t as u64)
    } else {
        None
    };
    let tradeoff_rhs = match recovery_bound_t {
        Some(t) => {
            sc.ell * (1.0 - gamma).powi(t as i32 + 1) * c_vio / (sc.mu * sc.sigma_a_min * nf.sqrt())
        }
        None => 0.0,
    };
    let one_step_threshold = budget / (1.0 - gamma);
    Ok(BoundsReport {
        omega,
        accuracy_bound: sc.ell * nf.sqrt() * omega / (sc.mu * sc.sigma_a_min),
        recovery_bound_t,
        tradeoff_rhs,
        one_step_threshold,
        within_one_step: c_vio <= one_step_threshold,
    })
}

/// Diagnostic Lyapunov-type metric measured against a reference (fixed-point)
/// state:
///
/// ```text
/// V = ‖x′−x̂′‖² + ‖y−ŷ‖² + ‖δ−δ̂‖² + (α/β)‖λ−λ̂‖²
///     + α(1−3β)/2 ‖z−ẑ‖² + σ̲_A²α(1−3β)/(8γ²) ‖x−x′‖²
/// ```
///
/// with `z = A x + L y + δ`. No monotonicity is asserted on it.
pub fn lyapunov_metric(
    instance: &ProblemInstance,
    state: &SwarmState,
    reference: &SwarmState,
    hp: &HyperParams,
    sc: &SpectralConstants,
) -> f64 {
    let topo = instance.topology();
    let m = instance.m();
    let z_of = |s: &SwarmState| {
        let ys: Vec<_> = s.agents.iter().map(|a| a.y.clone()).collect();
        let ly = topo.laplacian_apply(&ys);
        let deltas = s.queues(m);
        s.agents
            .iter()
            .enumerate()
            .map(|(i, a)| instance.agent(i).a() * &a.x + &ly[i] + &deltas[i])
            .collect::<Vec<_>>()
    };
    let z = z_of(state);
    let z_ref = z_of(reference);
    let (alpha, beta, gamma) = (hp.alpha, hp.beta, hp.gamma);
    let z_weight = alpha * (1.0 - 3.0 * beta) / 2.0;
    let track_weight = sc.sigma_a_min.powi(2) * alpha * (1.0 - 3.0 * beta) / (8.0 * gamma * gamma);
    let queues = state.queues(m);
    let ref_queues = reference.queues(m);
    state
        .agents
        .iter()
        .zip(&reference.agents)
        .enumerate()
        .map(|(i, (a, r))| {
            (&a.x_prime - &r.x_prime).norm_squared()
                + (&a.y - &r.y).norm_squared()
                + (&queues[i] - &ref_queues[i]).norm_squared()
                + alpha / beta * (&a.lambda - &r.lambda).norm_squared()
                + z_weight * (&z[i] - &z_ref[i]).norm_squared()
                + track_weight * (&a.x - &a.x_prime).norm_squared()
        })
        .sum()
}
