//! Ground-truth solutions for quadratic instances.
//!
//! * [`solve_active_set`] enumerates active sets of the `m` coupled rows and
//!   solves each reduced KKT system through the `m×m` Schur complement.
//! * [`solve_equality`] assembles and factors the full saddle-point system.
//! * [`reference_projected_gradient`] runs centralized projected dual ascent
//!   and serves as an independent cross-check of both.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Mode, ProblemInstance};
use crate::serde_util;

/// Largest `m` accepted by the `2^m` enumeration.
pub const MAX_ENUMERATED_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSolution {
    #[serde(with = "serde_util::vectors")]
    pub x_star: Vec<DVector<f64>>,
    /// Consensus multiplier shared by all agents.
    #[serde(with = "serde_util::vector")]
    pub lambda_star: DVector<f64>,
    pub f_star: f64,
    pub active_set: Vec<usize>,
}

impl OracleSolution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn stacked(&self) -> DVector<f64> {
        let data: Vec<f64> = self.x_star.iter().flat_map(|x| x.iter().copied()).collect();
        DVector::from_vec(data)
    }
}

/// KKT residuals of a candidate `(x, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max_i ‖∇f_i(x_i) + A_iᵀλ‖`
    pub stationarity: f64,
    /// Inequality: `‖max(ΣAx − Σd, 0)‖∞`; equality: `‖ΣAx − Σd‖∞`.
    pub primal: f64,
    /// `‖min(λ, 0)‖∞` (zero in equality mode).
    pub dual: f64,
    /// `|λᵀ(Σd − ΣAx)|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_residuals(
    instance: &ProblemInstance,
    xs: &[DVector<f64>],
    lambda: &DVector<f64>,
    mode: Mode,
) -> KktResiduals {
    let stationarity = instance
        .agents()
        .iter()
        .zip(xs)
        .map(|(a, x)| (a.cost().gradient(x) + a.a().transpose() * lambda).norm())
        .fold(0.0, f64::max);
    let slack = instance.total_demand() - instance.coupled_load(xs);
    match mode {
        Mode::Inequality => KktResiduals {
            stationarity,
            primal: slack.map(|s| (-s).max(0.0)).amax(),
            dual: lambda.map(|l| (-l).max(0.0)).amax(),
            complementarity: lambda.dot(&slack).abs(),
        },
        Mode::Equality => KktResiduals {
            stationarity,
            primal: slack.amax(),
            dual: 0.0,
            complementarity: 0.0,
        },
    }
}

/// Per-agent pieces of the minimizer `x_i(λ) = (2P_i)⁻¹(Q_i − A_iᵀλ)`.
struct Decoupled {
    hinv: Vec<DMatrix<f64>>,
    q: Vec<DVector<f64>>,
}

impl Decoupled {
    fn new(instance: &ProblemInstance) -> Result<Self> {
        let mut hinv = Vec::with_capacity(instance.n());
        let mut q = Vec::with_capacity(instance.n());
        for (i, a) in instance.agents().iter().enumerate() {
            let quad = a.cost().as_quadratic().ok_or_else(|| {
                Error::Unsupported(format!("agent {i}: oracle needs quadratic costs"))
            })?;
            let h = quad.p() * 2.0;
            let inv = h
                .cholesky()
                .ok_or_else(|| Error::Oracle(format!("agent {i}: 2P not positive definite")))?
                .inverse();
            hinv.push(inv);
            q.push(quad.q().clone());
        }
        Ok(Self { hinv, q })
    }

    fn decisions(&self, instance: &ProblemInstance, lambda: &DVector<f64>) -> Vec<DVector<f64>> {
        instance
            .agents()
            .iter()
            .enumerate()
            .map(|(i, a)| &self.hinv[i] * (&self.q[i] - a.a().transpose() * lambda))
            .collect()
    }
}

fn finish(
    instance: &ProblemInstance,
    x_star: Vec<DVector<f64>>,
    lambda_star: DVector<f64>,
    active_set: Vec<usize>,
) -> OracleSolution {
    let f_star = instance.total_cost(&x_star);
    OracleSolution {
        x_star,
        lambda_star,
        f_star,
        active_set,
    }
}

/// Active-set enumeration over the `m` coupled rows, in ascending bitmask order.
pub fn solve_active_set(instance: &ProblemInstance) -> Result<OracleSolution> {
    let m = instance.m();
    if m > MAX_ENUMERATED_ROWS {
        return Err(Error::Unsupported(format!(
            "active-set enumeration limited to m ≤ {MAX_ENUMERATED_ROWS}, got {m}"
        )));
    }
    solve_active_set_in_order(instance, 0..(1u32 << m))
}

/// As [`solve_active_set`] with a caller-chosen order of candidate subsets
/// (bitmasks over the rows).
pub fn solve_active_set_in_order(
    instance: &ProblemInstance,
    order: impl IntoIterator<Item = u32>,
) -> Result<OracleSolution> {
    let m = instance.m();
    if m > MAX_ENUMERATED_ROWS {
        return Err(Error::Unsupported(format!(
            "active-set enumeration limited to m ≤ {MAX_ENUMERATED_ROWS}, got {m}"
        )));
    }
    let dec = Decoupled::new(instance)?;
    // Unconstrained load u = Σ A_i (2P_i)⁻¹ Q_i and Schur complement S = Σ A_i (2P_i)⁻¹ A_iᵀ.
    let mut u = DVector::zeros(m);
    let mut schur = DMatrix::zeros(m, m);
    for (i, a) in instance.agents().iter().enumerate() {
        let ah = a.a() * &dec.hinv[i];
        u += &ah * &dec.q[i];
        schur += &ah * a.a().transpose();
    }
    let demand = instance.total_demand();
    let excess = &u - &demand;
    let scale = 1.0 + demand.amax().max(u.amax());
    let tol = 1e-12 * scale;

    for mask in order {
        if mask >= (1u32 << m) {
            continue;
        }
        let rows: Vec<usize> = (0..m).filter(|r| mask & (1 << r) != 0).collect();
        let mut lambda = DVector::zeros(m);
        if !rows.is_empty() {
            let k = rows.len();
            let sub = DMatrix::from_fn(k, k, |a, b| schur[(rows[a], rows[b])]);
            let rhs = DVector::from_fn(k, |a, _| excess[rows[a]]);
            let Some(sol) = sub.lu().solve(&rhs) else {
                continue;
            };
            for (a, &r) in rows.iter().enumerate() {
                lambda[r] = sol[a];
            }
        }
        if rows.iter().any(|&r| lambda[r] < -tol) {
            continue;
        }
        let xs = dec.decisions(instance, &lambda);
        let slack = &demand - instance.coupled_load(&xs);
        if (0..m).any(|r| !rows.contains(&r) && slack[r] < -tol) {
            continue;
        }
        let lambda = lambda.map(|l| l.max(0.0));
        return Ok(finish(instance, xs, lambda, rows));
    }
    Err(Error::Oracle("no active set satisfies the KKT conditions".into()))
}

/// Equality-constrained optimum from the full saddle-point system
///
/// ```text
/// [ 2P_1          A_1ᵀ ] [ x_1 ]   [ Q_1  ]
/// [      ⋱        ⋮    ] [  ⋮  ] = [  ⋮   ]
/// [          2P_n A_nᵀ ] [ x_n ]   [ Q_n  ]
/// [ A_1  …   A_n   0   ] [  λ  ]   [ Σd_i ]
/// ```
pub fn solve_equality(instance: &ProblemInstance) -> Result<OracleSolution> {
    let (n, p, m) = (instance.n(), instance.p(), instance.m());
    let dim = n * p + m;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (i, a) in instance.agents().iter().enumerate() {
        let quad = a.cost().as_quadratic().ok_or_else(|| {
            Error::Unsupported(format!("agent {i}: oracle needs quadratic costs"))
        })?;
        let off = i * p;
        kkt.view_mut((off, off), (p, p)).copy_from(&(quad.p() * 2.0));
        kkt.view_mut((off, n * p), (p, m)).copy_from(&a.a().transpose());
        kkt.view_mut((n * p, off), (m, p)).copy_from(a.a());
        rhs.rows_mut(off, p).copy_from(quad.q());
    }
    rhs.rows_mut(n * p, m).copy_from(&instance.total_demand());
    let sol = kkt
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Oracle("degenerate instance: singular KKT matrix".into()))?;
    let xs = (0..n)
        .map(|i| sol.rows(i * p, p).into_owned())
        .collect::<Vec<_>>();
    let lambda = sol.rows(n * p, m).into_owned();
    Ok(finish(instance, xs, lambda, (0..m).collect()))
}

/// Centralized projected dual ascent
/// `λ ← Π(λ + s(Σ A_i x_i(λ) − Σ d_i))`, with `Π` the projection onto
/// `λ ⪰ 0` (inequality) or the identity (equality). Stops when the KKT
/// residual drops to `1e-9` (scaled) or after `iters` steps.
///
/// `step` defaults to `1/L` with `L = Σ_i σ_max(A_i)² / (2 λ_min(P_i))`, an
/// upper bound on the dual curvature.
pub fn reference_projected_gradient(
    instance: &ProblemInstance,
    mode: Mode,
    iters: usize,
    step: Option<f64>,
) -> Result<OracleSolution> {
    let dec = Decoupled::new(instance)?;
    let step = match step {
        Some(s) => s,
        None => {
            let mut curvature = 0.0;
            for a in instance.agents() {
                let sv = a.a().clone().singular_values().max();
                let (lo, _) = a.cost().as_quadratic().map(|q| q.eigen_range()).unwrap_or((1.0, 1.0));
                curvature += sv * sv / (2.0 * lo);
            }
            1.0 / curvature
        }
    };
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Oracle(format!("invalid step {step}")));
    }
    let demand = instance.total_demand();
    let tol = 1e-9 * (1.0 + demand.amax());
    let mut lambda = DVector::zeros(instance.m());
    for _ in 0..iters {
        let xs = dec.decisions(instance, &lambda);
        let grad = instance.coupled_load(&xs) - &demand;
        let next = match mode {
            Mode::Inequality => (&lambda + step * &grad).map(|l| l.max(0.0)),
            Mode::Equality => &lambda + step * &grad,
        };
        let moved = (&next - &lambda).amax() / step;
        lambda = next;
        if moved <= tol {
            let xs = dec.decisions(instance, &lambda);
            let res = kkt_residuals(instance, &xs, &lambda, mode);
            if res.primal <= tol && res.complementarity <= tol * (1.0 + lambda.amax()) {
                let active = match mode {
                    Mode::Inequality => (0..instance.m()).filter(|&r| lambda[r] > 0.0).collect(),
                    Mode::Equality => (0..instance.m()).collect(),
                };
                return Ok(finish(instance, xs, lambda, active));
            }
        }
    }
    Err(Error::Oracle(format!(
        "projected gradient did not converge in {iters} iterations"
    )))
}
