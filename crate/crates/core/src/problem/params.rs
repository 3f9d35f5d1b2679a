use serde::{Deserialize, Serialize};

use super::instance::ProblemInstance;
use crate::error::{Error, Result};

/// Which coupled constraint the swarm enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ineq")]
    Inequality,
    #[serde(rename = "eq")]
    Equality,
}

/// Minimum-buffer schedule `ω_k` of the virtual queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BufferSchedule {
    Constant(f64),
    /// `ω_k = coeff / (k + shift)`.
    Harmonic { coeff: f64, shift: f64 },
    /// Explicit values; the last one repeats past the end.
    Sequence(Vec<f64>),
}

impl Default for BufferSchedule {
    fn default() -> Self {
        BufferSchedule::Constant(0.0)
    }
}

impl BufferSchedule {
    pub fn harmonic(coeff: f64) -> Self {
        BufferSchedule::Harmonic { coeff, shift: 1.0 }
    }

    pub fn at(&self, k: u64) -> f64 {
        match self {
            BufferSchedule::Constant(w) => *w,
            BufferSchedule::Harmonic { coeff, shift } => coeff / (k as f64 + shift),
            BufferSchedule::Sequence(v) => v
                .get(k as usize)
                .or_else(|| v.last())
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// `ω` used for the constant-buffer bounds; `ω_0` for decaying schedules.
    pub fn nominal(&self) -> f64 {
        self.at(0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, BufferSchedule::Constant(_))
    }

    /// `Σ ω_k² < ∞`. A sequence whose tail repeats a nonzero value is not.
    pub fn is_square_summable(&self) -> bool {
        match self {
            BufferSchedule::Constant(w) => *w == 0.0,
            BufferSchedule::Harmonic { .. } => true,
            BufferSchedule::Sequence(v) => v.last().is_none_or(|&w| w == 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            BufferSchedule::Constant(w) => w.is_finite() && *w >= 0.0,
            BufferSchedule::Harmonic { coeff, shift } => {
                coeff.is_finite() && *coeff >= 0.0 && shift.is_finite() && *shift > 0.0
            }
            BufferSchedule::Sequence(v) => v.iter().all(|w| w.is_finite() && *w >= 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::HyperParams(format!("invalid buffer schedule {self:?}")))
        }
    }
}

/// Step parameters `α, β, η, γ` and the buffer schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub buffer: BufferSchedule,
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64, eta: f64, gamma: f64, buffer: BufferSchedule) -> Result<Self> {
        let hp = Self {
            alpha,
            beta,
            eta,
            gamma,
            buffer,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::HyperParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma >= 1.0 {
            return Err(Error::HyperParams(format!(
                "gamma must be < 1, got {}",
                self.gamma
            )));
        }
        self.buffer.validate()
    }
}

/// Smoothness/convexity constants and the spectral quantities appearing in
/// the step-size conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub ell: f64,
    pub mu: f64,
    pub sigma_a_max: f64,
    pub sigma_a_min: f64,
    pub kappa_a: f64,
    pub sigma_l_max: f64,
    pub sigma_l_min: f64,
}

/// Computes the constants of a quadratic instance: `ℓ = 2 max λ_max(P_i)`,
/// `μ = 2 min λ_min(P_i)`, extreme singular values of `blkdiag(A_i)`, and
/// extreme nonzero eigenvalues of `L`.
pub fn spectral_constants(instance: &ProblemInstance) -> Result<SpectralConstants> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (i, a) in instance.agents().iter().enumerate() {
        let q = a.cost().as_quadratic().ok_or_else(|| {
            Error::Unsupported(format!(
                "agent {i} has a non-quadratic cost; supply ℓ and μ explicitly"
            ))
        })?;
        let (min, max) = q.eigen_range();
        lo = lo.min(min);
        hi = hi.max(max);
    }
    spectral_constants_with(instance, 2.0 * hi, 2.0 * lo)
}

/// As [`spectral_constants`] with user-supplied `ℓ` and `μ`.
pub fn spectral_constants_with(
    instance: &ProblemInstance,
    ell: f64,
    mu: f64,
) -> Result<SpectralConstants> {
    if !(mu > 0.0 && ell >= mu && ell.is_finite()) {
        return Err(Error::HyperParams(format!(
            "need ℓ ≥ μ > 0, got ℓ={ell}, μ={mu}"
        )));
    }
    let mut sa_min = f64::INFINITY;
    let mut sa_max = 0.0f64;
    for a in instance.agents() {
        let sv = a.a().clone().singular_values();
        sa_min = sa_min.min(sv.min());
        sa_max = sa_max.max(sv.max());
    }
    let spectrum = instance.topology().laplacian_spectrum();
    // Connected graph: exactly one zero eigenvalue, at the bottom.
    let nonzero = &spectrum[1..];
    let (sl_min, sl_max) = match (nonzero.first(), nonzero.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    Ok(SpectralConstants {
        ell,
        mu,
        sigma_a_max: sa_max,
        sigma_a_min: sa_min,
        kappa_a: sa_max / sa_min,
        sigma_l_max: sl_max,
        sigma_l_min: sl_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// supplied < bound
    Upper,
    /// supplied > bound
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub bound_kind: Bound,
    pub bound: f64,
    pub supplied: f64,
    pub passed: bool,
}

impl ConditionCheck {
    fn new(name: &str, bound_kind: Bound, bound: f64, supplied: f64) -> Self {
        let passed = match bound_kind {
            Bound::Upper => supplied < bound,
            Bound::Lower => supplied > bound,
        };
        Self {
            name: name.to_owned(),
            bound_kind,
            bound,
            supplied,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub mode: Mode,
    pub checks: Vec<ConditionCheck>,
    /// `c = (1−γ)²(1−3β)/(2γ²)`.
    pub c: f64,
    /// Linear rate of the equality variant, present only when every check passes.
    pub theta_prime: Option<f64>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Whether every check whose name starts with `prefix` passed.
    pub fn passed(&self, prefix: &str) -> bool {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .all(|c| c.passed)
    }
}

/// Evaluates the sufficient step-size conditions. Report-only: a failing
/// condition never prevents a run.
pub fn validate_hyperparams(
    hp: &HyperParams,
    sc: &SpectralConstants,
    mode: Mode,
) -> ConditionReport {
    let HyperParams {
        alpha,
        beta,
        eta,
        gamma,
        ..
    } = *hp;
    let SpectralConstants {
        ell,
        mu,
        sigma_a_max: sa_max,
        sigma_a_min: sa_min,
        kappa_a,
        sigma_l_max: sl_max,
        sigma_l_min: sl_min,
    } = *sc;
    let ell2 = ell * ell;
    let c = (1.0 - gamma).powi(2) * (1.0 - 3.0 * beta) / (2.0 * gamma * gamma);
    let drift = eta * ell2 * (3.0 * beta * eta + 1.0);

    use Bound::{Lower, Upper};
    let mut checks = vec![
        ConditionCheck::new("alpha.a_max", Upper, 1.0 / (6.0 * sa_max * sa_max * (1.0 + 3.0 * c)), alpha),
        ConditionCheck::new("alpha.laplacian", Upper, 1.0 / (3.0 * sl_max * sl_max * (1.0 + 4.0 * c)), alpha),
        ConditionCheck::new("alpha.queue", Upper, 1.0 / (6.0 * (1.0 + 3.0 * c)), alpha),
        ConditionCheck::new("alpha.smoothness", Upper, (2.0 * mu - drift) / (2.0 * ell2), alpha),
        ConditionCheck::new(
            "alpha.dual",
            Upper,
            2.0 * eta * (sa_min * sa_min - 3.0 * beta * eta * sa_max * sa_max),
            alpha,
        ),
        ConditionCheck::new("alpha.beta", Upper, 1.0 - 3.0 * beta, alpha),
        ConditionCheck::new("beta.third", Upper, 1.0 / 3.0, beta),
        ConditionCheck::new("beta.smoothness", Upper, (2.0 * mu / (eta * ell2) - 1.0) / (3.0 * eta), beta),
        ConditionCheck::new("beta.kappa", Upper, 1.0 / (3.0 * eta * kappa_a * kappa_a), beta),
        ConditionCheck::new("eta.smoothness", Upper, 2.0 * mu / ell2, eta),
        ConditionCheck::new("gamma.lower", Lower, 1.0 - 1.0 / (2.0 * kappa_a), gamma),
        ConditionCheck::new("gamma.upper", Upper, 1.0, gamma),
    ];

    let mut theta_prime = None;
    if mode == Mode::Equality {
        checks.push(ConditionCheck::new(
            "alpha.linear_rate",
            Upper,
            (8.0 * mu - 4.0 * drift + (1.0 - 3.0 * beta)) / (8.0 * ell2),
            alpha,
        ));
        if checks.iter().all(|c| c.passed) {
            let candidates = [
                1.0 + alpha * (2.0 * ell2 * alpha - 2.0 * mu + drift + (3.0 * beta - 1.0) / 4.0),
                (8.0 + alpha * (3.0 * beta - 1.0) * sl_min * sl_min) / 8.0,
                1.0 + beta * eta * (3.0 * beta * eta * sa_max * sa_max - sa_min * sa_min),
                0.5,
                4.0 * (1.0 - gamma).powi(2) * kappa_a * kappa_a,
            ];
            theta_prime = Some(candidates.into_iter().fold(f64::NEG_INFINITY, f64::max));
        }
    }

    ConditionReport {
        mode,
        checks,
        c,
        theta_prime,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::generate_instance;
    use proptest::prelude::*;

    fn unit_constants() -> SpectralConstants {
        SpectralConstants {
            ell: 2.0,
            mu: 2.0,
            sigma_a_max: 1.0,
            sigma_a_min: 1.0,
            kappa_a: 1.0,
            sigma_l_max: 1.0,
            sigma_l_min: 0.5,
        }
    }

    fn hp(alpha: f64, beta: f64, eta: f64, gamma: f64) -> HyperParams {
        HyperParams::new(alpha, beta, eta, gamma, BufferSchedule::Constant(0.0)).unwrap()
    }

    #[test]
    fn eta_and_gamma_checks() {
        let sc = unit_constants();
        let r = validate_hyperparams(&hp(0.01, 0.02, 0.1, 0.2), &sc, Mode::Inequality);
        let eta = r.check("eta.smoothness").unwrap();
        assert_eq!(eta.bound, 1.0);
        assert!(eta.passed);
        let g = r.check("gamma.lower").unwrap();
        assert_eq!(g.bound, 0.5);
        assert!(!g.passed);
        let r = validate_hyperparams(&hp(0.01, 0.02, 0.1, 0.6), &sc, Mode::Inequality);
        assert!(r.check("gamma.lower").unwrap().passed);
    }

    #[test]
    fn beta_above_third_fails() {
        let r = validate_hyperparams(&hp(0.01, 0.4, 0.1, 0.6), &unit_constants(), Mode::Inequality);
        assert!(!r.check("beta.third").unwrap().passed);
    }

    #[test]
    fn section_six_parameters_fail_gamma_but_report() {
        let inst = generate_instance(1, 14, 70.0, 5).unwrap();
        let sc = spectral_constants(&inst).unwrap();
        let r = validate_hyperparams(&hp(0.01, 0.02, 0.1, 0.2), &sc, Mode::Inequality);
        assert!(!r.check("gamma.lower").unwrap().passed);
        assert!(!r.all_passed());
        assert_eq!(r.checks.len(), 12);
        assert!(r.theta_prime.is_none());
    }

    #[test]
    fn theta_prime_only_when_all_pass() {
        let sc = unit_constants();
        let good = hp(0.005, 0.02, 0.1, 0.8);
        let r = validate_hyperparams(&good, &sc, Mode::Equality);
        assert!(r.all_passed(), "{:#?}", r.checks);
        let theta = r.theta_prime.unwrap();
        assert!((0.5..1.0).contains(&theta));
        let r = validate_hyperparams(&hp(0.005, 0.02, 0.1, 0.2), &sc, Mode::Equality);
        assert!(r.theta_prime.is_none());
    }

    #[test]
    fn identity_constants() {
        use crate::problem::{AgentSpec, ProblemInstance, QuadraticCost, metropolis_weights};
        use nalgebra::{DMatrix, DVector};
        let agents = (0..3)
            .map(|_| {
                let cost = QuadraticCost::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
                AgentSpec::new(cost, DMatrix::identity(2, 2), DVector::from_element(2, 1.0)).unwrap()
            })
            .collect();
        let topo = metropolis_weights(3, &[(0, 1), (1, 2)]).unwrap();
        let inst = ProblemInstance::new(agents, topo).unwrap();
        let sc = spectral_constants(&inst).unwrap();
        assert!((sc.ell - 2.0).abs() < 1e-12 && (sc.mu - 2.0).abs() < 1e-12);
        assert!((sc.sigma_a_max - 1.0).abs() < 1e-12);
        assert!((sc.sigma_a_min - 1.0).abs() < 1e-12);
        assert!((sc.kappa_a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn buffer_schedules() {
        assert_eq!(BufferSchedule::Constant(0.1).at(1000), 0.1);
        let h = BufferSchedule::Harmonic { coeff: 5.0, shift: 0.0 + 1.0 };
        assert_eq!(h.at(0), 5.0);
        assert_eq!(h.at(499), 0.01);
        assert!(h.is_square_summable());
        assert!(!BufferSchedule::Constant(0.1).is_square_summable());
        assert!(BufferSchedule::Constant(0.0).is_square_summable());
        let s = BufferSchedule::Sequence(vec![1.0, 0.5]);
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(7), 0.5);
        assert!(BufferSchedule::Constant(-1.0).validate().is_err());
        assert!(BufferSchedule::Harmonic { coeff: 1.0, shift: 0.0 }.validate().is_err());
    }

    #[test]
    fn hyperparams_reject_nonpositive() {
        assert!(HyperParams::new(0.0, 0.1, 0.1, 0.5, BufferSchedule::default()).is_err());
        assert!(HyperParams::new(0.1, 0.1, 0.1, 1.0, BufferSchedule::default()).is_err());
        assert!(HyperParams::new(0.1, f64::NAN, 0.1, 0.5, BufferSchedule::default()).is_err());
    }

    fn arb_constants() -> impl Strategy<Value = SpectralConstants> {
        (0.1f64..4.0, 1.0f64..3.0, 0.2f64..1.0, 1.0f64..3.0, 0.05f64..2.0, 0.01f64..1.0)
            .prop_map(|(mu, ratio, sa_min, kappa, sl_max, sl_frac)| SpectralConstants {
                ell: mu * ratio,
                mu,
                sigma_a_max: sa_min * kappa,
                sigma_a_min: sa_min,
                kappa_a: kappa,
                sigma_l_max: sl_max,
                sigma_l_min: sl_max * sl_frac,
            })
    }

    proptest! {
        #[test]
        fn shrinking_a_parameter_keeps_its_own_checks(
            sc in arb_constants(),
            alpha in 1e-4f64..0.5,
            beta in 1e-4f64..0.5,
            eta in 1e-4f64..1.0,
            gamma in 0.01f64..0.99,
            shrink in 0.01f64..1.0,
        ) {
            let base = hp(alpha, beta, eta, gamma);
            let r0 = validate_hyperparams(&base, &sc, Mode::Equality);

            let smaller_alpha = hp(alpha * shrink, beta, eta, gamma);
            let r = validate_hyperparams(&smaller_alpha, &sc, Mode::Equality);
            prop_assert!(!r0.passed("alpha") || r.passed("alpha"));

            let smaller_beta = hp(alpha, beta * shrink, eta, gamma);
            let r = validate_hyperparams(&smaller_beta, &sc, Mode::Equality);
            prop_assert!(!r0.passed("beta") || r.passed("beta"));

            let smaller_eta = hp(alpha, beta, eta * shrink, gamma);
            let r = validate_hyperparams(&smaller_eta, &sc, Mode::Equality);
            prop_assert!(!r0.passed("eta") || r.passed("eta"));
            prop_assert!(!r0.passed("beta") || r.passed("beta"));
        }
    }
}
