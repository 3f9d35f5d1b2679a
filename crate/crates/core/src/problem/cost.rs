use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `f(x) = xᵀPx − Qᵀx` with `P` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    p: DMatrix<f64>,
    q: DVector<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl QuadraticCost {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::InvalidInstance(format!(
                "cost matrix must be square, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if q.len() != p.nrows() {
            return Err(Error::Dimension {
                context: "cost linear term",
                expected: p.nrows(),
                actual: q.len(),
            });
        }
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite cost coefficient".into()));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidInstance(format!(
                "cost matrix not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = p.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "cost matrix not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x)) - self.q.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.p * x) - &self.q
    }

    /// Extreme eigenvalues of `P` as `(min, max)`.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = self.p.clone().symmetric_eigenvalues();
        (eig.min(), eig.max())
    }
}

/// A user-supplied cost given by value and gradient evaluations.
pub trait CostOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone)]
pub enum AgentCost {
    Quadratic(QuadraticCost),
    Oracle(Arc<dyn CostOracle>),
}

impl AgentCost {
    pub fn dim(&self) -> usize {
        match self {
            AgentCost::Quadratic(c) => c.dim(),
            AgentCost::Oracle(o) => o.dim(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            AgentCost::Quadratic(c) => c.value(x),
            AgentCost::Oracle(o) => o.value(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            AgentCost::Quadratic(c) => c.gradient(x),
            AgentCost::Oracle(o) => o.gradient(x),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticCost> {
        match self {
            AgentCost::Quadratic(c) => Some(c),
            AgentCost::Oracle(_) => None,
        }
    }
}

impl From<QuadraticCost> for AgentCost {
    fn from(c: QuadraticCost) -> Self {
        AgentCost::Quadratic(c)
    }
}

/// One agent's local data: cost, coupling matrix `A` (m×p, full row rank) and demand `d`.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    cost: AgentCost,
    a: DMatrix<f64>,
    d: DVector<f64>,
    coupling_scale: Option<f64>,
}

const RANK_TOL: f64 = 1e-10;

impl AgentSpec {
    pub fn new(cost: impl Into<AgentCost>, a: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let cost = cost.into();
        let (m, p) = a.shape();
        if cost.dim() != p {
            return Err(Error::Dimension {
                context: "coupling matrix columns",
                expected: cost.dim(),
                actual: p,
            });
        }
        if d.len() != m {
            return Err(Error::Dimension {
                context: "demand vector",
                expected: m,
                actual: d.len(),
            });
        }
        if m == 0 || p < m {
            return Err(Error::InvalidInstance(format!(
                "coupling matrix must be m×p with 1 ≤ m ≤ p, got {m}x{p}"
            )));
        }
        if a.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite coupling data".into()));
        }
        let sigma_min = a.clone().singular_values().min();
        if !(sigma_min > RANK_TOL) {
            return Err(Error::InvalidInstance(format!(
                "coupling matrix lacks full row rank (smallest singular value {sigma_min:e})"
            )));
        }
        Ok(Self {
            cost,
            a,
            d,
            coupling_scale: None,
        })
    }

    /// Records the scalar `C` when `A = blkdiag(1, C)`.
    pub fn with_coupling_scale(mut self, c: f64) -> Self {
        self.coupling_scale = Some(c);
        self
    }

    pub fn cost(&self) -> &AgentCost {
        &self.cost
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn coupling_scale(&self) -> Option<f64> {
        self.coupling_scale
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// `Aᵀ(AAᵀ)⁻¹`, the right inverse used by the decision projection.
    pub fn right_inverse(&self) -> Result<DMatrix<f64>> {
        let gram = &self.a * self.a.transpose();
        let inv = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("A·Aᵀ is not positive definite".into()))?
            .inverse();
        Ok(self.a.transpose() * inv)
    }
}

fn check_dim(x: &DVector<f64>, p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::Dimension {
            context: "decision vector",
            expected: p,
            actual: x.len(),
        });
    }
    Ok(())
}

pub fn cost_value(spec: &AgentSpec, x: &DVector<f64>) -> Result<f64> {
    check_dim(x, spec.p())?;
    Ok(spec.cost.value(x))
}

pub fn cost_gradient(spec: &AgentSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(x, spec.p())?;
    Ok(spec.cost.gradient(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn identity_spec(q: DVector<f64>) -> AgentSpec {
        let cost = QuadraticCost::new(DMatrix::identity(2, 2), q).unwrap();
        AgentSpec::new(cost, DMatrix::identity(2, 2), dvector![1.0, 1.0]).unwrap()
    }

    #[test]
    fn value_examples() {
        let spec = identity_spec(dvector![0.0, 0.0]);
        assert_eq!(cost_value(&spec, &dvector![1.0, 1.0]).unwrap(), 2.0);
        let spec = identity_spec(dvector![2.0, 0.0]);
        assert_eq!(cost_value(&spec, &dvector![1.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn gradient_examples() {
        let spec = identity_spec(dvector![0.0, 0.0]);
        assert_eq!(
            cost_gradient(&spec, &dvector![1.0, 2.0]).unwrap(),
            dvector![2.0, 4.0]
        );
        let spec = identity_spec(dvector![0.3, 0.7]);
        assert_eq!(
            cost_gradient(&spec, &DVector::zeros(2)).unwrap(),
            dvector![-0.3, -0.7]
        );
    }

    #[test]
    fn dimension_mismatch() {
        let spec = identity_spec(dvector![0.0, 0.0]);
        assert!(matches!(
            cost_value(&spec, &dvector![1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            cost_gradient(&spec, &dvector![1.0, 2.0, 3.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_bad_cost_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(QuadraticCost::new(asym, dvector![0.0, 0.0]).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QuadraticCost::new(indefinite, dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_rank_deficient_coupling() {
        let cost = QuadraticCost::new(DMatrix::identity(2, 2), dvector![0.0, 0.0]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(AgentSpec::new(cost.clone(), a, dvector![1.0, 1.0]).is_err());
        // p < m
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(AgentSpec::new(cost, a, dvector![1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn right_inverse_is_exact() {
        let cost = QuadraticCost::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let spec = AgentSpec::new(cost, a.clone(), dvector![0.0, 0.0]).unwrap();
        let r = spec.right_inverse().unwrap();
        assert!((&a * r - DMatrix::identity(2, 2)).amax() < 1e-10);
    }
}
