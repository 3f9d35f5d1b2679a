use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Mode, ProblemInstance};
use crate::serde_util;

/// Per-agent iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    /// Safe decision.
    #[serde(with = "serde_util::vector")]
    pub x: DVector<f64>,
    /// Virtual (nominal) decision tracked by `x`.
    #[serde(with = "serde_util::vector")]
    pub x_prime: DVector<f64>,
    #[serde(with = "serde_util::vector")]
    pub y: DVector<f64>,
    /// Virtual queue; `None` in equality mode.
    #[serde(with = "serde_util::opt_vector", default)]
    pub delta: Option<DVector<f64>>,
    #[serde(with = "serde_util::vector")]
    pub lambda: DVector<f64>,
}

impl AgentState {
    pub fn max_abs_diff(&self, other: &AgentState) -> f64 {
        let mut d = (&self.x - &other.x)
            .amax()
            .max((&self.x_prime - &other.x_prime).amax())
            .max((&self.y - &other.y).amax())
            .max((&self.lambda - &other.lambda).amax());
        if let (Some(a), Some(b)) = (&self.delta, &other.delta) {
            d = d.max((a - b).amax());
        }
        d
    }

    pub(crate) fn first_non_finite(&self) -> Option<&'static str> {
        let bad = |v: &DVector<f64>| v.iter().any(|e| !e.is_finite());
        if bad(&self.x) {
            Some("x")
        } else if bad(&self.x_prime) {
            Some("x_prime")
        } else if bad(&self.y) {
            Some("y")
        } else if self.delta.as_ref().is_some_and(bad) {
            Some("delta")
        } else if bad(&self.lambda) {
            Some("lambda")
        } else {
            None
        }
    }
}

/// Whole-network state at iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmState {
    pub k: u64,
    pub mode: Mode,
    pub agents: Vec<AgentState>,
}

impl SwarmState {
    pub fn decisions(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.x.clone()).collect()
    }

    /// Queues, or zeros in equality mode.
    pub fn queues(&self, m: usize) -> Vec<DVector<f64>> {
        self.agents
            .iter()
            .map(|a| a.delta.clone().unwrap_or_else(|| DVector::zeros(m)))
            .collect()
    }

    /// Largest componentwise change between two states.
    pub fn max_abs_diff(&self, other: &SwarmState) -> f64 {
        self.agents
            .iter()
            .zip(&other.agents)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Checks shapes against an instance (used for snapshots read from disk).
    pub fn check_against(&self, instance: &ProblemInstance) -> Result<()> {
        if self.agents.len() != instance.n() {
            return Err(Error::Dimension {
                context: "snapshot agent count",
                expected: instance.n(),
                actual: self.agents.len(),
            });
        }
        let (p, m) = (instance.p(), instance.m());
        for a in &self.agents {
            for (ctx, v, want) in [
                ("snapshot x", &a.x, p),
                ("snapshot x_prime", &a.x_prime, p),
                ("snapshot y", &a.y, m),
                ("snapshot lambda", &a.lambda, m),
            ] {
                if v.len() != want {
                    return Err(Error::Dimension {
                        context: ctx,
                        expected: want,
                        actual: v.len(),
                    });
                }
            }
            match (&a.delta, self.mode) {
                (Some(d), Mode::Inequality) if d.len() == m => {}
                (None, Mode::Equality) => {}
                _ => return Err(Error::Config("snapshot queue does not match mode".into())),
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// How `x_0` and `x′_0` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Least-norm preimage of the demand: `A_i x_i = d_i`.
    AtDemand,
    Custom(Vec<DVector<f64>>),
    Zero,
}
