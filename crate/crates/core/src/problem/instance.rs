use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cost::{AgentCost, AgentSpec, QuadraticCost};
use super::topology::Topology;
use crate::error::{Error, Result};
use crate::serde_util::{matrix_to_rows, rows_to_matrix};

/// The constraint-coupled problem: minimize `Σ f_i(x_i)` subject to
/// `Σ A_i x_i ≤ Σ d_i` (or `=` for the equality variant).
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    agents: Vec<AgentSpec>,
    topology: Topology,
    p: usize,
    m: usize,
}

impl ProblemInstance {
    pub fn new(agents: Vec<AgentSpec>, topology: Topology) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::InvalidInstance("no agents".into()))?;
        let (p, m) = (first.p(), first.m());
        if let Some((i, a)) = agents
            .iter()
            .enumerate()
            .find(|(_, a)| a.p() != p || a.m() != m)
        {
            return Err(Error::InvalidInstance(format!(
                "agent {i} has shape {}x{}, expected {m}x{p}",
                a.m(),
                a.p()
            )));
        }
        if topology.n() != agents.len() {
            return Err(Error::InvalidInstance(format!(
                "topology has {} nodes for {} agents",
                topology.n(),
                agents.len()
            )));
        }
        Ok(Self {
            agents,
            topology,
            p,
            m,
        })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentSpec {
        &self.agents[i]
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn total_demand(&self) -> DVector<f64> {
        self.agents
            .iter()
            .fold(DVector::zeros(self.m), |acc, a| acc + a.d())
    }

    /// `Σ A_i x_i`.
    pub fn coupled_load(&self, xs: &[DVector<f64>]) -> DVector<f64> {
        self.agents
            .iter()
            .zip(xs)
            .fold(DVector::zeros(self.m), |acc, (a, x)| acc + a.a() * x)
    }

    pub fn total_cost(&self, xs: &[DVector<f64>]) -> f64 {
        self.agents
            .iter()
            .zip(xs)
            .map(|(a, x)| a.cost().value(x))
            .sum()
    }

    pub fn is_quadratic(&self) -> bool {
        self.agents.iter().all(|a| a.cost().as_quadratic().is_some())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceDoc::try_from(self)?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk form of an instance. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub agents: Vec<AgentDoc>,
    pub topology: TopologyDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
}

impl TryFrom<&ProblemInstance> for InstanceDoc {
    type Error = Error;

    fn try_from(inst: &ProblemInstance) -> Result<Self> {
        let agents = inst
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| match a.cost() {
                AgentCost::Quadratic(c) => Ok(AgentDoc {
                    p: matrix_to_rows(c.p()),
                    q: c.q().as_slice().to_vec(),
                    a: matrix_to_rows(a.a()),
                    d: a.d().as_slice().to_vec(),
                    c: a.coupling_scale(),
                }),
                AgentCost::Oracle(_) => Err(Error::Unsupported(format!(
                    "agent {i} has an oracle cost, which has no serialized form"
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n: inst.n(),
            p: inst.p,
            m: inst.m,
            agents,
            topology: TopologyDoc {
                edges: inst.topology.edges().to_vec(),
                weights: inst.topology.edge_weights().to_vec(),
            },
        })
    }
}

fn matrix(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    let m = rows_to_matrix(rows).map_err(|e| Error::InvalidInstance(format!("{what}: {e}")))?;
    if m.shape() != shape {
        return Err(Error::InvalidInstance(format!(
            "{what}: expected {}x{}, got {}x{}",
            shape.0,
            shape.1,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

impl TryFrom<InstanceDoc> for ProblemInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        if doc.agents.len() != doc.n {
            return Err(Error::InvalidInstance(format!(
                "n = {} but {} agents listed",
                doc.n,
                doc.agents.len()
            )));
        }
        // Bound the dense work done on untrusted documents.
        if doc.p == 0 || doc.m == 0 || doc.p > 64 || doc.m > doc.p || doc.n > 4096 {
            return Err(Error::InvalidInstance(format!(
                "unsupported dimensions n={}, p={}, m={}",
                doc.n, doc.p, doc.m
            )));
        }
        let agents = doc
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = matrix(&a.p, (doc.p, doc.p), &format!("agent {i} P"))?;
                let am = matrix(&a.a, (doc.m, doc.p), &format!("agent {i} A"))?;
                let cost = QuadraticCost::new(p, DVector::from_vec(a.q.clone()))?;
                let spec = AgentSpec::new(cost, am, DVector::from_vec(a.d.clone()))?;
                Ok(match a.c {
                    Some(c) => spec.with_coupling_scale(c),
                    None => spec,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let topology =
            Topology::from_weighted_edges(doc.n, &doc.topology.edges, &doc.topology.weights)?;
        ProblemInstance::new(agents, topology)
    }
}
