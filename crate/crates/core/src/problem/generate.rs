//! Seeded generator for the IIoT-style allocation instances: two resources
//! per agent (`p = m = 2`), `A_i = blkdiag(1, C_i)`, demand
//! `d_i = [r_max/n, 1/n]`, and a ring with random chords.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cost::{AgentSpec, QuadraticCost};
use super::instance::ProblemInstance;
use super::topology::{metropolis_weights, Topology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n: usize,
    pub r_max: f64,
    pub extra_edges: usize,
    /// Range of the eigenvalues of each `P_i`.
    #[serde(default = "default_range")]
    pub p_eigen: (f64, f64),
    /// Range of the coupling scale `C_i`.
    #[serde(default = "default_range")]
    pub c_range: (f64, f64),
}

fn default_range() -> (f64, f64) {
    (0.5, 2.0)
}

impl GeneratorConfig {
    pub fn new(seed: u64, n: usize, r_max: f64, extra_edges: usize) -> Self {
        Self {
            seed,
            n,
            r_max,
            extra_edges,
            p_eigen: default_range(),
            c_range: default_range(),
        }
    }

    pub fn generate(&self) -> Result<ProblemInstance> {
        generate_with(self)
    }
}

pub fn generate_instance(
    seed: u64,
    n: usize,
    r_max: f64,
    extra_edges: usize,
) -> Result<ProblemInstance> {
    generate_with(&GeneratorConfig::new(seed, n, r_max, extra_edges))
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidInstance(format!(
            "{name} range must satisfy 0 < lo ≤ hi, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..p {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

fn random_spd(rng: &mut ChaCha8Rng, p: usize, eig: (f64, f64)) -> DMatrix<f64> {
    let basis = random_orthogonal(rng, p);
    let diag = DVector::from_fn(p, |_, _| uniform(rng, eig));
    let m = &basis * DMatrix::from_diagonal(&diag) * basis.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn generate_with(cfg: &GeneratorConfig) -> Result<ProblemInstance> {
    if cfg.n < 2 {
        return Err(Error::InvalidInstance(format!(
            "need at least 2 agents, got {}",
            cfg.n
        )));
    }
    if !(cfg.r_max.is_finite() && cfg.r_max > 0.0) {
        return Err(Error::InvalidInstance(format!(
            "r_max must be positive, got {}",
            cfg.r_max
        )));
    }
    check_range("p_eigen", cfg.p_eigen)?;
    check_range("c_range", cfg.c_range)?;

    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let demand = DVector::from_vec(vec![cfg.r_max / n as f64, 1.0 / n as f64]);

    let mut agents = Vec::with_capacity(n);
    for _ in 0..n {
        let p = random_spd(&mut rng, 2, cfg.p_eigen);
        // (0, 1]
        let q = DVector::from_fn(2, |_, _| 1.0 - rng.random::<f64>());
        let c = uniform(&mut rng, cfg.c_range);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, c]);
        let spec = AgentSpec::new(QuadraticCost::new(p, q)?, a, demand.clone())?;
        agents.push(spec.with_coupling_scale(c));
    }

    let mut edges = Topology::ring_edges(n);
    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !edges.iter().any(|&(a, b)| (a.min(b), a.max(b)) == (i, j)))
        .collect();
    candidates.shuffle(&mut rng);
    // More chords than missing edges saturates at the complete graph.
    edges.extend(candidates.into_iter().take(cfg.extra_edges));
    let topology = metropolis_weights(n, &edges)?;

    ProblemInstance::new(agents, topology)
}
