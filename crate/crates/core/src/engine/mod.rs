//! One synchronous round of the anytime-feasible primal-dual method.
//!
//! Every round has three neighbor exchanges: `{λ, y}`, then `z`, then the
//! updated `y`. Within an exchange each agent reads only the snapshot taken
//! at its start, and neighbor sums are accumulated in ascending neighbor
//! index, so sequential and parallel execution give bit-identical results.
//! The decision update is the Euclidean projection of the virtual decision
//! onto a single affine set, computed in closed form with a cached right
//! inverse `Aᵀ(AAᵀ)⁻¹`.

mod state;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use state::{AgentState, InitMode, SwarmState};

use crate::error::{Error, Result};
use crate::problem::{AgentSpec, HyperParams, Mode, ProblemInstance, Topology};

/// Data exchanged in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessages {
    /// `Σ_j w_ij (λ_i − λ_j)`
    pub lambda_bar: Vec<DVector<f64>>,
    /// `Σ_j w_ij (y_i − y_j)`
    pub y_bar: Vec<DVector<f64>>,
    /// `A_i x′_i + ȳ_i (+ δ_i)`
    pub z: Vec<DVector<f64>>,
    /// `Σ_j w_ij (z_i − z_j)`
    pub z_bar: Vec<DVector<f64>>,
    /// `ȳ` of the updated auxiliary variables; empty until the third exchange.
    pub y_bar_next: Vec<DVector<f64>>,
}

/// First two exchanges of a round, reading only iteration-`k` values.
pub fn exchange_primary(state: &SwarmState, instance: &ProblemInstance) -> RoundMessages {
    let topo = instance.topology();
    let lambdas: Vec<_> = state.agents.iter().map(|a| a.lambda.clone()).collect();
    let ys: Vec<_> = state.agents.iter().map(|a| a.y.clone()).collect();
    let lambda_bar = topo.laplacian_apply(&lambdas);
    let y_bar = topo.laplacian_apply(&ys);
    let z: Vec<_> = state
        .agents
        .iter()
        .zip(instance.agents())
        .zip(&y_bar)
        .map(|((a, spec), yb)| {
            let mut z = spec.a() * &a.x_prime + yb;
            if let Some(delta) = &a.delta {
                z += delta;
            }
            z
        })
        .collect();
    let z_bar = topo.laplacian_apply(&z);
    RoundMessages {
        lambda_bar,
        y_bar,
        z,
        z_bar,
        y_bar_next: Vec::new(),
    }
}

/// Third exchange: `ȳ_{k+1}`.
pub fn exchange_auxiliary(topology: &Topology, y_next: &[DVector<f64>]) -> Vec<DVector<f64>> {
    topology.laplacian_apply(y_next)
}

/// `x′ − α(∇f(x′) + Aᵀ(z − d + λ))`, with `grad = ∇f(x′_k)`.
pub fn step_virtual_decision(
    spec: &AgentSpec,
    agent: &AgentState,
    z: &DVector<f64>,
    grad: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    let residual = z - spec.d() + &agent.lambda;
    &agent.x_prime - alpha * (grad + spec.a().transpose() * residual)
}

/// `y − α(z̄ + λ̄)`.
pub fn step_auxiliary(
    agent: &AgentState,
    z_bar: &DVector<f64>,
    lambda_bar: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    &agent.y - alpha * (z_bar + lambda_bar)
}

/// `max{δ − α(z − d + λ), ω}` elementwise.
pub fn step_virtual_queue(
    spec: &AgentSpec,
    agent: &AgentState,
    z: &DVector<f64>,
    alpha: f64,
    omega: f64,
) -> Result<DVector<f64>> {
    let delta = agent.delta.as_ref().ok_or(Error::Mode {
        expected: Mode::Inequality,
        actual: Mode::Equality,
    })?;
    let raw = delta - alpha * (z - spec.d() + &agent.lambda);
    Ok(raw.map(|v| v.max(omega)))
}

/// `λ + β(z_{k+1} − d − ηA(Aᵀλ + ∇f(x′_k)))`.
pub fn step_dual(
    spec: &AgentSpec,
    agent: &AgentState,
    z_next: &DVector<f64>,
    grad_old: &DVector<f64>,
    hp: &HyperParams,
) -> DVector<f64> {
    let a = spec.a();
    let inner = a.transpose() * &agent.lambda + grad_old;
    let drift = hp.eta * (a * inner);
    &agent.lambda + hp.beta * (z_next - spec.d() - drift)
}

/// Right-hand side `b` of the affine set `{x : A x = b}` onto which the
/// virtual decision is projected:
///
/// ```text
/// inequality: b = A x_k − γ(A x_k + ȳ_{k+1} + δ_{k+1} − d) + (1−γ)(δ_k − δ_{k+1})
/// equality:   b = A x_k − γ(A x_k + ȳ_{k+1} − d)
/// ```
pub fn projection_target(
    spec: &AgentSpec,
    agent: &AgentState,
    y_bar_next: &DVector<f64>,
    delta_next: Option<&DVector<f64>>,
    gamma: f64,
) -> DVector<f64> {
    let ax = spec.a() * &agent.x;
    match (agent.delta.as_ref(), delta_next) {
        (Some(delta), Some(delta_next)) => {
            let slack = &ax + y_bar_next + delta_next - spec.d();
            ax - gamma * slack + (1.0 - gamma) * (delta - delta_next)
        }
        _ => {
            let slack = &ax + y_bar_next - spec.d();
            ax - gamma * slack
        }
    }
}

/// Closest point to `x_prime` in `{x : A x = target}`:
/// `x′ + Aᵀ(AAᵀ)⁻¹(target − A x′)`.
pub fn project_decision(
    a: &DMatrix<f64>,
    right_inverse: &DMatrix<f64>,
    x_prime: &DVector<f64>,
    target: &DVector<f64>,
) -> DVector<f64> {
    x_prime + right_inverse * (target - a * x_prime)
}

/// Runs rounds of the method on one instance with fixed parameters.
pub struct Engine<'a> {
    instance: &'a ProblemInstance,
    hp: HyperParams,
    mode: Mode,
    right_inverses: Vec<DMatrix<f64>>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Engine<'a> {
    pub fn new(instance: &'a ProblemInstance, hp: HyperParams, mode: Mode) -> Result<Self> {
        hp.validate()?;
        let right_inverses = instance
            .agents()
            .iter()
            .map(AgentSpec::right_inverse)
            .collect::<Result<_>>()?;
        Ok(Self {
            instance,
            hp,
            mode,
            right_inverses,
            pool: None,
        })
    }

    /// Runs per-agent work on `threads` workers; `0` keeps the sequential
    /// reference path.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = match threads {
            0 => None,
            t => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            ),
        };
        Ok(self)
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.instance
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn right_inverse(&self, i: usize) -> &DMatrix<f64> {
        &self.right_inverses[i]
    }

    /// Initial state: `y = 0`, `λ = 0`, `δ = max(0, ω_0)·1` in inequality mode.
    pub fn init_state(&self, init: &InitMode) -> Result<SwarmState> {
        let (n, p, m) = (self.instance.n(), self.instance.p(), self.instance.m());
        let xs: Vec<DVector<f64>> = match init {
            InitMode::AtDemand => self
                .instance
                .agents()
                .iter()
                .zip(&self.right_inverses)
                .map(|(spec, r)| r * spec.d())
                .collect(),
            InitMode::Zero => vec![DVector::zeros(p); n],
            InitMode::Custom(xs) => {
                if xs.len() != n {
                    return Err(Error::Dimension {
                        context: "initial decisions",
                        expected: n,
                        actual: xs.len(),
                    });
                }
                if let Some(x) = xs.iter().find(|x| x.len() != p) {
                    return Err(Error::Dimension {
                        context: "initial decision",
                        expected: p,
                        actual: x.len(),
                    });
                }
                xs.clone()
            }
        };
        let omega0 = self.hp.buffer.at(0).max(0.0);
        let agents = xs
            .into_iter()
            .map(|x| AgentState {
                x_prime: x.clone(),
                x,
                y: DVector::zeros(m),
                delta: (self.mode == Mode::Inequality).then(|| DVector::from_element(m, omega0)),
                lambda: DVector::zeros(m),
            })
            .collect();
        Ok(SwarmState {
            k: 0,
            mode: self.mode,
            agents,
        })
    }

    fn per_agent<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let n = self.instance.n();
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    fn laplacian_apply(&self, values: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let topo = self.instance.topology();
        self.per_agent(|i| topo.local_difference(i, values))
    }

    /// Message exchange for the current state, using the engine's workers.
    pub fn exchange(&self, state: &SwarmState) -> RoundMessages {
        let lambdas: Vec<_> = state.agents.iter().map(|a| a.lambda.clone()).collect();
        let ys: Vec<_> = state.agents.iter().map(|a| a.y.clone()).collect();
        let lambda_bar = self.laplacian_apply(&lambdas);
        let y_bar = self.laplacian_apply(&ys);
        let z = self.per_agent(|i| {
            let a = &state.agents[i];
            let mut z = self.instance.agent(i).a() * &a.x_prime + &y_bar[i];
            if let Some(delta) = &a.delta {
                z += delta;
            }
            z
        });
        let z_bar = self.laplacian_apply(&z);
        RoundMessages {
            lambda_bar,
            y_bar,
            z,
            z_bar,
            y_bar_next: Vec::new(),
        }
    }

    /// One full round `k → k+1`.
    pub fn iterate(&self, state: &SwarmState) -> Result<SwarmState> {
        if state.mode != self.mode {
            return Err(Error::Mode {
                expected: self.mode,
                actual: state.mode,
            });
        }
        let hp = &self.hp;
        let omega = hp.buffer.at(state.k);
        let mut msgs = self.exchange(state);

        struct Primal {
            grad: DVector<f64>,
            x_prime: DVector<f64>,
            y: DVector<f64>,
            delta: Option<DVector<f64>>,
        }
        let primal: Vec<Result<Primal>> = self.per_agent(|i| {
            let spec = self.instance.agent(i);
            let agent = &state.agents[i];
            let grad = spec.cost().gradient(&agent.x_prime);
            let x_prime = step_virtual_decision(spec, agent, &msgs.z[i], &grad, hp.alpha);
            let y = step_auxiliary(agent, &msgs.z_bar[i], &msgs.lambda_bar[i], hp.alpha);
            let delta = match self.mode {
                Mode::Inequality => Some(step_virtual_queue(
                    spec,
                    agent,
                    &msgs.z[i],
                    hp.alpha,
                    omega,
                )?),
                Mode::Equality => None,
            };
            Ok(Primal {
                grad,
                x_prime,
                y,
                delta,
            })
        });
        let primal = primal.into_iter().collect::<Result<Vec<_>>>()?;

        let y_next: Vec<_> = primal.iter().map(|p| p.y.clone()).collect();
        msgs.y_bar_next = self.laplacian_apply(&y_next);

        let agents: Vec<AgentState> = self.per_agent(|i| {
            let spec = self.instance.agent(i);
            let agent = &state.agents[i];
            let Primal {
                grad,
                x_prime,
                y,
                delta,
            } = &primal[i];
            let mut z_next = spec.a() * x_prime + &msgs.y_bar_next[i];
            if let Some(d) = delta {
                z_next += d;
            }
            let lambda = step_dual(spec, agent, &z_next, grad, hp);
            let target =
                projection_target(spec, agent, &msgs.y_bar_next[i], delta.as_ref(), hp.gamma);
            let x = project_decision(spec.a(), &self.right_inverses[i], x_prime, &target);
            AgentState {
                x,
                x_prime: x_prime.clone(),
                y: y.clone(),
                delta: delta.clone(),
                lambda,
            }
        });

        let k_next = state.k + 1;
        for (i, a) in agents.iter().enumerate() {
            if let Some(field) = a.first_non_finite() {
                return Err(Error::Divergence {
                    iteration: k_next,
                    agent: i,
                    field,
                });
            }
        }
        Ok(SwarmState {
            k: k_next,
            mode: self.mode,
            agents,
        })
    }
}
