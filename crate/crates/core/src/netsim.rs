//! Synchronous experiment driver: iterates the engine, injects scheduled
//! disturbances, and records per-iteration metrics.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, InitMode, SwarmState};
use crate::error::{Error, Result};
use crate::metrics::{optimality_gap, state_slack_sum, violation_vector};
use crate::oracle::OracleSolution;
use crate::problem::{HyperParams, Mode, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentSelection {
    All,
    Ids(Vec<usize>),
}

/// What a disturbance shifts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceTarget {
    /// Both `x` and `x′`.
    #[default]
    DecisionAndVirtual,
    DecisionOnly,
}

/// Additive shift applied to targeted agents right after the round that
/// produces iteration `at_iteration`, so the jump shows in that trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEvent {
    pub at_iteration: u64,
    pub agents: AgentSelection,
    pub additive: Vec<f64>,
    #[serde(default)]
    pub target: DisturbanceTarget,
}

impl DisturbanceEvent {
    pub fn all(at_iteration: u64, additive: Vec<f64>) -> Self {
        Self {
            at_iteration,
            agents: AgentSelection::All,
            additive,
            target: DisturbanceTarget::default(),
        }
    }

    fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.at_iteration < 1 {
            return Err(Error::Config("disturbance at_iteration must be ≥ 1".into()));
        }
        if self.additive.len() != p {
            return Err(Error::Dimension {
                context: "disturbance vector",
                expected: p,
                actual: self.additive.len(),
            });
        }
        if self.additive.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("disturbance vector must be finite".into()));
        }
        if let AgentSelection::Ids(ids) = &self.agents {
            if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
                return Err(Error::Config(format!(
                    "disturbance targets unknown agent {bad} (n = {n})"
                )));
            }
        }
        Ok(())
    }
}

/// Adds the event's vector to `x` (and `x′` unless decision-only) of every
/// targeted agent. `y`, `δ` and `λ` are untouched.
pub fn apply_disturbance(state: &mut SwarmState, event: &DisturbanceEvent) -> Result<()> {
    let n = state.agents.len();
    let p = state.agents.first().map_or(0, |a| a.x.len());
    event.validate(n, p)?;
    let shift = DVector::from_column_slice(&event.additive);
    let ids: Vec<usize> = match &event.agents {
        AgentSelection::All => (0..n).collect(),
        AgentSelection::Ids(ids) => ids.clone(),
    };
    for i in ids {
        let agent = &mut state.agents[i];
        agent.x += &shift;
        if event.target == DisturbanceTarget::DecisionAndVirtual {
            agent.x_prime += &shift;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub hp: HyperParams,
    pub mode: Mode,
    pub init: InitMode,
    pub iters: u64,
    pub disturbances: Vec<DisturbanceEvent>,
    pub record_every: u64,
    /// Engine worker threads; 0 is the sequential reference path.
    pub threads: usize,
    /// Recorded in the trace metadata only.
    pub seed: Option<u64>,
}

impl ExperimentPlan {
    pub fn new(hp: HyperParams, mode: Mode, iters: u64) -> Self {
        Self {
            hp,
            mode,
            init: InitMode::AtDemand,
            iters,
            disturbances: Vec::new(),
            record_every: 1,
            threads: 0,
            seed: None,
        }
    }

    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        if self.iters < 1 {
            return Err(Error::Config("iters must be ≥ 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::Config("record_every must be ≥ 1".into()));
        }
        for d in &self.disturbances {
            d.validate(instance.n(), instance.p())?;
            if d.at_iteration > self.iters {
                return Err(Error::Config(format!(
                    "disturbance at iteration {} lies beyond the {}-iteration horizon",
                    d.at_iteration, self.iters
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    pub gap: Option<f64>,
    pub violation_l1: f64,
    /// Per-row violation `max{Σ(A x − d), 0}`; not part of the CSV.
    pub excess: Vec<f64>,
    pub slack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: Option<u64>,
    pub hp: HyperParams,
    pub mode: Mode,
    pub m: usize,
}

/// Metrics after each recorded iteration; `initial` holds the state before
/// the first iteration and is not part of the CSV rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub initial: TraceRow,
    pub rows: Vec<TraceRow>,
}

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn has_gap(&self) -> bool {
        self.initial.gap.is_some()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn row_at(&self, k: u64) -> Option<&TraceRow> {
        self.rows
            .binary_search_by_key(&k, |r| r.k)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("k");
        if self.has_gap() {
            h.push_str(",gap");
        }
        h.push_str(",violation_l1");
        for j in 0..self.meta.m {
            let _ = write!(h, ",slack_{j}");
        }
        h
    }

    /// CSV with header `k,gap,violation_l1,slack_0,…`; the gap column is
    /// omitted when no oracle was supplied. Floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}", r.k);
            if let Some(g) = r.gap {
                let _ = write!(out, ",{}", sig17(g));
            }
            let _ = write!(out, ",{}", sig17(r.violation_l1));
            for s in &r.slack {
                let _ = write!(out, ",{}", sig17(*s));
            }
            out.push('\n');
        }
        out
    }
}

/// A finished run: trace, final state, and timing.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub trace: Trace,
    pub final_state: SwarmState,
    pub elapsed: Duration,
}

impl ExperimentOutcome {
    pub fn seconds_per_iteration(&self) -> f64 {
        let iters = self.final_state.k.max(1) as f64;
        self.elapsed.as_secs_f64() / iters
    }
}

fn measure(
    instance: &ProblemInstance,
    state: &SwarmState,
    oracle: Option<&OracleSolution>,
) -> TraceRow {
    let xs = state.decisions();
    let excess = violation_vector(instance, &xs);
    TraceRow {
        k: state.k,
        gap: oracle.map(|o| optimality_gap(&xs, o)),
        violation_l1: excess.sum(),
        excess: excess.as_slice().to_vec(),
        slack: state_slack_sum(instance, state).as_slice().to_vec(),
    }
}

pub fn run_experiment(
    instance: &ProblemInstance,
    plan: &ExperimentPlan,
    oracle: Option<&OracleSolution>,
) -> Result<Trace> {
    run_experiment_full(instance, plan, oracle).map(|o| o.trace)
}

/// Runs `plan.iters` rounds. A disturbance scheduled at `k` shifts the state
/// produced by round `k−1 → k` before it is measured.
pub fn run_experiment_full(
    instance: &ProblemInstance,
    plan: &ExperimentPlan,
    oracle: Option<&OracleSolution>,
) -> Result<ExperimentOutcome> {
    plan.validate(instance)?;
    let engine =
        Engine::new(instance, plan.hp.clone(), plan.mode)?.with_threads(plan.threads)?;
    let state = engine.init_state(&plan.init)?;
    run_from_state(&engine, state, plan, oracle)
}

/// As [`run_experiment_full`] but starting from a given state (its `k` is
/// kept, so disturbance and buffer schedules continue from there).
pub fn run_from_state(
    engine: &Engine<'_>,
    mut state: SwarmState,
    plan: &ExperimentPlan,
    oracle: Option<&OracleSolution>,
) -> Result<ExperimentOutcome> {
    let instance = engine.instance();
    plan.validate(instance)?;
    state.check_against(instance)?;
    let initial = measure(instance, &state, oracle);
    let mut rows = Vec::with_capacity((plan.iters / plan.record_every) as usize + 1);
    let start = Instant::now();
    let end = state.k + plan.iters;
    while state.k < end {
        state = engine.iterate(&state)?;
        let k = state.k;
        let mut disturbed = false;
        for event in plan.disturbances.iter().filter(|e| e.at_iteration == k) {
            apply_disturbance(&mut state, event)?;
            disturbed = true;
        }
        if disturbed || k.is_multiple_of(plan.record_every) || k == end {
            rows.push(measure(instance, &state, oracle));
        }
    }
    let elapsed = start.elapsed();
    Ok(ExperimentOutcome {
        trace: Trace {
            meta: TraceMeta {
                seed: plan.seed,
                hp: plan.hp.clone(),
                mode: plan.mode,
                m: instance.m(),
            },
            initial,
            rows,
        },
        final_state: state,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_instance, BufferSchedule};

    fn plan(iters: u64) -> ExperimentPlan {
        let hp = HyperParams::new(0.01, 0.02, 0.1, 0.2, BufferSchedule::Constant(0.0)).unwrap();
        ExperimentPlan::new(hp, Mode::Inequality, iters)
    }

    #[test]
    fn single_iteration_single_row() {
        let inst = generate_instance(1, 4, 8.0, 1).unwrap();
        let trace = run_experiment(&inst, &plan(1), None).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].k, 1);
        assert_eq!(trace.initial.k, 0);
        assert_eq!(trace.csv_header(), "k,violation_l1,slack_0,slack_1");
    }

    #[test]
    fn stride_keeps_last_row() {
        let inst = generate_instance(1, 4, 8.0, 1).unwrap();
        let mut p = plan(10);
        p.record_every = 4;
        let trace = run_experiment(&inst, &p, None).unwrap();
        let ks: Vec<u64> = trace.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![4, 8, 10]);
    }

    #[test]
    fn disturbance_beyond_horizon_is_rejected() {
        let inst = generate_instance(1, 4, 8.0, 1).unwrap();
        let mut p = plan(10);
        p.disturbances.push(DisturbanceEvent::all(11, vec![1.0, 1.0]));
        assert!(matches!(run_experiment(&inst, &p, None), Err(Error::Config(_))));
        p.disturbances[0].at_iteration = 10;
        assert!(run_experiment(&inst, &p, None).is_ok());
        p.disturbances[0].at_iteration = 0;
        assert!(run_experiment(&inst, &p, None).is_err());
    }

    fn fresh_state(inst: &ProblemInstance) -> SwarmState {
        let p = plan(1);
        Engine::new(inst, p.hp, p.mode)
            .unwrap()
            .init_state(&InitMode::AtDemand)
            .unwrap()
    }

    #[test]
    fn zero_disturbance_is_identity() {
        let inst = generate_instance(2, 5, 10.0, 2).unwrap();
        let mut s = fresh_state(&inst);
        let before = s.clone();
        apply_disturbance(&mut s, &DisturbanceEvent::all(1, vec![0.0, 0.0])).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn single_agent_disturbance() {
        let inst = generate_instance(2, 5, 10.0, 2).unwrap();
        let mut s = fresh_state(&inst);
        let before = s.clone();
        let event = DisturbanceEvent {
            at_iteration: 3,
            agents: AgentSelection::Ids(vec![2]),
            additive: vec![1.0, -2.0],
            target: DisturbanceTarget::DecisionOnly,
        };
        apply_disturbance(&mut s, &event).unwrap();
        for i in 0..5 {
            if i == 2 {
                assert_eq!(s.agents[i].x[0], before.agents[i].x[0] + 1.0);
                assert_eq!(s.agents[i].x[1], before.agents[i].x[1] - 2.0);
                assert_eq!(s.agents[i].x_prime, before.agents[i].x_prime);
            } else {
                assert_eq!(s.agents[i], before.agents[i]);
            }
        }
        let bad = DisturbanceEvent {
            agents: AgentSelection::Ids(vec![9]),
            ..event
        };
        assert!(apply_disturbance(&mut s, &bad).is_err());
    }

    #[test]
    fn disturbed_row_shows_the_jump() {
        let inst = generate_instance(1, 14, 70.0, 5).unwrap();
        let mut p = plan(12);
        p.record_every = 5;
        p.disturbances.push(DisturbanceEvent::all(7, vec![50.0, 50.0]));
        let trace = run_experiment(&inst, &p, None).unwrap();
        let ks: Vec<u64> = trace.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![5, 7, 10, 12]);
        assert_eq!(trace.rows[0].violation_l1, 0.0);
        assert!(trace.rows[1].violation_l1 > 700.0);
    }

    #[test]
    fn disturbance_shifts_slack_by_coupled_load() {
        let inst = generate_instance(1, 14, 70.0, 5).unwrap();
        let mut s = fresh_state(&inst);
        let before = state_slack_sum(&inst, &s);
        apply_disturbance(&mut s, &DisturbanceEvent::all(500, vec![50.0, 50.0])).unwrap();
        let after = state_slack_sum(&inst, &s);
        // Σ_i A_i (50, 50)ᵀ = (700, 50 Σ C_i)
        let c_sum: f64 = inst.agents().iter().map(|a| a.coupling_scale().unwrap()).sum();
        let expected = DVector::from_vec(vec![700.0, 50.0 * c_sum]);
        assert!(((after - before) - expected).amax() < 1e-9);
    }
}
