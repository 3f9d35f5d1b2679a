//! Run configuration, figure presets, and output files for the `danyra`
//! binary.
//!
//! A configuration is a JSON object. A preset expands to one or more base
//! objects; keys from the config file are merged on top of each, then
//! command-line overrides are applied, and only then is the result checked
//! against [`RunConfig`]. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::engine::InitMode;
use crate::error::{Error, Result};
use crate::metrics::{bounds_report, recovery_iteration, BoundsReport};
use crate::netsim::{run_experiment_full, DisturbanceEvent, ExperimentPlan, Trace};
use crate::oracle::{solve_active_set, solve_equality, OracleSolution};
use crate::problem::{
    spectral_constants, validate_hyperparams, ConditionReport, GeneratorConfig, HyperParams,
    Mode, ProblemInstance,
};

pub const PRESETS: &[&str] = &["fig2", "fig3", "buffer-sweep", "equality"];

/// Environment variable holding the engine worker count.
pub const THREADS_ENV: &str = "DANYRA_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub seed: u64,
    pub n: usize,
    pub r_max: f64,
    pub extra_edges: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_eigen: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Generate(GenerateSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Least-norm preimage of each local demand.
    #[default]
    AtDemand,
    Zero,
    /// The demand preimage shifted by a common vector.
    Offset(Vec<f64>),
    Custom(Vec<Vec<f64>>),
}

fn one() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSource,
    pub hyper: HyperParams,
    pub mode: Mode,
    pub iters: u64,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceEvent>,
    #[serde(default = "one")]
    pub record_every: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters < 1 {
            return Err(Error::Config("iters must be ≥ 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::Config("record_every must be ≥ 1".into()));
        }
        self.hyper.validate()
    }

    pub fn build_instance(&self) -> Result<ProblemInstance> {
        match &self.instance {
            InstanceSource::Generate(g) => {
                let mut cfg = GeneratorConfig::new(g.seed, g.n, g.r_max, g.extra_edges);
                if let Some([lo, hi]) = g.p_eigen {
                    cfg.p_eigen = (lo, hi);
                }
                if let Some([lo, hi]) = g.c_range {
                    cfg.c_range = (lo, hi);
                }
                cfg.generate()
            }
            InstanceSource::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("instance file {}: {e}", path.display()))
                })?;
                ProblemInstance::from_json(&text)
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.instance {
            InstanceSource::Generate(g) => Some(g.seed),
            InstanceSource::File(_) => None,
        }
    }

    pub fn init_mode(&self, instance: &ProblemInstance) -> Result<InitMode> {
        let to_vec = |v: &[f64], what: &'static str| {
            if v.len() != instance.p() {
                return Err(Error::Dimension {
                    context: what,
                    expected: instance.p(),
                    actual: v.len(),
                });
            }
            Ok(DVector::from_column_slice(v))
        };
        Ok(match &self.init {
            InitSpec::AtDemand => InitMode::AtDemand,
            InitSpec::Zero => InitMode::Zero,
            InitSpec::Offset(v) => {
                let shift = to_vec(v, "init offset")?;
                let xs = instance
                    .agents()
                    .iter()
                    .map(|a| Ok(a.right_inverse()? * a.d() + &shift))
                    .collect::<Result<_>>()?;
                InitMode::Custom(xs)
            }
            InitSpec::Custom(rows) => InitMode::Custom(
                rows.iter()
                    .map(|r| to_vec(r, "init custom row"))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    pub fn plan(&self, instance: &ProblemInstance, threads: usize) -> Result<ExperimentPlan> {
        Ok(ExperimentPlan {
            hp: self.hyper.clone(),
            mode: self.mode,
            init: self.init_mode(instance)?,
            iters: self.iters,
            disturbances: self.disturbances.clone(),
            record_every: self.record_every,
            threads,
            seed: self.seed(),
        })
    }
}

/// One expanded run and the directory its files go to.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub iters: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
}

fn reference_instance() -> Value {
    json!({ "generate": { "seed": 1, "n": 14, "r_max": 70.0, "extra_edges": 5 } })
}

fn reference_hyper(buffer: Value) -> Value {
    json!({ "alpha": 0.01, "beta": 0.02, "eta": 0.1, "gamma": 0.2, "buffer": buffer })
}

/// Base objects of a preset, keyed by variant name.
pub fn preset(name: &str) -> Result<Vec<(String, Value)>> {
    let fig2 = || {
        json!({
            "instance": reference_instance(),
            "hyper": reference_hyper(json!({ "constant": 0.0 })),
            "mode": "ineq",
            "iters": 20000,
            "init": "at_demand",
            "disturbances": [
                { "at_iteration": 500, "agents": "all", "additive": [50.0, 50.0] }
            ],
            "record_every": 1,
        })
    };
    let sweep = |buffer: Value| {
        json!({
            "instance": reference_instance(),
            "hyper": reference_hyper(buffer),
            "mode": "ineq",
            "iters": 20000,
            "init": { "offset": [50.0, 50.0] },
            "disturbances": [],
            "record_every": 1,
        })
    };
    Ok(match name {
        "fig2" => vec![("fig2".into(), fig2())],
        "fig3" => vec![("fig3".into(), fig2())],
        "buffer-sweep" => vec![
            ("omega-0.01".into(), sweep(json!({ "constant": 0.01 }))),
            ("omega-0.1".into(), sweep(json!({ "constant": 0.1 }))),
            ("omega-1".into(), sweep(json!({ "constant": 1.0 }))),
            (
                "omega-5-over-k".into(),
                sweep(json!({ "harmonic": { "coeff": 5.0, "shift": 1.0 } })),
            ),
        ],
        "equality" => vec![(
            "equality".into(),
            json!({
                "instance": { "generate": {
                    "seed": 1, "n": 10, "r_max": 10.0, "extra_edges": 3,
                    "p_eigen": [1.0, 1.5], "c_range": [0.9, 1.1]
                } },
                "hyper": {
                    "alpha": 0.05, "beta": 0.02, "eta": 0.1, "gamma": 0.8,
                    "buffer": { "constant": 0.0 }
                },
                "mode": "eq",
                "iters": 20000,
                "init": { "offset": [1.0, 1.0] },
                "disturbances": [],
                "record_every": 1,
            }),
        )],
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Overlays `top` on `base`. Objects merge key by key, except that two
/// single-key objects with different keys (an enum switching variant) are
/// replaced outright.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let switches_variant = b.len() == 1
                && t.len() == 1
                && b.keys().next() != t.keys().next();
            if switches_variant {
                *b = t;
                return;
            }
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn apply_overrides(v: &mut Value, ov: &Overrides) -> Result<()> {
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    if let Some(seed) = ov.seed {
        let gen = obj
            .get_mut("instance")
            .and_then(|i| i.get_mut("generate"))
            .and_then(Value::as_object_mut)
            .ok_or_else(|| {
                Error::Config("--seed needs an `instance.generate` source".into())
            })?;
        gen.insert("seed".into(), json!(seed));
    }
    if let Some(iters) = ov.iters {
        obj.insert("iters".into(), json!(iters));
    }
    if let Some(out) = &ov.out {
        obj.insert("out".into(), json!(out));
    }
    if let Some(mode) = ov.mode {
        obj.insert("mode".into(), serde_json::to_value(mode)?);
    }
    Ok(())
}

/// Expands `file` (a JSON object, or nothing) plus overrides into the runs
/// to perform.
pub fn parse_config(file: Option<&str>, ov: &Overrides) -> Result<Vec<Experiment>> {
    let mut file: Map<String, Value> = match file {
        Some(text) => match serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config: {e}")))?
        {
            Value::Object(m) => m,
            _ => return Err(Error::Config("config must be a JSON object".into())),
        },
        None => Map::new(),
    };
    let file_preset = match file.remove("preset") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(Error::Config("`preset` must be a string".into())),
    };
    let preset_name = ov.preset.clone().or(file_preset);
    let bases = match &preset_name {
        Some(name) => preset(name)?,
        None => vec![("run".to_owned(), Value::Object(Map::new()))],
    };
    let multi = bases.len() > 1;
    bases
        .into_iter()
        .map(|(name, mut v)| {
            merge(&mut v, Value::Object(file.clone()));
            apply_overrides(&mut v, ov)?;
            let config: RunConfig = serde_json::from_value(v)
                .map_err(|e| Error::Config(format!("config ({name}): {e}")))?;
            config.validate()?;
            let out_dir = if multi {
                config.out.join(&name)
            } else {
                config.out.clone()
            };
            Ok(Experiment {
                name,
                config,
                out_dir,
            })
        })
        .collect()
}

pub fn parse_config_file(path: Option<&Path>, ov: &Overrides) -> Result<Vec<Experiment>> {
    let text = match path {
        Some(p) => Some(
            fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("config file {}: {e}", p.display())))?,
        ),
        None => None,
    };
    parse_config(text.as_deref(), ov)
}

/// Reads the engine worker count from the environment; unset means
/// sequential.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be an integer, got {s:?}"))),
    }
}

/// Violation bounds evaluated at the measured violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsFile {
    /// Iteration at which the violation was measured.
    pub violation_at: u64,
    /// Largest per-row violation at that iteration.
    pub c_vio: f64,
    #[serde(flatten)]
    pub bounds: BoundsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub mode: Mode,
    pub iters: u64,
    pub final_gap: f64,
    pub final_violation_l1: f64,
    pub recovery_from: u64,
    pub recovery_iteration: Option<u64>,
    pub oracle_cost: f64,
    pub conditions: ConditionReport,
    pub seconds_per_iteration: f64,
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub bounds: BoundsFile,
    pub report: RunReport,
}

pub fn solve_oracle(instance: &ProblemInstance, mode: Mode) -> Result<OracleSolution> {
    match mode {
        Mode::Inequality => solve_active_set(instance),
        Mode::Equality => solve_equality(instance),
    }
}

/// Runs one experiment in memory.
pub fn execute(exp: &Experiment, threads: usize) -> Result<RunOutput> {
    let cfg = &exp.config;
    let instance = cfg.build_instance()?;
    let oracle = solve_oracle(&instance, cfg.mode)?;
    let plan = cfg.plan(&instance, threads)?;
    let outcome = run_experiment_full(&instance, &plan, Some(&oracle))?;
    let trace = &outcome.trace;

    let sc = spectral_constants(&instance)?;
    let conditions = validate_hyperparams(&cfg.hyper, &sc, cfg.mode);
    let recovery_from = cfg
        .disturbances
        .iter()
        .map(|d| d.at_iteration)
        .min()
        .unwrap_or(0);
    let at = if recovery_from == 0 {
        &trace.initial
    } else {
        trace
            .row_at(recovery_from)
            .ok_or_else(|| Error::Config(format!("no trace row at {recovery_from}")))?
    };
    let c_vio = at.excess.iter().copied().fold(0.0, f64::max);
    let bounds = BoundsFile {
        violation_at: recovery_from,
        c_vio,
        bounds: bounds_report(&sc, &cfg.hyper, instance.n(), c_vio)?,
    };
    let last = trace.last().unwrap_or(&trace.initial);
    let report = RunReport {
        name: exp.name.clone(),
        mode: cfg.mode,
        iters: cfg.iters,
        final_gap: last.gap.unwrap_or(f64::NAN),
        final_violation_l1: last.violation_l1,
        recovery_from,
        recovery_iteration: recovery_iteration(trace, recovery_from),
        oracle_cost: oracle.f_star,
        conditions,
        seconds_per_iteration: outcome.seconds_per_iteration(),
    };
    Ok(RunOutput {
        trace: outcome.trace,
        bounds,
        report,
    })
}

/// Runs one experiment and writes `trace.csv`, `bounds.json` and
/// `report.json` into its output directory.
pub fn run(exp: &Experiment, threads: usize) -> Result<RunOutput> {
    let output = execute(exp, threads)?;
    fs::create_dir_all(&exp.out_dir)?;
    fs::write(exp.out_dir.join("trace.csv"), output.trace.to_csv())?;
    fs::write(
        exp.out_dir.join("bounds.json"),
        serde_json::to_string_pretty(&output.bounds)?,
    )?;
    fs::write(
        exp.out_dir.join("report.json"),
        serde_json::to_string_pretty(&output.report)?,
    )?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::BufferSchedule;

    fn expand(preset: &str) -> Vec<Experiment> {
        let ov = Overrides {
            preset: Some(preset.into()),
            ..Default::default()
        };
        parse_config(None, &ov).unwrap()
    }

    #[test]
    fn fig2_preset_matches_the_experiment() {
        let exps = expand("fig2");
        assert_eq!(exps.len(), 1);
        let c = &exps[0].config;
        let InstanceSource::Generate(g) = &c.instance else {
            panic!("fig2 generates its instance");
        };
        assert_eq!((g.n, g.r_max), (14, 70.0));
        assert_eq!(
            c.hyper,
            HyperParams::new(0.01, 0.02, 0.1, 0.2, BufferSchedule::Constant(0.0)).unwrap()
        );
        assert_eq!(c.mode, Mode::Inequality);
        assert_eq!(c.init, InitSpec::AtDemand);
        assert_eq!(
            c.disturbances,
            vec![DisturbanceEvent::all(500, vec![50.0, 50.0])]
        );
        assert_eq!(exps[0].out_dir, PathBuf::from("out"));
    }

    #[test]
    fn buffer_sweep_has_four_variants() {
        let exps = expand("buffer-sweep");
        let buffers: Vec<_> = exps.iter().map(|e| e.config.hyper.buffer.clone()).collect();
        assert_eq!(
            buffers,
            vec![
                BufferSchedule::Constant(0.01),
                BufferSchedule::Constant(0.1),
                BufferSchedule::Constant(1.0),
                BufferSchedule::harmonic(5.0),
            ]
        );
        for e in &exps {
            assert_eq!(e.config.init, InitSpec::Offset(vec![50.0, 50.0]));
            assert_eq!(e.out_dir, PathBuf::from("out").join(&e.name));
        }
    }

    #[test]
    fn missing_mode_is_named() {
        let text = r#"{
            "instance": {"generate": {"seed": 1, "n": 3, "r_max": 3.0, "extra_edges": 0}},
            "hyper": {"alpha": 0.01, "beta": 0.02, "eta": 0.1, "gamma": 0.2},
            "iters": 5
        }"#;
        let err = parse_config(Some(text), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("mode"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"preset": "fig2", "itres": 5}"#;
        let err = parse_config(Some(text), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("itres"), "{err}");
    }

    #[test]
    fn file_keys_and_flags_override_preset() {
        let text = r#"{"preset": "fig2", "iters": 700, "hyper": {"gamma": 0.5}}"#;
        let ov = Overrides {
            seed: Some(9),
            mode: Some(Mode::Equality),
            out: Some("elsewhere".into()),
            ..Default::default()
        };
        let exps = parse_config(Some(text), &ov).unwrap();
        let c = &exps[0].config;
        assert_eq!(c.iters, 700);
        assert_eq!(c.hyper.gamma, 0.5);
        assert_eq!(c.hyper.alpha, 0.01);
        assert_eq!(c.seed(), Some(9));
        assert_eq!(c.mode, Mode::Equality);
        assert_eq!(exps[0].out_dir, PathBuf::from("elsewhere"));

        let ov = Overrides {
            iters: Some(3),
            ..Default::default()
        };
        let exps = parse_config(Some(text), &ov).unwrap();
        assert_eq!(exps[0].config.iters, 3);
    }

    #[test]
    fn variant_switch_replaces_enum() {
        let text = r#"{"preset": "fig2", "hyper": {"buffer": {"harmonic": {"coeff": 2.0, "shift": 1.0}}},
                       "instance": {"file": "inst.json"}}"#;
        let exps = parse_config(Some(text), &Overrides::default()).unwrap();
        let c = &exps[0].config;
        assert_eq!(c.hyper.buffer, BufferSchedule::harmonic(2.0));
        assert_eq!(c.instance, InstanceSource::File("inst.json".into()));
        let ov = Overrides {
            seed: Some(2),
            ..Default::default()
        };
        assert!(parse_config(Some(text), &ov).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            r#"{"preset": "fig2", "iters": 0}"#,
            r#"{"preset": "fig2", "record_every": 0}"#,
            r#"{"preset": "fig2", "hyper": {"gamma": 1.5}}"#,
            r#"{"preset": "nope"}"#,
            r#"{"preset": 3}"#,
            r#"[1, 2]"#,
            r#"{"preset": "fig2", "mode": "both"}"#,
        ] {
            assert!(parse_config(Some(text), &Overrides::default()).is_err(), "{text}");
        }
    }

    #[test]
    fn offset_init_is_shifted_preimage() {
        let exps = expand("buffer-sweep");
        let c = &exps[0].config;
        let inst = c.build_instance().unwrap();
        let InitMode::Custom(xs) = c.init_mode(&inst).unwrap() else {
            panic!("offset expands to explicit decisions");
        };
        for (x, a) in xs.iter().zip(inst.agents()) {
            let back = a.a() * (x - DVector::from_element(2, 50.0));
            assert!((back - a.d()).amax() < 1e-12);
        }
    }

    #[test]
    fn equality_preset_passes_validator() {
        let c = &expand("equality")[0].config;
        let inst = c.build_instance().unwrap();
        let sc = spectral_constants(&inst).unwrap();
        let report = validate_hyperparams(&c.hyper, &sc, Mode::Equality);
        assert!(report.all_passed(), "{report:#?}");
        assert!(report.theta_prime.unwrap() < 1.0);
    }

    #[test]
    fn short_run_reports() {
        let text = r#"{"preset": "fig2", "iters": 40, "disturbances":
            [{"at_iteration": 20, "agents": "all", "additive": [50.0, 50.0]}]}"#;
        let exps = parse_config(Some(text), &Overrides::default()).unwrap();
        let out = execute(&exps[0], 0).unwrap();
        assert_eq!(out.trace.rows.len(), 40);
        assert_eq!(out.report.recovery_from, 20);
        assert_eq!(out.bounds.violation_at, 20);
        assert!(out.bounds.c_vio >= 700.0);
        // With ω = 0 the bound gives no finite recovery time.
        assert_eq!(out.bounds.bounds.recovery_bound_t, None);
        assert!(out.report.final_gap.is_finite());
    }
}
