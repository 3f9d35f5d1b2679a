//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets exercise.

use std::fs;
use std::path::PathBuf;

use danyra::cli::{parse_config, Overrides};
use danyra::engine::SwarmState;
use danyra::oracle::OracleSolution;
use danyra::problem::ProblemInstance;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Seeds named `invalid_*` must be rejected; all others must parse.
fn check<T, E: std::fmt::Debug>(target: &str, parse: impl Fn(&str) -> Result<T, E>) {
    for (name, text) in seeds(target) {
        let result = parse(&text);
        if name.starts_with("invalid_") {
            assert!(result.is_err(), "{target}/{name} should be rejected");
        } else {
            assert!(result.is_ok(), "{target}/{name}: {:?}", result.err());
        }
    }
}

#[test]
fn instance_seeds() {
    check("instance_json", ProblemInstance::from_json);
}

#[test]
fn run_config_seeds() {
    check("run_config", |t| parse_config(Some(t), &Overrides::default()));
}

#[test]
fn state_snapshot_seeds() {
    check("state_snapshot", SwarmState::from_json);
}

#[test]
fn oracle_solution_seeds() {
    check("oracle_solution", OracleSolution::from_json);
}
