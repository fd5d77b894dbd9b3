//! Experiment-config ingestion: validates the JSON document field by
//! field, reporting the JSON pointer of the first offending value, before
//! handing it to serde. Cross-field constraints are then enforced by
//! [`ExperimentConfig::validate`].

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::harness::{ExperimentConfig, MIN_REPS};
use serde_json::Value;

fn schema_err(pointer: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn require<'a>(obj: &'a Value, pointer: &str, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| schema_err(&format!("{pointer}/{key}"), "missing required field"))
}

fn as_f64(v: &Value, pointer: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| schema_err(pointer, "expected a number"))
}

fn as_u64(v: &Value, pointer: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| schema_err(pointer, "expected a nonnegative integer"))
}

const KNOWN_TOP: [&str; 11] = [
    "process",
    "master_seed",
    "n_grid",
    "reps",
    "estimators",
    "statistics",
    "grid_m",
    "sigma2_mode",
    "sigma2_budget",
    "sigma2_mc_reps",
    "checks",
];
const KNOWN_PROCESS: [&str; 6] = ["beta", "trunc_k", "innovation", "mu", "sigma", "seed"];
const KNOWN_STATISTICS: [&str; 7] = [
    "ks_known",
    "ks_estimated",
    "cvm",
    "profile",
    "reduction_p1",
    "reduction_p2",
    "sqrt_points",
];
const KNOWN_CHECKS: [&str; 10] = [
    "negligibility",
    "profile_proportionality",
    "m_branch",
    "gaussian_regime",
    "m_variance_inflation",
    "reduction_rate",
    "m_equivalence",
    "ks_limit_shape",
    "cvm_proxy",
    "z1_moments",
];

/// Parses and validates an experiment config document.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| schema_err("", format!("invalid JSON: {e}")))?;
    let root = value
        .as_object()
        .ok_or_else(|| schema_err("", "config must be a JSON object"))?;

    for key in root.keys() {
        if !KNOWN_TOP.contains(&key.as_str()) {
            return Err(schema_err(&format!("/{key}"), "unknown field"));
        }
    }

    // process
    let process = require(&value, "", "process")?;
    let pobj = process
        .as_object()
        .ok_or_else(|| schema_err("/process", "expected an object"))?;
    for key in pobj.keys() {
        if !KNOWN_PROCESS.contains(&key.as_str()) {
            return Err(schema_err(&format!("/process/{key}"), "unknown field"));
        }
    }
    let beta = as_f64(require(process, "/process", "beta")?, "/process/beta")?;
    if !(beta > 0.5 && beta < 1.0) {
        return Err(schema_err(
            "/process/beta",
            format!("must lie in the open interval (1/2, 1); got {beta}"),
        ));
    }
    let trunc_k = as_u64(require(process, "/process", "trunc_k")?, "/process/trunc_k")?;
    if trunc_k < 1 {
        return Err(schema_err("/process/trunc_k", "must be at least 1"));
    }
    if let Some(innov) = process.get("innovation") {
        let s = innov
            .as_str()
            .ok_or_else(|| schema_err("/process/innovation", "expected a string"))?;
        if s != "standard_gaussian" {
            return Err(schema_err(
                "/process/innovation",
                format!("unknown innovation `{s}`; only standard_gaussian is available"),
            ));
        }
    }
    let sigma = as_f64(require(process, "/process", "sigma")?, "/process/sigma")?;
    if sigma == 0.0 {
        return Err(schema_err("/process/sigma", "must be nonzero"));
    }
    as_f64(require(process, "/process", "mu")?, "/process/mu")?;

    as_u64(require(&value, "", "master_seed")?, "/master_seed")?;

    // n_grid
    let n_grid = require(&value, "", "n_grid")?
        .as_array()
        .ok_or_else(|| schema_err("/n_grid", "expected an array of integers"))?;
    if n_grid.is_empty() {
        return Err(schema_err("/n_grid", "must be nonempty"));
    }
    let mut prev = 0u64;
    for (i, v) in n_grid.iter().enumerate() {
        let n = as_u64(v, &format!("/n_grid/{i}"))?;
        if n < 8 {
            return Err(schema_err(&format!("/n_grid/{i}"), "sizes below 8 are not useful"));
        }
        if n <= prev {
            return Err(schema_err(
                &format!("/n_grid/{i}"),
                "n_grid must be strictly ascending",
            ));
        }
        prev = n;
    }

    let reps = as_u64(require(&value, "", "reps")?, "/reps")?;
    if reps < MIN_REPS as u64 {
        return Err(schema_err(
            "/reps",
            format!("must be at least {MIN_REPS}; got {reps}"),
        ));
    }

    // estimators
    let estimators = require(&value, "", "estimators")?
        .as_array()
        .ok_or_else(|| schema_err("/estimators", "expected an array of strings"))?;
    for (i, v) in estimators.iter().enumerate() {
        let s = v
            .as_str()
            .ok_or_else(|| schema_err(&format!("/estimators/{i}"), "expected a string"))?;
        EstimatorSpec::parse(s)
            .map_err(|e| schema_err(&format!("/estimators/{i}"), e.to_string()))?;
    }

    // statistics
    let statistics = require(&value, "", "statistics")?
        .as_array()
        .ok_or_else(|| schema_err("/statistics", "expected an array of strings"))?;
    if statistics.is_empty() {
        return Err(schema_err(
            "/statistics",
            "no statistics enabled; the experiment would produce empty records",
        ));
    }
    for (i, v) in statistics.iter().enumerate() {
        let s = v
            .as_str()
            .ok_or_else(|| schema_err(&format!("/statistics/{i}"), "expected a string"))?;
        if !KNOWN_STATISTICS.contains(&s) {
            return Err(schema_err(
                &format!("/statistics/{i}"),
                format!("unknown statistic `{s}`; known: {}", KNOWN_STATISTICS.join(" | ")),
            ));
        }
    }

    if let Some(v) = value.get("grid_m") {
        let m = as_u64(v, "/grid_m")?;
        if m < 2 {
            return Err(schema_err("/grid_m", "must be at least 2"));
        }
    }
    if let Some(v) = value.get("sigma2_mode") {
        let s = v
            .as_str()
            .ok_or_else(|| schema_err("/sigma2_mode", "expected a string"))?;
        if !["exact", "monte_carlo", "auto"].contains(&s) {
            return Err(schema_err(
                "/sigma2_mode",
                format!("unknown mode `{s}`; known: exact | monte_carlo | auto"),
            ));
        }
    }
    if let Some(v) = value.get("sigma2_budget") {
        as_u64(v, "/sigma2_budget")?;
    }
    if let Some(v) = value.get("sigma2_mc_reps") {
        if as_u64(v, "/sigma2_mc_reps")? < 100 {
            return Err(schema_err("/sigma2_mc_reps", "must be at least 100"));
        }
    }

    // checks
    if let Some(checks) = value.get("checks") {
        let arr = checks
            .as_array()
            .ok_or_else(|| schema_err("/checks", "expected an array of objects"))?;
        for (i, c) in arr.iter().enumerate() {
            let obj = c
                .as_object()
                .ok_or_else(|| schema_err(&format!("/checks/{i}"), "expected an object"))?;
            let name = obj
                .get("name")
                .and_then(|v| v.as_str())
                .ok_or_else(|| schema_err(&format!("/checks/{i}/name"), "missing check name"))?;
            if !KNOWN_CHECKS.contains(&name) {
                return Err(schema_err(
                    &format!("/checks/{i}/name"),
                    format!("unknown check `{name}`; known: {}", KNOWN_CHECKS.join(" | ")),
                ));
            }
            if let Some(est) = obj.get("estimator") {
                let s = est.as_str().ok_or_else(|| {
                    schema_err(&format!("/checks/{i}/estimator"), "expected a string")
                })?;
                EstimatorSpec::parse(s)
                    .map_err(|e| schema_err(&format!("/checks/{i}/estimator"), e.to_string()))?;
            }
            if let Some(rank) = obj.get("rank") {
                let s = rank.as_str().ok_or_else(|| {
                    schema_err(&format!("/checks/{i}/rank"), "expected a string")
                })?;
                if !["rank_2", "rank_gt_2"].contains(&s) {
                    return Err(schema_err(
                        &format!("/checks/{i}/rank"),
                        format!("unknown rank `{s}`; known: rank_2 | rank_gt_2"),
                    ));
                }
            }
        }
    }

    // field-level shape is good; let serde and the cross-field validator
    // take it from here
    let config: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| schema_err("", format!("deserialization: {e}")))?;
    config.validate().map_err(|e| match e {
        Error::Parameter { name, message } => schema_err(&format!("/{name}"), message),
        other => other,
    })?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "process": {"beta": 0.7, "trunc_k": 64, "mu": 0.0, "sigma": 1.0},
            "master_seed": 1,
            "n_grid": [64, 128],
            "reps": 50,
            "estimators": ["mean"],
            "statistics": ["ks_known", "ks_estimated"]
        })
    }

    #[test]
    fn accepts_minimal_config() {
        let cfg = parse_experiment_config(&base_json().to_string()).unwrap();
        assert_eq!(cfg.reps, 50);
        assert_eq!(cfg.grid_m, 64);
    }

    #[test]
    fn rejects_low_reps_with_pointer() {
        let mut j = base_json();
        j["reps"] = serde_json::json!(10);
        match parse_experiment_config(&j.to_string()) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/reps"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_beta_with_pointer() {
        let mut j = base_json();
        j["process"]["beta"] = serde_json::json!(1.2);
        match parse_experiment_config(&j.to_string()) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/process/beta"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_field_and_statistic() {
        let mut j = base_json();
        j["bogus"] = serde_json::json!(1);
        match parse_experiment_config(&j.to_string()) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/bogus"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let mut j = base_json();
        j["statistics"] = serde_json::json!(["ks_known", "nope"]);
        match parse_experiment_config(&j.to_string()) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/statistics/1"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_grid() {
        let mut j = base_json();
        j["n_grid"] = serde_json::json!([128, 64]);
        match parse_experiment_config(&j.to_string()) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/n_grid/1"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_check_with_missing_dependency() {
        let mut j = base_json();
        j["checks"] = serde_json::json!([{"name": "cvm_proxy", "estimator": "mean"}]);
        // cvm statistic not enabled
        assert!(parse_experiment_config(&j.to_string()).is_err());
    }

    #[test]
    fn parses_full_check_roster() {
        let mut j = base_json();
        j["process"]["beta"] = serde_json::json!(0.65);
        j["n_grid"] = serde_json::json!([64, 128, 256]);
        j["estimators"] = serde_json::json!(["mean", "m:sign"]);
        j["statistics"] = serde_json::json!([
            "ks_known", "ks_estimated", "cvm", "profile", "reduction_p2"
        ]);
        j["checks"] = serde_json::json!([
            {"name": "negligibility", "estimator": "mean", "halving": 0.5},
            {"name": "profile_proportionality", "estimator": "mean"},
            {"name": "m_branch", "estimator": "m:sign", "rank": "rank_gt_2"},
            {"name": "reduction_rate", "p": 2, "max_slope": -0.05},
            {"name": "ks_limit_shape"},
            {"name": "cvm_proxy", "estimator": "mean"},
            {"name": "z1_moments"}
        ]);
        let cfg = parse_experiment_config(&j.to_string()).unwrap();
        assert_eq!(cfg.checks.len(), 7);
    }
}
