use std::collections::HashSet;
use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use rwre_core::decoder::decode_t;
use rwre_core::oracle;
use rwre_core::rng::derive_seed;
use rwre_core::{reconstruct, run_simulation, MeasureSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

pub const VERIFY: &str = "verify.json";

pub const CHECKS: &[&str] = &[
    "oracle_grid",
    "example_vectors",
    "ground_truth",
    "crossing_probability",
    "census",
    "ssrw_projection",
    "independence",
];

/// A check name that does not exist.
#[derive(Debug)]
pub struct UnknownCheck(pub String);

impl std::fmt::Display for UnknownCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "unknown check {:?}; known checks: {}", self.0, CHECKS.join(", "))
    }
}

impl std::error::Error for UnknownCheck {}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub elapsed_ms: u128,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn seeds(cfg: &RunConfig, tag: &str, n: u64) -> Vec<u64> {
    (0..n).map(|i| derive_seed(cfg.seed, tag, i)).collect()
}

fn check_oracle_grid() -> Result<(bool, serde_json::Value)> {
    let g = oracle::oracle_grid_check()?;
    let ok = g.points == 361 && g.max_r_error <= 1e-12 && g.max_x_error <= 1e-12 && g.max_orientation_gap <= 1e-12;
    Ok((ok, serde_json::to_value(g)?))
}

fn check_example_vectors() -> Result<(bool, serde_json::Value)> {
    let (a, b) = (0.2, 0.6);
    let xi: Vec<f64> = [0, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0]
        .iter()
        .map(|&k| if k == 0 { a } else { b })
        .collect();
    let d = decode_t(&xi, &[a, b])?;
    let t: Vec<i64> = d.path.vertices.iter().map(|&v| d.tree.line_coordinate(v)).collect();
    let want = [0, 1, 2, 1, 2, 1, 2, 3, 4, 5, 4];
    let crossings = rwre_core::decoder::find_crossings(&t, 2, 5, 3, None);
    let ok = t == want && crossings.iter().any(|c| (c.i1, c.i2, c.straight) == (6, 9, true));
    Ok((ok, json!({ "decoded": t, "expected": want })))
}

fn support_of(spec: &MeasureSpec) -> Vec<f64> {
    spec.atoms().iter().map(|a| a.value).collect()
}

fn check_ground_truth(cfg: &RunConfig) -> Result<(bool, serde_json::Value)> {
    let sim = run_simulation(&cfg.measure, cfg.seed, cfg.horizon, true)?;
    if cfg.measure.is_purely_atomic() && cfg.measure.atoms().len() >= 2 {
        let a = oracle::ground_truth_audit(&sim, &support_of(&cfg.measure))?;
        let ok = a.decode_mismatches == 0 && a.label_mismatches == 0 && a.factorization_violations == 0;
        return Ok((
            ok,
            json!({
                "steps": a.steps,
                "decode_mismatches": a.decode_mismatches,
                "label_mismatches": a.label_mismatches,
                "straight_crossings": a.straight_crossings,
                "factorization_violations": a.factorization_violations,
            }),
        ));
    }
    let rec = reconstruct(&sim.observations, cfg.reconstruct_options())?;
    let x = &sim.trajectory.as_ref().expect("ground truth requested").positions;
    let mut seen = HashSet::new();
    let fresh: Vec<bool> = x.iter().map(|&z| seen.insert(z)).collect();
    let samples = rec.marker.as_ref().map_or(&[][..], |m| &m.samples[..]);
    let stale = samples.iter().filter(|s| !fresh[s.m]).count();
    Ok((stale == 0, json!({ "marker_samples": samples.len(), "from_visited_sites": stale })))
}

fn check_crossing_probability(cfg: &RunConfig) -> Result<(bool, serde_json::Value)> {
    let atoms = cfg.measure.atoms();
    if !cfg.measure.is_purely_atomic() || atoms.len() < 2 {
        return Ok((true, json!({ "skipped": "needs a measure with two or more atoms only" })));
    }
    let (outer, inner) = (atoms[0], atoms[1]);
    let exact = oracle::exact_confined_crossing_prob(inner.weight)? * (1.0 - inner.value * (1.0 - inner.value));
    let mc = oracle::mc_ground_truth_w(&cfg.measure, outer.value, inner.value, &seeds(cfg, "verify-crossing", 4), cfg.horizon)?;
    Ok((mc.contains(exact), json!({ "outer": outer.value, "inner": inner.value, "exact": exact, "estimate": mc })))
}

fn check_census(cfg: &RunConfig) -> Result<(bool, serde_json::Value)> {
    let s = seeds(cfg, "verify-census", 20);
    let cps = [1_000, 10_000, 100_000, 1_000_000];
    let two = oracle::root_visit_census(&[0.5, 0.5], &cps, &s)?;
    let three = oracle::root_visit_census(&[1.0 / 3.0; 3], &cps, &s)?;
    let increasing = two
        .iter()
        .filter(|r| r.counts.windows(2).all(|w| w[0] < w[1]) && r.counts[3] >= 50)
        .count();
    let constant = three.iter().filter(|r| r.counts[1..].windows(2).all(|w| w[0] == w[1])).count();
    Ok((
        increasing >= 18 && constant >= 18,
        json!({ "two_labels_increasing": increasing, "three_labels_constant": constant, "two_labels": two, "three_labels": three }),
    ))
}

fn check_ssrw(cfg: &RunConfig) -> Result<(bool, serde_json::Value)> {
    let r = oracle::simulate_line_r([0.5, 0.5], 1_000_000, cfg.seed)?;
    let p = oracle::ssrw_projection_check(&r)?;
    Ok(((0.48..=0.52).contains(&p.p_plus), serde_json::to_value(p)?))
}

fn check_independence(cfg: &RunConfig) -> Result<(bool, serde_json::Value)> {
    if !cfg.measure.is_purely_atomic() || cfg.measure.atoms().len() < 2 {
        return Ok((true, json!({ "skipped": "needs a measure with two or more atoms only" })));
    }
    let sim = run_simulation(&cfg.measure, cfg.seed, cfg.horizon, true)?;
    let a = oracle::ground_truth_audit(&sim, &support_of(&cfg.measure))?;
    let ws: Vec<f64> = a.crossings.iter().map(|c| f64::from(u8::from(c.w))).collect();
    if ws.len() < 2 {
        return Ok((false, json!({ "indicators": ws.len() })));
    }
    let ac = oracle::lag1_autocorrelation(&ws);
    Ok((ac.abs() <= 0.03, json!({ "indicators": ws.len(), "lag1_autocorrelation": ac })))
}

/// The selected check names, all of them when the list is empty.
pub fn selected(cfg: &RunConfig) -> std::result::Result<Vec<&'static str>, UnknownCheck> {
    if cfg.checks.is_empty() {
        return Ok(CHECKS.to_vec());
    }
    cfg.checks
        .iter()
        .map(|c| CHECKS.iter().copied().find(|k| k == c).ok_or_else(|| UnknownCheck(c.clone())))
        .collect()
}

/// Runs the selected checks and writes `verify.json`. Unknown names are
/// rejected before anything runs.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let names = selected(cfg)?;
    let mut checks = Vec::new();
    for name in names {
        let t = Instant::now();
        let (passed, detail) = match name {
            "oracle_grid" => check_oracle_grid(),
            "example_vectors" => check_example_vectors(),
            "ground_truth" => check_ground_truth(cfg),
            "crossing_probability" => check_crossing_probability(cfg),
            "census" => check_census(cfg),
            "ssrw_projection" => check_ssrw(cfg),
            "independence" => check_independence(cfg),
            _ => unreachable!(),
        }
        .unwrap_or_else(|e| (false, json!({ "error": e.to_string() })));
        checks.push(CheckResult {
            name: name.into(),
            passed,
            elapsed_ms: t.elapsed().as_millis(),
            detail,
        });
    }
    let report = VerifyReport {
        seed: cfg.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    let out = cfg.prepare_out()?;
    let path = out.join(VERIFY);
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}
