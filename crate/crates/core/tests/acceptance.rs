//! End-to-end acceptance checks on pinned seeds.
//!
//! Every check prints one `PASS` or `FAIL` line and then asserts. The checks
//! are serialized so that the wall-clock budgets are measured without
//! contention.

use std::collections::HashSet;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rwre_core::classifier::scan_support;
use rwre_core::decoder::{decode_t, decode_t_into, find_crossings};
use rwre_core::environment::{compose_t, embed_r, EnvWindow, Trajectory};
use rwre_core::marker::{self, Orientation};
use rwre_core::measure::{atomic_tv_distance, solomon_classify, Atom, UniformPiece};
use rwre_core::oracle;
use rwre_core::tree::{Labeling, LabeledTree};
use rwre_core::{reconstruct, run_simulation, Mode, MeasureSpec, ReconstructOptions, Reconstruction};

const SEED: u64 = 1;
const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn two_atoms() -> MeasureSpec {
    MeasureSpec::atomic(&[(0.3, 0.25), (0.7, 0.75)]).unwrap()
}

fn three_atoms() -> MeasureSpec {
    MeasureSpec::atomic(&[(0.25, 0.15), (0.5, 0.25), (0.75, 0.6)]).unwrap()
}

fn fast_uniform() -> MeasureSpec {
    MeasureSpec::uniform(0.6, 0.9).unwrap()
}

fn mixed() -> MeasureSpec {
    MeasureSpec::new(
        vec![Atom { value: 0.5, weight: 0.5 }],
        vec![UniformPiece {
            lo: 0.6,
            hi: 0.8,
            weight: 0.5,
        }],
    )
    .unwrap()
}

fn symmetric_uniform() -> MeasureSpec {
    MeasureSpec::uniform(0.35, 0.65).unwrap()
}

struct Run {
    rec: Reconstruction,
    elapsed: Duration,
}

fn reconstructed(spec: &MeasureSpec, horizon: usize) -> Run {
    let t = Instant::now();
    let sim = run_simulation(spec, SEED, horizon, false).unwrap();
    let rec = reconstruct(&sim.observations, ReconstructOptions::default()).unwrap();
    Run {
        rec,
        elapsed: t.elapsed(),
    }
}

fn two_atom_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| reconstructed(&two_atoms(), 10_000_000))
}

fn three_atom_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| reconstructed(&three_atoms(), 10_000_000))
}

#[test]
fn example_vectors() {
    let _g = serial();
    let t = Instant::now();
    let (e0, e1) = (0.2, 0.6);
    let val = |b: &u8| if *b == 0 { e0 } else { e1 };
    let omega: Vec<f64> = [0u8, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0].iter().map(val).collect();
    let xi: Vec<f64> = [0u8, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0].iter().map(val).collect();
    let x = Trajectory {
        positions: vec![0, 1, 2, 3, 4, 3, 4, 5, 6, 7, 6],
    };
    let labeling = Labeling::new(&[e0, e1]).unwrap();
    let mut tree = LabeledTree::new(labeling.label_of(e0).unwrap(), 2);
    let window = EnvWindow {
        first_site: 0,
        values: omega,
    };
    let r = embed_r(&window, &labeling, &mut tree).unwrap();
    let t_path = compose_t(&r, &x).unwrap();
    let decoded = decode_t_into(&xi, &labeling, &mut tree).unwrap();
    let line = |vs: &[_]| vs.iter().map(|&v| tree.line_coordinate(v)).collect::<Vec<i64>>();
    let r_line = line(&r.vertices);
    let t_line = line(&t_path.vertices);
    let batch = decode_t(&xi, &[e0, e1]).unwrap();
    let batch_line: Vec<i64> = batch.path.vertices.iter().map(|&v| batch.tree.line_coordinate(v)).collect();

    let c03 = find_crossings(&r_line, 0, 3, 3, None);
    let c25 = find_crossings(&r_line, 2, 5, 3, None);
    let t25 = find_crossings(&t_line, 2, 5, 3, None);
    let ok = r_line == [0, 1, 2, 1, 2, 3, 4, 5, 4, 3, 4]
        && t_line == [0, 1, 2, 1, 2, 1, 2, 3, 4, 5, 4]
        && decoded.vertices == t_path.vertices
        && batch_line == t_line
        && c03.first().is_some_and(|c| (c.i1, c.i2, c.straight) == (0, 5, false))
        && c25.iter().any(|c| (c.i1, c.i2, c.straight) == (4, 7, true))
        && t25.iter().any(|c| (c.i1, c.i2, c.straight) == (6, 9, true));
    let elapsed = t.elapsed();
    let ok = ok && elapsed < Duration::from_secs(1);
    report("example_vectors", ok, format!("R={r_line:?} T={t_line:?} in {elapsed:?}"));
    assert!(ok);
}

#[test]
fn oracle_formula_equivalence() {
    let _g = serial();
    let t = Instant::now();
    let g = oracle::oracle_grid_check().unwrap();
    let elapsed = t.elapsed();
    let ok = g.points == 361 && g.max_r_error <= 1e-12 && g.max_x_error <= 1e-12 && elapsed < Duration::from_secs(5);
    report(
        "oracle_formula_equivalence",
        ok,
        format!(
            "{} points, max errors {:.2e} / {:.2e}, {elapsed:?}",
            g.points, g.max_r_error, g.max_x_error
        ),
    );
    assert!(ok);
}

#[test]
fn crossing_probability_two_atoms() {
    let _g = serial();
    let run = two_atom_run();
    let a = run.rec.atomic.as_ref().unwrap();
    let e = a.atoms.iter().find(|e| e.eta == 0.7).unwrap();
    let n = e.stream.len();
    let p = e.stream.mean().unwrap_or(f64::NAN);
    let ok = n >= 10_000 && (p - 0.3456).abs() <= 0.015 && run.elapsed < Duration::from_secs(60);
    report(
        "crossing_probability_two_atoms",
        ok,
        format!("{n} indicators, p_hat {p:.4} (target 0.3456), {:?}", run.elapsed),
    );
    assert!(ok);
}

#[test]
fn weight_recovery_two_atoms() {
    let _g = serial();
    let run = two_atom_run();
    let a = run.rec.atomic.as_ref().unwrap();
    let i = a.atoms.iter().position(|e| e.eta == 0.7).unwrap();
    let lambda = a.weights[i];
    let tv = atomic_tv_distance(&run.rec.measure, &two_atoms()).unwrap();
    let ok = (lambda - 0.75).abs() <= 0.02 && tv <= 0.02;
    report(
        "weight_recovery_two_atoms",
        ok,
        format!("lambda_hat(0.7) {lambda:.4}, tv {tv:.4}"),
    );
    assert!(ok);
}

#[test]
fn weight_recovery_three_atoms() {
    let _g = serial();
    let run = three_atom_run();
    let truth = three_atoms();
    let a = run.rec.atomic.as_ref().unwrap();
    let errors: Vec<(f64, f64)> = a
        .atoms
        .iter()
        .zip(&a.weights)
        .map(|(e, &w)| (e.eta, (w - truth.atom_weight(e.eta)).abs()))
        .collect();
    let tv = atomic_tv_distance(&run.rec.measure, &truth).unwrap();
    let ok = a.atoms.len() == 3
        && errors.iter().all(|&(_, d)| d <= 0.04)
        && tv <= 0.04
        && run.elapsed < Duration::from_secs(90);
    report(
        "weight_recovery_three_atoms",
        ok,
        format!("weights {:?}, errors {errors:?}, tv {tv:.4}, {:?}", a.weights, run.elapsed),
    );
    assert!(ok);
}

#[test]
fn decoder_matches_ground_truth() {
    let _g = serial();
    let mut failures = Vec::new();
    let mut straight = 0;
    for (name, spec) in [("two_atoms", two_atoms()), ("three_atoms", three_atoms())] {
        let support: Vec<f64> = spec.atoms().iter().map(|a| a.value).collect();
        for seed in SEEDS {
            let sim = run_simulation(&spec, seed, 100_000, true).unwrap();
            let audit = oracle::ground_truth_audit(&sim, &support).unwrap();
            straight += audit.straight_crossings;
            if audit.decode_mismatches + audit.label_mismatches + audit.factorization_violations > 0 {
                failures.push((name, seed));
            }
        }
    }
    let ok = failures.is_empty();
    report(
        "decoder_matches_ground_truth",
        ok,
        format!("40 runs, {straight} straight confined crossings checked, failures {failures:?}"),
    );
    assert!(ok);
}

#[test]
fn marker_reconstruction() {
    let _g = serial();
    let t = Instant::now();
    let spec = fast_uniform();
    let sim = run_simulation(&spec, SEED, 1_000_000, true).unwrap();
    let rec = reconstruct(&sim.observations, ReconstructOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let m = rec.marker.as_ref().unwrap();
    let x = &sim.trajectory.as_ref().unwrap().positions;
    let mut seen = HashSet::new();
    let mut fresh = vec![false; x.len()];
    for (k, &z) in x.iter().enumerate() {
        fresh[k] = seen.insert(z);
    }
    let stale = m.samples.iter().filter(|s| !fresh[s.m]).count();
    let d = m.empirical.grid_distance(&spec);
    let ok = rec.mode == Mode::MarkerMode
        && m.samples.len() >= 2_000
        && d <= 0.05
        && stale == 0
        && elapsed < Duration::from_secs(20);
    report(
        "marker_reconstruction",
        ok,
        format!(
            "{} samples, grid distance {d:.4}, {stale} from visited sites, {elapsed:?}",
            m.samples.len()
        ),
    );
    assert!(ok);
}

#[test]
fn mixed_measure() {
    let _g = serial();
    let run = reconstructed(&mixed(), 1_000_000);
    let w = run.rec.marker.as_ref().map_or(f64::NAN, |m| m.empirical.atom_weight(0.5));
    let ok = run.rec.mode == Mode::MarkerMode && (w - 0.5).abs() <= 0.05;
    report("mixed_measure", ok, format!("mode {}, atom weight {w:.4}", run.rec.mode));
    assert!(ok);
}

/// Longest stretch of the assembled line that matches the true environment
/// under the decided orientation.
fn matched_stretch(seed: u64) -> usize {
    let sim = run_simulation(&symmetric_uniform(), seed, 1_000_000, true).unwrap();
    let report = scan_support(&sim.observations);
    let Ok(env) = marker::reconstruct_environment(&sim.observations, &report, Default::default()) else {
        return 0;
    };
    let dir = match env.orientation.orientation {
        Orientation::AsIs => 1,
        Orientation::Reflected => -1,
        Orientation::Undecided => return 0,
    };
    let window = sim.window.as_ref().unwrap();
    let site_of = |v: f64| {
        window
            .values
            .iter()
            .position(|&w| w.to_bits() == v.to_bits())
            .map(|i| window.first_site + i as i64)
    };
    let mut best = 0;
    for (lo, hi) in env.line.runs() {
        let Some(z0) = env.line.value_at(lo).and_then(site_of) else {
            continue;
        };
        let mut len = 0;
        for p in lo..=hi {
            let v = env.line.value_at(p).unwrap();
            if window.get(z0 + dir * (p - lo)).map(f64::to_bits) == Some(v.to_bits()) {
                len += 1;
                best = best.max(len);
            } else {
                len = 0;
            }
        }
    }
    best
}

#[test]
fn recurrent_environment_reconstruction() {
    let _g = serial();
    let lengths: Vec<usize> = SEEDS.map(matched_stretch).collect();
    let good = lengths.iter().filter(|&&l| l >= 20).count();
    let ok = good >= 18;
    report(
        "recurrent_environment_reconstruction",
        ok,
        format!("{good}/20 seeds with a matching oriented block of 20+ sites, lengths {lengths:?}"),
    );
    assert!(ok);
}

#[test]
fn root_visit_census() {
    let _g = serial();
    let t = Instant::now();
    let seeds: Vec<u64> = SEEDS.collect();
    let checkpoints = [1_000, 10_000, 100_000, 1_000_000];
    let two = oracle::root_visit_census(&[0.5, 0.5], &checkpoints, &seeds).unwrap();
    let three = oracle::root_visit_census(&[1.0 / 3.0; 3], &checkpoints, &seeds).unwrap();
    let elapsed = t.elapsed();
    let increasing = two
        .iter()
        .filter(|r| r.counts.windows(2).all(|w| w[0] < w[1]) && r.counts[3] >= 50)
        .count();
    let constant = three.iter().filter(|r| r.counts[1..].windows(2).all(|w| w[0] == w[1])).count();
    let ok = increasing >= 18 && constant >= 18 && elapsed < Duration::from_secs(60);
    let two_counts: Vec<&Vec<usize>> = two.iter().map(|r| &r.counts).collect();
    report(
        "root_visit_census",
        ok,
        format!("two labels increasing {increasing}/20 {two_counts:?}; three labels constant {constant}/20; {elapsed:?}"),
    );
    assert!(ok);
}

#[test]
fn ssrw_projection() {
    let _g = serial();
    let r = oracle::simulate_line_r([0.5, 0.5], 1_000_000, SEED).unwrap();
    let p = oracle::ssrw_projection_check(&r).unwrap();
    let ok = (0.48..=0.52).contains(&p.p_plus);
    report("ssrw_projection", ok, format!("{} projected steps, P(+4) {:.4}", p.steps, p.p_plus));
    assert!(ok);
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, m * (1.0 - m))
}

#[test]
fn independence_and_orientation_invariance() {
    let _g = serial();
    let spec = three_atoms();
    let support = [0.25, 0.5, 0.75];
    let ws: Vec<f64> = {
        let sim = run_simulation(&spec, SEED, 20_000_000, true).unwrap();
        let audit = oracle::ground_truth_audit(&sim, &support).unwrap();
        audit.crossings.iter().map(|c| f64::from(u8::from(c.w))).collect()
    };
    let ac = oracle::lag1_autocorrelation(&ws);

    // both sides of the origin are only sampled evenly by a recurrent walk
    let sym = MeasureSpec::atomic(&[(0.25, 1.0 / 3.0), (0.5, 1.0 / 3.0), (0.75, 1.0 / 3.0)]).unwrap();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for seed in 1..=400 {
        let sim = run_simulation(&sym, seed, 1_000_000, true).unwrap();
        for c in oracle::ground_truth_audit(&sim, &support).unwrap().crossings {
            let w = f64::from(u8::from(c.w));
            if c.positive_side {
                pos.push(w);
            } else {
                neg.push(w);
            }
        }
    }
    let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let (_, var) = mean_and_var(&all);
    let (mp, _) = mean_and_var(&pos);
    let (mn, _) = mean_and_var(&neg);
    let se = (var * (1.0 / pos.len() as f64 + 1.0 / neg.len() as f64)).sqrt();
    let ok = ws.len() >= 10_000 && ac.abs() <= 0.03 && !pos.is_empty() && !neg.is_empty() && (mp - mn).abs() <= 3.0 * se;
    report(
        "independence_and_orientation_invariance",
        ok,
        format!(
            "{} indicators, lag-1 autocorrelation {ac:.4}; positive {mp:.4} (n={}) vs negative {mn:.4} (n={}), pooled se {se:.4}",
            ws.len(),
            pos.len(),
            neg.len()
        ),
    );
    assert!(ok);
}

#[test]
fn solomon_verdicts() {
    let _g = serial();
    let mut rows = Vec::new();
    for (name, spec, rec) in [
        ("two_atoms", two_atoms(), &two_atom_run().rec),
        ("three_atoms", three_atoms(), &three_atom_run().rec),
        ("fast_uniform", fast_uniform(), &reconstructed(&fast_uniform(), 1_000_000).rec),
        ("mixed", mixed(), &reconstructed(&mixed(), 1_000_000).rec),
        ("symmetric_uniform", symmetric_uniform(), &reconstructed(&symmetric_uniform(), 1_000_000).rec),
    ] {
        let truth = solomon_classify(&spec);
        rows.push((name, truth, rec.diagnostics.solomon));
    }
    let ok = rows.iter().all(|(_, a, b)| a == b);
    report("solomon_verdicts", ok, format!("{rows:?}"));
    assert!(ok);
}
