//! Independent checks: exact absorbing-chain solves for the crossing
//! probabilities, Monte-Carlo estimates of `P(W = 1)`, simulations of the
//! tree walk `R` on its own, and ground-truth audits of the decoder.
//!
//! The chain solves never use the geometric-series algebra; they track
//! "straight so far" as part of the state and read the straight share off
//! the absorption probabilities.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::{decode_t_into, score_label_stream, LabelPair, PatternRegistry};
use crate::environment::{compose_t, embed_r, run_simulation, Simulation};
use crate::error::{Error, Result};
use crate::measure::MeasureSpec;
use crate::rng::KeyedStream;
use crate::tree::{Label, LabeledTree, Labeling};

/// Absorption probabilities `(I - Q)^{-1} B` of a finite chain.
pub fn absorption_probabilities(q: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    let a = DMatrix::<f64>::identity(n, n) - q;
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::InvalidArgument("singular absorbing chain".into()))
}

// Transient states: 0 = second vertex, straight so far; 1 = third, straight;
// 2 = second, bent; 3 = third, bent. Absorbing: 0 = back at the start,
// 1 = far end straight, 2 = far end bent, 3 = escaped.
fn straight_share(fwd2: f64, back2: f64, fwd3: f64, back3: f64) -> Result<f64> {
    let mut q = DMatrix::zeros(4, 4);
    let mut b = DMatrix::zeros(4, 4);
    q[(0, 1)] = fwd2;
    b[(0, 0)] = back2;
    b[(0, 3)] = 1.0 - fwd2 - back2;
    b[(1, 1)] = fwd3;
    q[(1, 2)] = back3;
    b[(1, 3)] = 1.0 - fwd3 - back3;
    q[(2, 3)] = fwd2;
    b[(2, 0)] = back2;
    b[(2, 3)] = 1.0 - fwd2 - back2;
    b[(3, 2)] = fwd3;
    q[(3, 2)] = back3;
    b[(3, 3)] = 1.0 - fwd3 - back3;
    let x = absorption_probabilities(&q, &b)?;
    let (straight, bent) = (x[(0, 1)], x[(0, 2)]);
    Ok(straight / (straight + bent))
}

/// `P(straight | confined crossing)` for `R` on `(a, b, b, a)` when the
/// inner label has weight `lambda` and the outer one `1 - lambda`.
pub fn exact_confined_crossing_prob(lambda: f64) -> Result<f64> {
    exact_confined_crossing_prob_with(lambda, 1.0 - lambda)
}

/// As [`exact_confined_crossing_prob`] with an arbitrary outer weight; the
/// remaining mass leaves the set.
pub fn exact_confined_crossing_prob_with(lambda_inner: f64, lambda_outer: f64) -> Result<f64> {
    check_open_unit(lambda_inner)?;
    check_open_unit(lambda_outer)?;
    if lambda_inner + lambda_outer > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument("weights exceed 1".into()));
    }
    // second vertex: on to the third via the inner label, back via the outer;
    // third vertex: on to the fourth via the outer label, back via the inner
    straight_share(lambda_inner, lambda_outer, lambda_outer, lambda_inner)
}

/// Which way `X` has to go to cross the block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingSide {
    /// Positive time: toward the target is a right step.
    Positive,
    /// Negative time: toward the target is a left step.
    Negative,
}

/// `P(straight | crossing)` for `X` on a straight four-site block whose two
/// inner sites carry `eta`.
pub fn exact_straight_x_prob(eta: f64, side: CrossingSide) -> Result<f64> {
    check_open_unit(eta)?;
    let f = match side {
        CrossingSide::Positive => eta,
        CrossingSide::Negative => 1.0 - eta,
    };
    straight_share(f, 1.0 - f, f, 1.0 - f)
}

fn check_open_unit(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{x} not in (0, 1)")))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridReport {
    pub points: usize,
    pub max_r_error: f64,
    pub max_x_error: f64,
    pub max_orientation_gap: f64,
}

/// Chain solves against the closed forms on `{0.05, 0.10, ..., 0.95}^2`.
pub fn oracle_grid_check() -> Result<GridReport> {
    let grid: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
    let mut rep = GridReport {
        points: 0,
        max_r_error: 0.0,
        max_x_error: 0.0,
        max_orientation_gap: 0.0,
    };
    for &lambda in &grid {
        for &eta in &grid {
            let r = exact_confined_crossing_prob(lambda)?;
            let xp = exact_straight_x_prob(eta, CrossingSide::Positive)?;
            let xn = exact_straight_x_prob(eta, CrossingSide::Negative)?;
            rep.max_r_error = rep.max_r_error.max((r - (1.0 - lambda * lambda)).abs());
            rep.max_x_error = rep.max_x_error.max((xp - (1.0 - eta * (1.0 - eta))).abs());
            rep.max_orientation_gap = rep.max_orientation_gap.max((xp - xn).abs());
            rep.points += 1;
        }
    }
    Ok(rep)
}

/// Wilson score interval.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub n: usize,
    pub successes: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub per_seed: Vec<(u64, usize, usize)>,
}

impl McEstimate {
    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// Pooled indicator mean for the pattern `(outer, inner, inner, outer)` over
/// independent runs, with a 99% Wilson interval.
pub fn mc_ground_truth_w(spec: &MeasureSpec, outer: f64, inner: f64, seeds: &[u64], horizon: usize) -> Result<McEstimate> {
    if !spec.is_purely_atomic() {
        return Err(Error::NotAtomic);
    }
    if spec.atoms().len() < 2 {
        return Err(Error::DeterministicEnvironment(spec.atoms()[0].value));
    }
    let values: Vec<f64> = spec.atoms().iter().map(|a| a.value).collect();
    let labeling = Labeling::new(&values)?;
    let pair = LabelPair {
        outer: labeling
            .label_of(outer)
            .ok_or_else(|| Error::InvalidArgument(format!("{outer} not an atom")))?,
        inner: labeling
            .label_of(inner)
            .ok_or_else(|| Error::InvalidArgument(format!("{inner} not an atom")))?,
    };
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let sim = run_simulation(spec, seed, horizon, false)?;
            let labels = labeling.encode(&sim.observations)?;
            let (reg, _) = score_label_stream(&labels, labeling.len(), &[pair], false)?;
            let w = reg.indicators();
            Ok((seed, w.len(), w.iter().filter(|w| w.w).count()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n: usize = per_seed.iter().map(|s| s.1).sum();
    let successes: usize = per_seed.iter().map(|s| s.2).sum();
    if n == 0 {
        return Err(Error::NoData("no indicator was scored".into()));
    }
    let (ci_low, ci_high) = wilson_interval(successes, n, Z99);
    Ok(McEstimate {
        n,
        successes,
        mean: successes as f64 / n as f64,
        ci_low,
        ci_high,
        per_seed,
    })
}

fn draw_label(cumulative: &[f64], u: f64) -> Label {
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1) as Label
}

fn check_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() < 2 {
        return Err(Error::InvalidArgument("need at least two labels".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}")));
    }
    Ok(weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect())
}

/// Label-stack walk of `R` from the root: each step picks label `i` with
/// probability `weights[i]` and moves to the neighbor carrying it.
/// Calls `visit(step, depth)` after every step.
fn run_label_stack(root: Label, cumulative: &[f64], steps: usize, stream: KeyedStream, mut visit: impl FnMut(usize, usize)) {
    let mut stack: Vec<Label> = Vec::new();
    let mut cursor = stream.cursor();
    for step in 1..=steps {
        let l = draw_label(cumulative, cursor.next_unit());
        let parent = match stack.len() {
            0 => None,
            1 => Some(root),
            d => Some(stack[d - 2]),
        };
        if parent == Some(l) {
            stack.pop();
        } else {
            stack.push(l);
        }
        visit(step, stack.len());
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CensusRow {
    pub seed: u64,
    /// Root visits at times `|z| <= checkpoint`, one entry per checkpoint.
    pub counts: Vec<usize>,
}

/// Root visits of `R` on both sides of the origin, up to each checkpoint.
pub fn root_visit_census(weights: &[f64], checkpoints: &[usize], seeds: &[u64]) -> Result<Vec<CensusRow>> {
    let cumulative = check_weights(weights)?;
    let horizon = checkpoints.iter().copied().max().unwrap_or(0);
    Ok(seeds
        .par_iter()
        .map(|&seed| {
            let root = draw_label(&cumulative, KeyedStream::new(seed, "census-root").unit(0));
            let mut visits = Vec::new();
            for tag in ["census-forward", "census-backward"] {
                run_label_stack(root, &cumulative, horizon, KeyedStream::new(seed, tag), |step, depth| {
                    if depth == 0 {
                        visits.push(step);
                    }
                });
            }
            let counts = checkpoints
                .iter()
                .map(|&c| visits.iter().filter(|&&s| s <= c).count())
                .collect();
            CensusRow { seed, counts }
        })
        .collect())
}

/// `R(0..=steps)` on the two-label tree as line coordinates; label 0 is the
/// root label and has weight `weights[0]`.
pub fn simulate_line_r(weights: [f64; 2], steps: usize, seed: u64) -> Result<Vec<i64>> {
    let cumulative = check_weights(&weights)?;
    // phi(z) is the root label for z = 0, 1 (mod 4)
    let phi = |z: i64| -> Label { Label::from(z.rem_euclid(4) >= 2) };
    let mut z = 0i64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0);
    let mut cursor = KeyedStream::new(seed, "line-r").cursor();
    for _ in 0..steps {
        let l = draw_label(&cumulative, cursor.next_unit());
        z += if phi(z + 1) == l { 1 } else { -1 };
        out.push(z);
    }
    Ok(out)
}

/// Successive distinct multiples of 4 visited by a line path, as steps.
pub fn projected_steps(coords: &[i64]) -> Vec<i64> {
    let mut out = Vec::new();
    let mut last: Option<i64> = None;
    for &z in coords {
        if z.rem_euclid(4) != 0 {
            continue;
        }
        match last {
            Some(l) if l != z => {
                out.push(z - l);
                last = Some(z);
            }
            None => last = Some(z),
            _ => {}
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProjectionReport {
    pub steps: usize,
    pub plus: usize,
    pub p_plus: f64,
}

/// Share of `+4` steps in the projection of a line path on `4Z`.
pub fn ssrw_projection_check(coords: &[i64]) -> Result<ProjectionReport> {
    let steps = projected_steps(coords);
    if steps.len() < 100 {
        return Err(Error::InsufficientData(format!("{} projected steps, need 100", steps.len())));
    }
    let plus = steps.iter().filter(|&&s| s > 0).count();
    Ok(ProjectionReport {
        steps: steps.len(),
        plus,
        p_plus: plus as f64 / steps.len() as f64,
    })
}

/// Lag-one sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let den: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / den
}

/// A scored pattern set seen through the hidden walk.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GroundTruthCrossing {
    pub m: usize,
    /// Sites of the `v1` and `v4` ends of the scoring crossing.
    pub z1: i64,
    pub z2: i64,
    pub t_x: (usize, usize),
    pub straight_r: bool,
    pub straight_x: bool,
    /// The crossed block lies at nonnegative sites.
    pub positive_side: bool,
    pub w: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundTruthAudit {
    pub steps: usize,
    /// Times with decoded `T(n) != R(X(n))`.
    pub decode_mismatches: usize,
    /// Times with `phi(T(n)) != xi(n)`.
    pub label_mismatches: usize,
    pub straight_crossings: usize,
    pub factorization_violations: usize,
    pub crossings: Vec<GroundTruthCrossing>,
}

/// Decodes `T` from the observations, rebuilds `R o X` from the hidden
/// environment in the same tree, and compares them. Every straight confined
/// crossing of a pattern set must be a straight crossing by `X` of a straight
/// crossing by `R`.
pub fn ground_truth_audit(sim: &Simulation, support: &[f64]) -> Result<GroundTruthAudit> {
    let (Some(traj), Some(window)) = (&sim.trajectory, &sim.window) else {
        return Err(Error::InvalidArgument("simulation without ground truth".into()));
    };
    let xs = &sim.observations;
    let labeling = Labeling::new(support)?;
    let root_label = labeling
        .label_of(xs[0])
        .ok_or(Error::SupportDrift { index: 0, value: xs[0] })?;
    let mut tree = LabeledTree::new(root_label, labeling.len());
    let t = decode_t_into(xs, &labeling, &mut tree)?;
    let r = embed_r(window, &labeling, &mut tree)?;
    let rx = compose_t(&r, traj)?;
    let decode_mismatches = t.vertices.iter().zip(&rx.vertices).filter(|(a, b)| a != b).count();
    let label_mismatches = t
        .vertices
        .iter()
        .zip(xs.iter())
        .filter(|(&v, &x)| labeling.value(tree.label(v)).to_bits() != x.to_bits())
        .count();

    let n = labeling.len() as Label;
    let pairs: Vec<LabelPair> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| LabelPair { outer: a, inner: b }))
        .collect();
    let mut reg = PatternRegistry::new(&pairs, true);
    for (i, &v) in t.vertices.iter().enumerate() {
        reg.observe(&mut tree, i, v);
    }
    let x = &traj.positions;
    let r_straight = |z1: i64, z2: i64, chain: &[crate::tree::VertexId; 4]| {
        (z2 - z1).abs() == 3 && (0..4).all(|k| r.at_site(z1 + k * (z2 - z1).signum()) == Some(chain[k as usize]))
    };
    let mut straight_crossings = 0;
    let mut violations = 0;
    for c in reg.crossings().iter().filter(|c| c.record.straight) {
        straight_crossings += 1;
        let rec = c.record;
        let (lo, hi) = (rec.i1.min(rec.i2), rec.i1.max(rec.i2));
        let dir = (x[hi] - x[lo]).signum();
        let monotone = dir != 0 && (lo..hi).all(|i| x[i + 1] - x[i] == dir);
        let chain = reg.sets()[c.set].vertices;
        if !(monotone && r_straight(x[rec.i1], x[rec.i2], &chain)) {
            violations += 1;
        }
    }
    let crossings = reg
        .indicators()
        .iter()
        .map(|w| {
            let (z1, z2) = (x[w.i1], x[w.i2]);
            let chain = reg.sets()[w.m].vertices;
            GroundTruthCrossing {
                m: w.m,
                z1,
                z2,
                t_x: (w.i1, w.i2),
                straight_r: r_straight(z1, z2, &chain),
                straight_x: w.i1.abs_diff(w.i2) as i64 == (z2 - z1).abs(),
                positive_side: z1.min(z2) >= 0,
                w: w.w,
            }
        })
        .collect();
    Ok(GroundTruthAudit {
        steps: xs.len(),
        decode_mismatches,
        label_mismatches,
        straight_crossings,
        factorization_violations: violations,
        crossings,
    })
}
