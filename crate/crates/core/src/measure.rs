//! Probability measures on `(0,1)`: finitely many atoms plus a
//! piecewise-uniform continuous part.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value_key;

/// Allowed deviation of the total mass from 1.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Band around zero inside which the log-ratio integral counts as zero.
pub const SOLOMON_TOLERANCE: f64 = 1e-9;

/// Number of evaluation points of the grid-CDF distance.
pub const GRID_POINTS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformPiece {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct RawMeasure {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default)]
    uniform_pieces: Vec<UniformPiece>,
}

#[derive(Clone, Copy, Debug)]
enum Segment {
    Point(f64),
    Flat { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug)]
struct CdfSegment {
    segment: Segment,
    start: f64,
    mass: f64,
}

/// A validated measure. Construction checks every invariant, so operations
/// on an existing `MeasureSpec` cannot fail on account of the measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct MeasureSpec {
    atoms: Vec<Atom>,
    pieces: Vec<UniformPiece>,
    segments: Vec<CdfSegment>,
}

impl PartialEq for MeasureSpec {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.pieces == other.pieces
    }
}

impl TryFrom<RawMeasure> for MeasureSpec {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        MeasureSpec::new(raw.atoms, raw.uniform_pieces)
    }
}

impl From<MeasureSpec> for RawMeasure {
    fn from(spec: MeasureSpec) -> Self {
        RawMeasure {
            atoms: spec.atoms,
            uniform_pieces: spec.pieces,
        }
    }
}

fn inside_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl MeasureSpec {
    pub fn new(atoms: Vec<Atom>, pieces: Vec<UniformPiece>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidMeasure(msg));
        if atoms.is_empty() && pieces.is_empty() {
            return invalid("no atoms and no continuous pieces".into());
        }
        let mut keys = std::collections::HashSet::new();
        for a in &atoms {
            if !inside_unit(a.value) {
                return invalid(format!("atom value {} outside (0,1)", a.value));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return invalid(format!("atom {} has weight {}", a.value, a.weight));
            }
            if !keys.insert(value_key(a.value)) {
                return invalid(format!("duplicate atom value {}", a.value));
            }
        }
        for p in &pieces {
            if !inside_unit(p.lo) || !inside_unit(p.hi) {
                return invalid(format!("piece ({}, {}) not inside (0,1)", p.lo, p.hi));
            }
            if !(p.lo < p.hi) {
                return invalid(format!("piece has lo {} >= hi {}", p.lo, p.hi));
            }
            if !(p.weight > 0.0) || !p.weight.is_finite() {
                return invalid(format!("piece ({}, {}) has weight {}", p.lo, p.hi, p.weight));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum::<f64>()
            + pieces.iter().map(|p| p.weight).sum::<f64>();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return invalid(format!("total weight {total} differs from 1"));
        }
        let segments = compile_segments(&atoms, &pieces);
        Ok(Self {
            atoms,
            pieces,
            segments,
        })
    }

    /// Purely atomic measure from `(value, weight)` pairs.
    pub fn atomic(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(value, weight)| Atom { value, weight })
                .collect(),
            Vec::new(),
        )
    }

    pub fn dirac(value: f64) -> Result<Self> {
        Self::atomic(&[(value, 1.0)])
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![UniformPiece { lo, hi, weight: 1.0 }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[UniformPiece] {
        &self.pieces
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn atom_weight(&self, value: f64) -> f64 {
        self.atoms
            .iter()
            .find(|a| value_key(a.value) == value_key(value))
            .map_or(0.0, |a| a.weight)
    }

    /// Generalized inverse CDF: the smallest `x` with `F(x) > u`.
    pub fn sample_value(&self, u: f64) -> f64 {
        let idx = self.segments.partition_point(|s| s.start + s.mass <= u);
        let seg = self.segments[idx.min(self.segments.len() - 1)];
        match seg.segment {
            Segment::Point(x) => x,
            Segment::Flat { lo, hi } => {
                let t = ((u - seg.start) / seg.mass).clamp(0.0, 1.0);
                let x = lo + t * (hi - lo);
                x.clamp(lo, f64::from_bits(hi.to_bits() - 1))
            }
        }
    }

    /// `F(x) = mu((0, x])`, evaluated directly from atoms and pieces.
    pub fn cdf(&self, x: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.value <= x)
            .map(|a| a.weight)
            .sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .map(|p| p.weight * ((x - p.lo) / (p.hi - p.lo)).clamp(0.0, 1.0))
            .sum();
        atoms + pieces
    }

    /// `E[log((1-w)/w)]` under this measure, exact for atoms and pieces.
    pub fn solomon_integral(&self) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| a.weight * log_ratio(a.value))
            .sum();
        let pieces: f64 = self
            .pieces
            .iter()
            .map(|p| p.weight / (p.hi - p.lo) * (log_ratio_antiderivative(p.hi) - log_ratio_antiderivative(p.lo)))
            .sum();
        atoms + pieces
    }
}

/// `log((1-w)/w)`, the log odds of a left step.
pub fn log_ratio(w: f64) -> f64 {
    ((1.0 - w) / w).ln()
}

// d/dx = log((1-x)/x)
fn log_ratio_antiderivative(x: f64) -> f64 {
    -(1.0 - x) * (1.0 - x).ln() - x * x.ln() + 1.0
}

fn compile_segments(atoms: &[Atom], pieces: &[UniformPiece]) -> Vec<CdfSegment> {
    let mut breaks: Vec<f64> = pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
    breaks.extend(atoms.iter().map(|a| a.value));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // (position, kind, segment, mass); points sort before flats starting at
    // the same position.
    let mut parts: Vec<(f64, u8, Segment, f64)> = atoms
        .iter()
        .map(|a| (a.value, 0, Segment::Point(a.value), a.weight))
        .collect();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let density: f64 = pieces
            .iter()
            .filter(|p| p.lo <= a && b <= p.hi)
            .map(|p| p.weight / (p.hi - p.lo))
            .sum();
        if density > 0.0 {
            parts.push((a, 1, Segment::Flat { lo: a, hi: b }, density * (b - a)));
        }
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut start = 0.0;
    parts
        .into_iter()
        .map(|(_, _, segment, mass)| {
            let s = CdfSegment {
                segment,
                start,
                mass,
            };
            start += mass;
            s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolomonVerdict {
    Recurrent,
    TransientRight,
    TransientLeft,
}

impl fmt::Display for SolomonVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolomonVerdict::Recurrent => "recurrent",
            SolomonVerdict::TransientRight => "transient_right",
            SolomonVerdict::TransientLeft => "transient_left",
        })
    }
}

/// Sign rule on the log-ratio integral with a symmetric zero band.
pub fn classify_log_ratio(integral: f64, tolerance: f64) -> SolomonVerdict {
    if integral.abs() <= tolerance {
        SolomonVerdict::Recurrent
    } else if integral < 0.0 {
        SolomonVerdict::TransientRight
    } else {
        SolomonVerdict::TransientLeft
    }
}

pub fn solomon_classify(spec: &MeasureSpec) -> SolomonVerdict {
    classify_log_ratio(spec.solomon_integral(), SOLOMON_TOLERANCE)
}

/// Total variation distance between purely atomic measures.
pub fn atomic_tv_distance(a: &MeasureSpec, b: &MeasureSpec) -> Result<f64> {
    if !a.is_purely_atomic() || !b.is_purely_atomic() {
        return Err(Error::NotAtomic);
    }
    let mut diff: BTreeMap<u64, f64> = BTreeMap::new();
    for atom in a.atoms() {
        *diff.entry(value_key(atom.value)).or_default() += atom.weight;
    }
    for atom in b.atoms() {
        *diff.entry(value_key(atom.value)).or_default() -= atom.weight;
    }
    Ok(0.5 * diff.values().map(|d| d.abs()).sum::<f64>())
}

/// Points `(k + 1/2) / GRID_POINTS`.
pub fn grid() -> impl Iterator<Item = f64> {
    (0..GRID_POINTS).map(|k| (k as f64 + 0.5) / GRID_POINTS as f64)
}

fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&s| s <= x) as f64 / sorted.len() as f64
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Weak-convergence metric between an empirical sample and a measure.
///
/// This is the grid-CDF discrepancy `max_k |F_n(x_k) - F(x_k)|` over
/// [`GRID_POINTS`] points, a reproducible surrogate that bounds the
/// bounded-Lipschitz distance up to a constant.
pub fn empirical_bl_distance(samples: &[f64], spec: &MeasureSpec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample list"));
    }
    let sorted = sorted_copy(samples);
    Ok(grid()
        .map(|x| (empirical_cdf(&sorted, x) - spec.cdf(x)).abs())
        .fold(0.0, f64::max))
}

/// Grid-CDF discrepancy between two samples.
pub fn grid_cdf_distance_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample list"));
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    Ok(grid()
        .map(|x| (empirical_cdf(&a, x) - empirical_cdf(&b, x)).abs())
        .fold(0.0, f64::max))
}

/// Grid-CDF discrepancy between two measures.
pub fn grid_cdf_distance(a: &MeasureSpec, b: &MeasureSpec) -> f64 {
    grid().map(|x| (a.cdf(x) - b.cdf(x)).abs()).fold(0.0, f64::max)
}

/// Two-sided Dvoretzky-Kiefer-Wolfowitz band for `n` samples.
pub fn dkw_band(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}
