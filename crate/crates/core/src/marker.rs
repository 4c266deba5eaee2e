//! Reconstruction through non-atomic markers.
//!
//! A non-atomic value identifies its site. Two consecutive first occurrences
//! of non-atomic values mean the walker just stepped onto two fresh sites in
//! a row, so unless it turns back the next observation is the value of yet
//! another fresh site: an independent draw from `mu`. The same uniqueness
//! turns the shortest word between two non-atomic values into a verbatim
//! block of the environment, and overlapping blocks glue into a line.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::classifier::SupportReport;
use crate::error::{Error, Result};
use crate::measure::{empirical_bl_distance, Atom, MeasureSpec, UniformPiece};
use crate::value_key;

/// Number of histogram bins of the continuous part.
pub const HISTOGRAM_BINS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarkerSample {
    pub m: usize,
    pub value: f64,
    pub markers: (f64, f64),
}

/// Scans for `xi(m-2), xi(m-1)` both non-atomic first occurrences and
/// `xi(m) != xi(m-2)`. Triples do not overlap.
pub fn extract_marker_samples(xs: &[f64], report: &SupportReport) -> Vec<MarkerSample> {
    let fresh = |k: usize| report.first_seen(xs[k]) == Some(k) && report.is_non_atom(xs[k]);
    let mut out = Vec::new();
    let mut m = 2;
    while m < xs.len() {
        if fresh(m - 2) && fresh(m - 1) && value_key(xs[m]) != value_key(xs[m - 2]) {
            out.push(MarkerSample {
                m,
                value: xs[m],
                markers: (xs[m - 2], xs[m - 1]),
            });
            m += 3;
        } else {
            m += 1;
        }
    }
    out
}

/// Empirical law of harvested samples: repeated values become atoms, the
/// rest is kept raw and binned.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalMeasure {
    pub n: usize,
    pub atoms: Vec<Atom>,
    /// Values seen once, sorted.
    pub continuous: Vec<f64>,
    pub histogram: Vec<usize>,
    #[serde(skip)]
    values: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn atom_weight(&self, value: f64) -> f64 {
        self.atoms
            .iter()
            .find(|a| value_key(a.value) == value_key(value))
            .map_or(0.0, |a| a.weight)
    }

    pub fn continuous_weight(&self) -> f64 {
        self.continuous.len() as f64 / self.n as f64
    }

    /// Grid-CDF distance of the raw samples to `spec`.
    pub fn grid_distance(&self, spec: &MeasureSpec) -> f64 {
        empirical_bl_distance(&self.values, spec).expect("nonempty by construction")
    }

    /// Atoms plus one uniform piece per occupied histogram bin.
    pub fn to_spec(&self) -> Result<MeasureSpec> {
        let n = self.n as f64;
        let mut pieces: Vec<UniformPiece> = self
            .histogram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| UniformPiece {
                lo: (k as f64 / HISTOGRAM_BINS as f64).max(f64::EPSILON),
                hi: ((k + 1) as f64 / HISTOGRAM_BINS as f64).min(1.0 - f64::EPSILON),
                weight: c as f64 / n,
            })
            .collect();
        let mut atoms = self.atoms.clone();
        let total: f64 = atoms.iter().map(|a| a.weight).sum::<f64>() + pieces.iter().map(|p| p.weight).sum::<f64>();
        let fix = 1.0 - total;
        if let Some(p) = pieces.last_mut() {
            p.weight += fix;
        } else if let Some(a) = atoms.last_mut() {
            a.weight += fix;
        }
        MeasureSpec::new(atoms, pieces)
    }
}

pub fn empirical_measure(samples: &[MarkerSample]) -> Result<EmpiricalMeasure> {
    empirical_measure_of(&samples.iter().map(|s| s.value).collect::<Vec<_>>())
}

pub fn empirical_measure_of(values: &[f64]) -> Result<EmpiricalMeasure> {
    if values.is_empty() {
        return Err(Error::Empty("marker samples"));
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for &v in values {
        *counts.entry(value_key(v)).or_default() += 1;
    }
    let n = values.len();
    let mut atoms: Vec<Atom> = counts
        .iter()
        .filter(|(_, &c)| c >= 2)
        .map(|(&k, &c)| Atom {
            value: f64::from_bits(k),
            weight: c as f64 / n as f64,
        })
        .collect();
    atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut continuous: Vec<f64> = values.iter().copied().filter(|v| counts[&value_key(*v)] == 1).collect();
    continuous.sort_by(f64::total_cmp);
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for &v in &continuous {
        histogram[((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(EmpiricalMeasure {
        n,
        atoms,
        continuous,
        histogram,
        values: values.to_vec(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct RecurrenceOptions {
    pub tracked: usize,
    /// Final fraction of the stream in which a reappearance counts.
    pub window: f64,
}

impl Default for RecurrenceOptions {
    fn default() -> Self {
        Self {
            tracked: 10,
            window: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrenceEvidence {
    RecurrentEvidence,
    TransientEvidence,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackedValue {
    pub value: f64,
    pub sampled_at: usize,
    pub reappearances: usize,
    pub in_window: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecurrenceReport {
    pub evidence: RecurrenceEvidence,
    pub window_start: usize,
    pub tracked: Vec<TrackedValue>,
}

/// Tracks the first non-atomic sample values and looks for them again.
pub fn marker_recurrence_report(
    xs: &[f64],
    samples: &[MarkerSample],
    report: &SupportReport,
    opts: RecurrenceOptions,
) -> Result<RecurrenceReport> {
    if samples.is_empty() {
        return Err(Error::Empty("marker samples"));
    }
    let window_start = ((xs.len() as f64) * (1.0 - opts.window)).floor() as usize;
    let mut tracked: Vec<TrackedValue> = Vec::new();
    let mut slot: HashMap<u64, usize> = HashMap::new();
    for s in samples.iter().filter(|s| !report.is_atom(s.value)) {
        if tracked.len() == opts.tracked {
            break;
        }
        if slot.contains_key(&value_key(s.value)) {
            continue;
        }
        slot.insert(value_key(s.value), tracked.len());
        tracked.push(TrackedValue {
            value: s.value,
            sampled_at: s.m,
            reappearances: 0,
            in_window: 0,
        });
    }
    for (k, &x) in xs.iter().enumerate() {
        if let Some(&i) = slot.get(&value_key(x)) {
            let t = &mut tracked[i];
            if k > t.sampled_at {
                t.reappearances += 1;
                if k >= window_start {
                    t.in_window += 1;
                }
            }
        }
    }
    let evidence = if tracked.iter().any(|t| t.in_window > 0) {
        RecurrenceEvidence::RecurrentEvidence
    } else {
        RecurrenceEvidence::TransientEvidence
    };
    Ok(RecurrenceReport {
        evidence,
        window_start,
        tracked,
    })
}

/// A stretch of the environment between two anchor values, oriented from
/// the first endpoint to the second.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvBlock {
    pub values: Vec<f64>,
    pub endpoints: (f64, f64),
    /// Stream index where the minimal word starts.
    pub start: usize,
}

impl EnvBlock {
    /// A block from a true straight crossing never repeats a non-atomic
    /// value.
    pub fn is_straight(&self, is_atom: &dyn Fn(f64) -> bool) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.values.iter().filter(|&&v| !is_atom(v)).all(|&v| seen.insert(value_key(v)))
    }
}

/// Shortest word from `a` to `b` or from `b` to `a` with no interior
/// occurrence of either; ties go to the earliest start.
pub fn minimal_word(xs: &[f64], a: f64, b: f64) -> Result<EnvBlock> {
    let (ka, kb) = (value_key(a), value_key(b));
    if ka == kb {
        return Err(Error::InvalidArgument("anchors must differ".into()));
    }
    let mut occ_a = Vec::new();
    let mut occ_b = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if value_key(x) == ka {
            occ_a.push(i as u32);
        } else if value_key(x) == kb {
            occ_b.push(i as u32);
        }
    }
    minimal_word_from(xs, a, b, &occ_a, &occ_b).ok_or(Error::AnchorsNeverLinked { a, b })
}

/// [`minimal_word`] from precomputed sorted occurrence lists.
pub fn minimal_word_from(xs: &[f64], a: f64, b: f64, occ_a: &[u32], occ_b: &[u32]) -> Option<EnvBlock> {
    let (mut i, mut j) = (0, 0);
    let mut last: Option<(usize, bool)> = None;
    let mut best: Option<(usize, usize, bool)> = None;
    while i < occ_a.len() || j < occ_b.len() {
        let take_a = j == occ_b.len() || (i < occ_a.len() && occ_a[i] < occ_b[j]);
        let t = if take_a {
            i += 1;
            occ_a[i - 1] as usize
        } else {
            j += 1;
            occ_b[j - 1] as usize
        };
        if let Some((s, was_a)) = last {
            if was_a != take_a && best.is_none_or(|(bs, be, _)| t - s < be - bs) {
                best = Some((s, t, was_a));
            }
        }
        last = Some((t, take_a));
    }
    let (s, e, starts_at_a) = best?;
    let mut values = xs[s..=e].to_vec();
    if !starts_at_a {
        values.reverse();
    }
    Some(EnvBlock {
        values,
        endpoints: (a, b),
        start: s,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    AsIs,
    Reflected,
    Undecided,
}

/// Values placed on consecutive integer positions. Non-atomic values keep a
/// unique coordinate.
#[derive(Clone, Debug, Default)]
pub struct LineAssembly {
    sites: BTreeMap<i64, f64>,
    coords: HashMap<u64, i64>,
    origin: Option<f64>,
    pub orientation: Option<Orientation>,
}

impl LineAssembly {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn value_at(&self, pos: i64) -> Option<f64> {
        self.sites.get(&pos).copied()
    }

    pub fn position_of(&self, value: f64) -> Option<i64> {
        self.coords.get(&value_key(value)).copied()
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.sites.iter().map(|(&p, &v)| (p, v))
    }

    /// Maximal runs of consecutive positions, as `(lo, hi)`.
    pub fn runs(&self) -> Vec<(i64, i64)> {
        let mut out: Vec<(i64, i64)> = Vec::new();
        for &p in self.sites.keys() {
            match out.last_mut() {
                Some(r) if r.1 + 1 == p => r.1 = p,
                _ => out.push((p, p)),
            }
        }
        out
    }

    fn stage(&self, block: &[f64], d: i64, offset: i64, is_atom: &dyn Fn(f64) -> bool) -> Result<Vec<(i64, f64)>> {
        let mut fresh: Vec<(i64, f64)> = Vec::new();
        let mut fresh_coords: HashMap<u64, i64> = HashMap::new();
        for (k, &v) in block.iter().enumerate() {
            let pos = offset + d * k as i64;
            if let Some(old) = self.value_at(pos) {
                if value_key(old) != value_key(v) {
                    return Err(Error::InconsistentBlocks(format!("position {pos} holds {old}, block has {v}")));
                }
            } else {
                fresh.push((pos, v));
            }
            if !is_atom(v) {
                let known = self.position_of(v).or_else(|| fresh_coords.get(&value_key(v)).copied());
                match known {
                    Some(q) if q != pos => {
                        return Err(Error::InconsistentBlocks(format!("value {v} at positions {q} and {pos}")));
                    }
                    Some(_) => {}
                    None => {
                        fresh_coords.insert(value_key(v), pos);
                    }
                }
            }
        }
        Ok(fresh)
    }

    /// Merges a block by aligning it on the non-atomic values it shares
    /// with the assembly. The first block is placed at `0..len`.
    pub fn merge(&mut self, block: &[f64], is_atom: &dyn Fn(f64) -> bool) -> Result<()> {
        if block.is_empty() {
            return Err(Error::Empty("block"));
        }
        if self.sites.is_empty() {
            let staged = self.stage(block, 1, 0, is_atom)?;
            self.origin = Some(block[0]);
            return self.apply(staged, is_atom);
        }
        let shared: Vec<(i64, i64)> = block
            .iter()
            .enumerate()
            .filter(|(_, &v)| !is_atom(v))
            .filter_map(|(k, &v)| self.position_of(v).map(|p| (k as i64, p)))
            .collect();
        let Some(&(k0, p0)) = shared.first() else {
            return Err(Error::InconsistentBlocks("block shares no value with the assembly".into()));
        };
        let directions: Vec<i64> = match shared.get(1) {
            Some(&(k1, p1)) if (p1 - p0).abs() == (k1 - k0).abs() => vec![(p1 - p0).signum() * (k1 - k0).signum()],
            Some(_) => {
                return Err(Error::InconsistentBlocks("shared values at incompatible distances".into()));
            }
            None => vec![1, -1],
        };
        let mut best: Option<(usize, Vec<(i64, f64)>)> = None;
        let mut first_err = None;
        for d in directions {
            match self.stage(block, d, p0 - d * k0, is_atom) {
                // more overlap with known sites wins; ties keep the first
                Ok(staged) if best.as_ref().is_none_or(|(n, _)| staged.len() < *n) => {
                    best = Some((staged.len(), staged));
                }
                Ok(_) => {}
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match best {
            Some((_, staged)) => self.apply(staged, is_atom),
            None => Err(first_err.expect("at least one direction tried")),
        }
    }

    fn apply(&mut self, staged: Vec<(i64, f64)>, is_atom: &dyn Fn(f64) -> bool) -> Result<()> {
        for (pos, v) in staged {
            self.sites.insert(pos, v);
            if !is_atom(v) {
                self.coords.insert(value_key(v), pos);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Site {
            pos: i64,
            value: f64,
        }
        #[derive(Serialize)]
        struct View {
            origin_value: Option<f64>,
            sites: Vec<Site>,
            orientation: Orientation,
        }
        serde_json::to_value(View {
            origin_value: self.origin,
            sites: self.sites().map(|(pos, value)| Site { pos, value }).collect(),
            orientation: self.orientation.unwrap_or(Orientation::Undecided),
        })
        .expect("plain data")
    }
}

/// Assembles blocks whose values are all treated as non-atomic.
pub fn assemble_environment(blocks: &[EnvBlock]) -> Result<LineAssembly> {
    assemble_environment_with(blocks, &|_| false)
}

pub fn assemble_environment_with(blocks: &[EnvBlock], is_atom: &dyn Fn(f64) -> bool) -> Result<LineAssembly> {
    let mut line = LineAssembly::new();
    for b in blocks {
        line.merge(&b.values, is_atom)?;
    }
    Ok(line)
}

#[derive(Clone, Debug, Serialize)]
pub struct SiteProportion {
    pub pos: i64,
    pub value: f64,
    pub departures: usize,
    pub plus_moves: usize,
    pub proportion: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrientationReport {
    pub orientation: Orientation,
    pub score: f64,
    pub scored_departures: usize,
    pub sites: Vec<SiteProportion>,
}

/// Sites whose value is this close to 1/2 carry no orientation signal.
pub const ORIENTATION_MARGIN: f64 = 0.05;

/// Decides whether increasing assembly coordinates point right.
///
/// Every departure from an assembled non-atomic site whose direction can be
/// read off the next observation contributes `+-log(w / (1 - w))`.
pub fn orient_environment(line: &LineAssembly, xs: &[f64], is_atom: &dyn Fn(f64) -> bool) -> OrientationReport {
    let mut counts: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for w in xs.windows(2) {
        let (here, next) = (w[0], w[1]);
        if is_atom(here) {
            continue;
        }
        let Some(p) = line.position_of(here) else { continue };
        let same = |x: Option<f64>| x.is_none_or(|x| value_key(x) == value_key(next));
        let (plus, minus) = (same(line.value_at(p + 1)), same(line.value_at(p - 1)));
        if plus == minus {
            continue;
        }
        let c = counts.entry(p).or_default();
        c.0 += 1;
        c.1 += usize::from(plus);
    }
    let mut score = 0.0;
    let mut scored = 0;
    let sites: Vec<SiteProportion> = counts
        .into_iter()
        .map(|(pos, (departures, plus_moves))| {
            let value = line.value_at(pos).unwrap();
            if (value - 0.5).abs() > ORIENTATION_MARGIN {
                let l = (value / (1.0 - value)).ln();
                score += l * (2.0 * plus_moves as f64 - departures as f64);
                scored += departures;
            }
            SiteProportion {
                pos,
                value,
                departures,
                plus_moves,
                proportion: plus_moves as f64 / departures as f64,
            }
        })
        .collect();
    let orientation = if score > 0.0 {
        Orientation::AsIs
    } else if score < 0.0 {
        Orientation::Reflected
    } else {
        Orientation::Undecided
    };
    OrientationReport {
        orientation,
        score,
        scored_departures: scored,
        sites,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    pub max_anchors: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { max_anchors: 64 }
    }
}

#[derive(Clone, Debug)]
pub struct EnvironmentReconstruction {
    pub line: LineAssembly,
    pub orientation: OrientationReport,
    pub anchors: Vec<f64>,
    pub blocks: Vec<EnvBlock>,
    /// Anchors that could not be linked or merged.
    pub skipped: usize,
}

/// Builds a line from the most frequently observed non-atomic values.
///
/// The two most frequent values give the first block; every further anchor
/// is linked to the already placed anchor with the shortest minimal word.
pub fn reconstruct_environment(
    xs: &[f64],
    report: &SupportReport,
    opts: ChainOptions,
) -> Result<EnvironmentReconstruction> {
    let is_atom = |v: f64| report.is_atom(v);
    let mut anchors = report.non_atoms();
    anchors.sort_by_key(|&v| (std::cmp::Reverse(report.count(v)), report.first_seen(v)));
    anchors.truncate(opts.max_anchors);
    if anchors.len() < 2 {
        return Err(Error::InsufficientData("fewer than two non-atomic values".into()));
    }
    let word = |a: f64, b: f64| {
        minimal_word_from(xs, a, b, report.occurrences(a), report.occurrences(b)).filter(|w| w.is_straight(&is_atom))
    };
    let mut line = LineAssembly::new();
    let mut blocks = Vec::new();
    let mut linked = vec![anchors[0]];
    let mut rest = Vec::new();
    for &b in &anchors[1..] {
        if blocks.is_empty() {
            if let Some(w) = word(anchors[0], b) {
                line.merge(&w.values, &is_atom)?;
                blocks.push(w);
                linked.push(b);
                continue;
            }
        }
        rest.push(b);
    }
    if blocks.is_empty() {
        return Err(Error::AnchorsNeverLinked {
            a: anchors[0],
            b: anchors[1],
        });
    }
    let mut skipped = 0;
    for c in rest {
        if line.position_of(c).is_some() {
            linked.push(c);
            continue;
        }
        let best = linked
            .iter()
            .filter_map(|&a| word(a, c))
            .min_by_key(|w| (w.values.len(), w.start));
        match best.map(|w| line.merge(&w.values, &is_atom).map(|_| w)) {
            Some(Ok(w)) => {
                blocks.push(w);
                linked.push(c);
            }
            _ => skipped += 1,
        }
    }
    let orientation = orient_environment(&line, xs, &is_atom);
    line.orientation = Some(orientation.orientation);
    Ok(EnvironmentReconstruction {
        line,
        orientation,
        anchors,
        blocks,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::scan_support;
    use crate::measure::dkw_band;

    fn block(values: &[f64]) -> EnvBlock {
        EnvBlock {
            values: values.to_vec(),
            endpoints: (values[0], *values.last().unwrap()),
            start: 0,
        }
    }

    #[test]
    fn fresh_markers_yield_a_sample() {
        let xs = [0.41, 0.87, 0.29, 0.55];
        let s = extract_marker_samples(&xs, &scan_support(&xs));
        assert_eq!(s[0].m, 2);
        assert_eq!(s[0].value, 0.29);
        assert_eq!(s[0].markers, (0.41, 0.87));
        // non-overlapping: the next candidate is m = 5
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn backtrack_gives_no_sample() {
        let xs = [0.41, 0.87, 0.41];
        assert!(extract_marker_samples(&xs, &scan_support(&xs)).is_empty());
    }

    #[test]
    fn atomic_stream_gives_no_sample() {
        let xs = [0.3, 0.3, 0.7, 0.7, 0.3, 0.7, 0.7];
        assert!(extract_marker_samples(&xs, &scan_support(&xs)).is_empty());
    }

    #[test]
    fn empirical_measure_of_constant_samples_is_a_point_mass() {
        let e = empirical_measure_of(&[0.4; 5]).unwrap();
        assert_eq!(e.atoms, vec![Atom { value: 0.4, weight: 1.0 }]);
        assert!(e.continuous.is_empty());
        let spec = e.to_spec().unwrap();
        assert_eq!(spec, MeasureSpec::dirac(0.4).unwrap());
        assert!(empirical_measure_of(&[]).is_err());
    }

    #[test]
    fn empirical_measure_splits_atoms_and_continuous_mass() {
        let mut v = vec![0.5; 500];
        v.extend((0..500).map(|i| 0.6 + 0.2 * (i as f64 + 0.5) / 500.0));
        let e = empirical_measure_of(&v).unwrap();
        assert_eq!(e.atom_weight(0.5), 0.5);
        assert_eq!(e.continuous_weight(), 0.5);
        let in_range: usize = e
            .histogram
            .iter()
            .enumerate()
            .filter(|(k, _)| (*k as f64 + 1.0) / 64.0 > 0.6 && (*k as f64) / 64.0 < 0.8)
            .map(|(_, c)| c)
            .sum();
        assert_eq!(in_range, 500);
        let spec = e.to_spec().unwrap();
        assert!((spec.atom_weight(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empirical_uniform_samples_are_close_in_grid_distance() {
        let spec = MeasureSpec::uniform(0.2, 0.8).unwrap();
        let s = crate::rng::KeyedStream::new(3, "test");
        let v: Vec<f64> = (0..10_000).map(|c| spec.sample_value(s.unit(c))).collect();
        let e = empirical_measure_of(&v).unwrap();
        assert!(e.grid_distance(&spec) <= 0.03);
        assert!(dkw_band(10_000, 0.99) < 0.03);
    }

    #[test]
    fn recurrence_report_counts_reappearances() {
        let xs = [0.11, 0.23, 0.37, 0.48, 0.37, 0.61, 0.37, 0.72];
        let r = scan_support(&xs);
        let samples = extract_marker_samples(&xs, &r);
        assert_eq!(samples[0].value, 0.37);
        let opts = RecurrenceOptions {
            tracked: 10,
            window: 0.25,
        };
        let rep = marker_recurrence_report(&xs, &samples, &r, opts).unwrap();
        assert_eq!(rep.window_start, 6);
        assert_eq!(rep.tracked[0].in_window, 1);
        assert_eq!(rep.tracked[0].reappearances, 2);
        assert_eq!(rep.evidence, RecurrenceEvidence::RecurrentEvidence);

        let xs = [0.11, 0.23, 0.37, 0.48, 0.61, 0.72, 0.83, 0.94];
        let r = scan_support(&xs);
        let samples = extract_marker_samples(&xs, &r);
        let rep = marker_recurrence_report(&xs, &samples, &r, RecurrenceOptions::default()).unwrap();
        assert!(rep.tracked.iter().all(|t| t.reappearances == 0));
        assert_eq!(rep.evidence, RecurrenceEvidence::TransientEvidence);
    }

    #[test]
    fn minimal_word_is_the_shortest_crossing() {
        let (a, u, v, b, w) = (0.11, 0.22, 0.33, 0.44, 0.55);
        let xs = [a, u, w, u, v, b, v, u, a, u, v, b];
        let blk = minimal_word(&xs, a, b).unwrap();
        assert_eq!(blk.values, vec![a, u, v, b]);
        assert_eq!(blk.start, 5);
        let xs = [b, a, u];
        assert_eq!(minimal_word(&xs, a, b).unwrap().values, vec![a, b]);
        let xs = [a, u, a, u];
        assert!(matches!(minimal_word(&xs, a, b), Err(Error::AnchorsNeverLinked { .. })));
    }

    #[test]
    fn chain_merge() {
        let (a, u, b, v, c) = (0.1, 0.2, 0.3, 0.4, 0.6);
        let line = assemble_environment(&[block(&[a, u, b]), block(&[b, v, c])]).unwrap();
        let vals: Vec<f64> = line.sites().map(|s| s.1).collect();
        assert_eq!(vals, vec![a, u, b, v, c]);
        let line = assemble_environment(&[block(&[a, u, b]), block(&[c, v, b])]).unwrap();
        let vals: Vec<f64> = line.sites().map(|s| s.1).collect();
        assert_eq!(vals, vec![a, u, b, v, c]);
    }

    #[test]
    fn contained_block_adds_nothing() {
        let (a, u, b, v, c) = (0.1, 0.2, 0.3, 0.4, 0.6);
        let line = assemble_environment(&[block(&[a, u, b, v, c]), block(&[u, b])]).unwrap();
        assert_eq!(line.len(), 5);
        assert_eq!(line.runs(), vec![(0, 4)]);
    }

    #[test]
    fn conflicting_blocks_are_rejected() {
        let (a, u, b, u2) = (0.1, 0.2, 0.3, 0.25);
        let err = assemble_environment(&[block(&[a, u, b]), block(&[b, u2, a])]).unwrap_err();
        assert!(matches!(err, Error::InconsistentBlocks(_)));
    }

    #[test]
    fn assembly_json_layout() {
        let line = assemble_environment(&[block(&[0.1, 0.2])]).unwrap();
        let j = line.to_json();
        assert_eq!(j["origin_value"], 0.1);
        assert_eq!(j["sites"][1]["pos"], 1);
        assert_eq!(j["orientation"], "undecided");
    }

    fn orientation_fixture(plus: usize, minus: usize) -> (LineAssembly, Vec<f64>) {
        let (l, z, r) = (0.21, 0.7, 0.83);
        let line = assemble_environment(&[block(&[l, z, r])]).unwrap();
        let mut xs = Vec::new();
        for _ in 0..plus {
            xs.extend([z, r]);
        }
        for _ in 0..minus {
            xs.extend([z, l]);
        }
        (line, xs)
    }

    #[test]
    fn orientation_follows_the_score() {
        let (line, xs) = orientation_fixture(7, 3);
        let rep = orient_environment(&line, &xs, &|_| false);
        let site = rep.sites.iter().find(|s| s.pos == 1).unwrap();
        assert_eq!((site.departures, site.plus_moves), (10, 7));
        // the end sites have an unassembled neighbor, so only the middle scores
        let l = (0.7f64 / 0.3).ln();
        assert!((rep.score - 4.0 * l).abs() < 1e-12);
        assert_eq!(rep.orientation, Orientation::AsIs);

        let (line, xs) = orientation_fixture(3, 7);
        assert_eq!(orient_environment(&line, &xs, &|_| false).orientation, Orientation::Reflected);
    }

    #[test]
    fn half_valued_sites_leave_orientation_undecided() {
        let line = assemble_environment(&[block(&[0.5, 0.51, 0.49])]).unwrap();
        let xs = [0.51, 0.49, 0.51, 0.49, 0.51, 0.5];
        let rep = orient_environment(&line, &xs, &|_| false);
        assert_eq!(rep.orientation, Orientation::Undecided);
        assert!(rep.sites.iter().any(|s| s.departures > 0));
    }

    #[test]
    fn escaped_walk_shows_transient_evidence() {
        let spec = crate::MeasureSpec::uniform(0.6, 0.9).unwrap();
        let sim = crate::run_simulation(&spec, 1, 1_000_000, false).unwrap();
        let report = crate::scan_support(&sim.observations);
        let samples = extract_marker_samples(&sim.observations, &report);
        let r = marker_recurrence_report(&sim.observations, &samples, &report, RecurrenceOptions::default()).unwrap();
        assert_eq!(r.evidence, RecurrenceEvidence::TransientEvidence);
        assert_eq!(r.tracked.len(), 10);
        assert!(r.tracked.iter().all(|t| t.in_window == 0));
    }
}
