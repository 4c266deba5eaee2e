//! Decoding the tree walk `T` from the observations, crossings, and the
//! straightness indicators of four-vertex pattern sets.
//!
//! Because every vertex has exactly one neighbor per label, the next vertex
//! of `T` is determined by the current vertex and the next observation. A
//! pattern set is a descending chain `v1 v2 v3 v4` labeled `(a, b, b, a)`;
//! its indicator is 1 iff the first crossing of `(v1, v4)` that stays inside
//! `{v2, v3}` takes exactly three steps.

use std::fmt::Write as _;

use serde::Serialize;

use crate::environment::{PathRole, TreePath};
use crate::error::{Error, Result};
use crate::tree::{Label, LabeledTree, Labeling, VertexId};

const NONE: u32 = u32::MAX;

/// Streaming decoder: one observation in, one vertex out.
#[derive(Clone, Debug)]
pub struct Decoder {
    labeling: Labeling,
    tree: LabeledTree,
    current: VertexId,
    steps: usize,
}

impl Decoder {
    /// Starts at the root, which carries the label of the first observation.
    pub fn start(labeling: Labeling, first: f64) -> Result<Self> {
        let root_label = labeling
            .label_of(first)
            .ok_or(Error::SupportDrift { index: 0, value: first })?;
        let tree = LabeledTree::new(root_label, labeling.len());
        let current = tree.root();
        Ok(Self {
            labeling,
            tree,
            current,
            steps: 0,
        })
    }

    pub fn push(&mut self, value: f64) -> Result<VertexId> {
        self.steps += 1;
        let label = self.labeling.label_of(value).ok_or(Error::SupportDrift {
            index: self.steps,
            value,
        })?;
        self.current = self.tree.neighbor(self.current, label);
        Ok(self.current)
    }

    pub fn current(&self) -> VertexId {
        self.current
    }

    pub fn tree(&self) -> &LabeledTree {
        &self.tree
    }

    pub fn into_parts(self) -> (Labeling, LabeledTree) {
        (self.labeling, self.tree)
    }
}

/// A decoded stream together with the tree it lives in.
#[derive(Clone, Debug)]
pub struct DecodedWalk {
    pub labeling: Labeling,
    pub tree: LabeledTree,
    pub path: TreePath,
}

/// Decodes `T` from `xs`, labeling vertices by `support`.
pub fn decode_t(xs: &[f64], support: &[f64]) -> Result<DecodedWalk> {
    let first = *xs.first().ok_or(Error::Empty("observation stream"))?;
    let labeling = Labeling::new(support)?;
    let labels = labeling.encode(xs)?;
    let root_label = labeling.label_of(first).unwrap();
    let mut tree = LabeledTree::new(root_label, labeling.len());
    let vertices = decode_labels(&labels, &mut tree);
    Ok(DecodedWalk {
        labeling,
        tree,
        path: TreePath {
            role: PathRole::Walk,
            vertices,
        },
    })
}

/// Decodes into an existing tree whose root carries the label of `xs[0]`.
pub fn decode_t_into(xs: &[f64], labeling: &Labeling, tree: &mut LabeledTree) -> Result<TreePath> {
    let labels = labeling.encode(xs)?;
    match labels.first() {
        None => return Err(Error::Empty("observation stream")),
        Some(&l) if l != tree.label(tree.root()) => {
            return Err(Error::RootMismatch {
                expected: labeling.value(tree.label(tree.root())),
                found: xs[0],
            })
        }
        Some(_) => {}
    }
    Ok(TreePath {
        role: PathRole::Walk,
        vertices: decode_labels(&labels, tree),
    })
}

/// The decoding loop proper. `labels[0]` must be the root label.
pub fn decode_labels(labels: &[Label], tree: &mut LabeledTree) -> Vec<VertexId> {
    let mut out = Vec::with_capacity(labels.len());
    let mut v = tree.root();
    out.push(v);
    for &l in labels.iter().skip(1) {
        v = tree.neighbor(v, l);
        out.push(v);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingSign {
    Positive,
    Negative,
}

/// `(i1, i2)` with `S(i1) = w1`, `S(i2) = w2` and no endpoint visit strictly
/// between them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossingRecord<P> {
    pub i1: usize,
    pub i2: usize,
    pub endpoints: (P, P),
    pub sign: CrossingSign,
    pub straight: bool,
    pub confined: bool,
}

impl<P> CrossingRecord<P> {
    pub fn duration(&self) -> usize {
        self.i1.abs_diff(self.i2)
    }
}

/// All crossings of `(w1, w2)` by `path`, in time order.
///
/// `distance` is the path distance between the endpoints; `inside`, when
/// given, decides confinement of the interior. Without it every crossing
/// counts as confined.
pub fn find_crossings<P: Copy + Eq>(
    path: &[P],
    w1: P,
    w2: P,
    distance: usize,
    inside: Option<&dyn Fn(P) -> bool>,
) -> Vec<CrossingRecord<P>> {
    let mut out = Vec::new();
    if w1 == w2 {
        return out;
    }
    let mut last: Option<(usize, bool)> = None;
    let mut clean = true;
    for (i, &p) in path.iter().enumerate() {
        if p == w1 || p == w2 {
            let at_w1 = p == w1;
            if let Some((j, was_w1)) = last {
                if was_w1 != at_w1 {
                    let (i1, i2, sign) = if was_w1 {
                        (j, i, CrossingSign::Positive)
                    } else {
                        (i, j, CrossingSign::Negative)
                    };
                    out.push(CrossingRecord {
                        i1,
                        i2,
                        endpoints: (w1, w2),
                        sign,
                        straight: i - j == distance,
                        confined: clean,
                    });
                }
            }
            last = Some((i, at_w1));
            clean = true;
        } else if let Some(f) = inside {
            if !f(p) {
                clean = false;
            }
        }
    }
    out
}

/// `(outer, inner)`: the pattern reads `outer inner inner outer` downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LabelPair {
    pub outer: Label,
    pub inner: Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetStatus {
    Open,
    Scored { w: bool, time_found: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternSet {
    pub id: usize,
    pub pair: LabelPair,
    /// `v1..v4`, each the child of the previous one.
    pub vertices: [VertexId; 4],
    pub registered_at: usize,
    pub status: SetStatus,
}

/// One scored pattern set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WIndicator {
    pub m: usize,
    pub pair: LabelPair,
    pub w: bool,
    pub time_found: usize,
    /// Time of the `v1` end and of the `v4` end of the scoring crossing.
    pub i1: usize,
    pub i2: usize,
}

impl WIndicator {
    pub fn sign(&self) -> CrossingSign {
        if self.i1 < self.i2 {
            CrossingSign::Positive
        } else {
            CrossingSign::Negative
        }
    }
}

/// A confined crossing of a registered set (first or later).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SetCrossing {
    pub set: usize,
    pub record: CrossingRecord<VertexId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum End {
    Near,
    Far,
}

#[derive(Clone, Copy, Debug)]
struct Tracker {
    last: Option<(End, usize)>,
    clean: bool,
}

/// Streaming registry of vertex-disjoint pattern sets and their indicators.
///
/// A set is registered when `T` first visits an eligible `v1`: labeled
/// `outer`, with a parent not labeled `inner` (so that the descending chain
/// exists), and with the whole chain free of earlier sets of any pair.
#[derive(Clone, Debug)]
pub struct PatternRegistry {
    pairs: Vec<LabelPair>,
    sets: Vec<PatternSet>,
    trackers: Vec<Tracker>,
    // set index * 4 + role, per vertex
    member: Vec<u32>,
    visited: Vec<bool>,
    prev: Option<VertexId>,
    record_all: bool,
    crossings: Vec<SetCrossing>,
    indicators: Vec<WIndicator>,
}

impl PatternRegistry {
    /// `record_all` keeps every confined crossing, not just the scoring one.
    pub fn new(pairs: &[LabelPair], record_all: bool) -> Self {
        Self {
            pairs: pairs.to_vec(),
            sets: Vec::new(),
            trackers: Vec::new(),
            member: Vec::new(),
            visited: Vec::new(),
            prev: None,
            record_all,
            crossings: Vec::new(),
            indicators: Vec::new(),
        }
    }

    pub fn sets(&self) -> &[PatternSet] {
        &self.sets
    }

    pub fn indicators(&self) -> &[WIndicator] {
        &self.indicators
    }

    pub fn crossings(&self) -> &[SetCrossing] {
        &self.crossings
    }

    /// Set index and role (0..4) of a vertex.
    pub fn membership(&self, v: VertexId) -> Option<(usize, usize)> {
        match self.member.get(v.index()) {
            Some(&m) if m != NONE => Some(((m / 4) as usize, (m % 4) as usize)),
            _ => None,
        }
    }

    fn grow(&mut self, n: usize) {
        if self.member.len() < n {
            self.member.resize(n, NONE);
            self.visited.resize(n, false);
        }
    }

    fn try_register(&mut self, tree: &mut LabeledTree, n: usize, v: VertexId) {
        if self.membership(v).is_some() {
            return;
        }
        let label = tree.label(v);
        let parent_label = tree.parent(v).map(|p| tree.label(p));
        for k in 0..self.pairs.len() {
            let pair = self.pairs[k];
            if label != pair.outer || parent_label == Some(pair.inner) {
                continue;
            }
            let Some(v2) = tree.child(v, pair.inner) else { continue };
            let v3 = tree.child(v2, pair.inner).expect("parent labeled outer");
            let v4 = tree.child(v3, pair.outer).expect("parent labeled inner");
            self.grow(tree.len());
            let chain = [v, v2, v3, v4];
            if chain.iter().any(|&c| self.membership(c).is_some()) {
                continue;
            }
            let id = self.sets.len();
            for (role, c) in chain.iter().enumerate() {
                self.member[c.index()] = (id * 4 + role) as u32;
            }
            self.sets.push(PatternSet {
                id,
                pair,
                vertices: chain,
                registered_at: n,
                status: SetStatus::Open,
            });
            self.trackers.push(Tracker {
                last: None,
                clean: true,
            });
            return;
        }
    }

    /// Feeds `T(n) = v`. Calls must come in time order.
    pub fn observe(&mut self, tree: &mut LabeledTree, n: usize, v: VertexId) {
        self.grow(tree.len());
        if !self.visited[v.index()] {
            self.visited[v.index()] = true;
            self.try_register(tree, n, v);
        }
        let here = self.membership(v);
        if let Some(u) = self.prev {
            if let Some((s, role)) = self.membership(u) {
                if (role == 1 || role == 2) && here.map(|h| h.0) != Some(s) {
                    self.trackers[s].clean = false;
                }
            }
        }
        if let Some((s, role)) = here {
            if role == 0 || role == 3 {
                self.endpoint(s, if role == 0 { End::Near } else { End::Far }, n);
            }
        }
        self.prev = Some(v);
    }

    fn endpoint(&mut self, s: usize, end: End, n: usize) {
        let tracker = self.trackers[s];
        if let Some((other, j)) = tracker.last {
            if other != end && tracker.clean {
                let (i1, i2, sign) = match end {
                    End::Far => (j, n, CrossingSign::Positive),
                    End::Near => (n, j, CrossingSign::Negative),
                };
                let straight = n - j == 3;
                let set = &mut self.sets[s];
                if self.record_all {
                    self.crossings.push(SetCrossing {
                        set: s,
                        record: CrossingRecord {
                            i1,
                            i2,
                            endpoints: (set.vertices[0], set.vertices[3]),
                            sign,
                            straight,
                            confined: true,
                        },
                    });
                }
                if set.status == SetStatus::Open {
                    set.status = SetStatus::Scored { w: straight, time_found: n };
                    self.indicators.push(WIndicator {
                        m: s,
                        pair: set.pair,
                        w: straight,
                        time_found: n,
                        i1,
                        i2,
                    });
                }
            }
        }
        self.trackers[s] = Tracker {
            last: Some((end, n)),
            clean: true,
        };
    }
}

/// Runs a registry over a decoded path.
pub fn score_pattern_sets(
    path: &[VertexId],
    tree: &mut LabeledTree,
    pairs: &[LabelPair],
    record_all: bool,
) -> PatternRegistry {
    let mut reg = PatternRegistry::new(pairs, record_all);
    for (n, &v) in path.iter().enumerate() {
        reg.observe(tree, n, v);
    }
    reg
}

/// Decodes a label stream and scores it in one pass, without keeping the
/// path. `labels[0]` is the root label.
pub fn score_label_stream(
    labels: &[Label],
    n_labels: usize,
    pairs: &[LabelPair],
    record_all: bool,
) -> Result<(PatternRegistry, LabeledTree)> {
    let &root_label = labels.first().ok_or(Error::Empty("observation stream"))?;
    let mut tree = LabeledTree::new(root_label, n_labels);
    let mut reg = PatternRegistry::new(pairs, record_all);
    let mut v = tree.root();
    reg.observe(&mut tree, 0, v);
    for (n, &l) in labels.iter().enumerate().skip(1) {
        v = tree.neighbor(v, l);
        reg.observe(&mut tree, n, v);
    }
    Ok((reg, tree))
}

/// The indicator stream of a decoded path for the given pairs.
pub fn crossing_indicators(path: &[VertexId], tree: &mut LabeledTree, pairs: &[LabelPair]) -> WStream {
    WStream {
        indicators: score_pattern_sets(path, tree, pairs, false).indicators,
    }
}

/// Indicators in the order they were scored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WStream {
    pub indicators: Vec<WIndicator>,
}

impl WStream {
    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.indicators.iter().filter(|w| w.w).count()
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.successes() as f64 / self.len() as f64)
    }

    /// CSV with columns `m,pair_eta_prime,pair_eta,w,time_found`.
    pub fn to_csv(&self, labeling: &Labeling) -> String {
        let mut out = String::from("m,pair_eta_prime,pair_eta,w,time_found\n");
        for w in &self.indicators {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                w.m,
                labeling.value(w.pair.outer),
                labeling.value(w.pair.inner),
                u8::from(w.w),
                w.time_found
            );
        }
        out
    }
}
