//! The rooted labeled tree on which the environment embeds as a walk.
//!
//! Every vertex has exactly one neighbor per support label. For a non-root
//! vertex the neighbor carrying its parent's label is the parent, and every
//! other label names a child; the root has one child per label. With two
//! labels the tree is a line and the rule reproduces the period-four
//! labeling `a a b b` around the root.
//!
//! Vertices live in an arena and are created on first use, so two walks
//! decoded into the same [`LabeledTree`] share vertex identities.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::value_key;

pub type Label = u16;

const NONE: u32 = u32::MAX;

/// Bijection between support values and labels `0..n`.
#[derive(Clone, Debug)]
pub struct Labeling {
    values: Vec<f64>,
    index: HashMap<u64, Label>,
}

impl Labeling {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() > usize::from(Label::MAX) {
            return Err(Error::InvalidArgument(format!("{} labels exceed the label range", values.len())));
        }
        let mut index = HashMap::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            if index.insert(value_key(v), i as Label).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate support value {v}")));
            }
        }
        Ok(Self {
            values: values.to_vec(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn label_of(&self, value: f64) -> Option<Label> {
        self.index.get(&value_key(value)).copied()
    }

    pub fn value(&self, label: Label) -> f64 {
        self.values[usize::from(label)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Labels for a whole stream; fails with [`Error::SupportDrift`] on the
    /// first value outside the support.
    pub fn encode(&self, xs: &[f64]) -> Result<Vec<Label>> {
        xs.iter()
            .enumerate()
            .map(|(index, &value)| self.label_of(value).ok_or(Error::SupportDrift { index, value }))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
pub struct LabeledTree {
    n_labels: usize,
    parent: Vec<u32>,
    label: Vec<Label>,
    depth: Vec<u32>,
    children: Vec<u32>,
}

impl LabeledTree {
    pub fn new(root_label: Label, n_labels: usize) -> Self {
        assert!(usize::from(root_label) < n_labels, "root label out of range");
        Self {
            n_labels,
            parent: vec![NONE],
            label: vec![root_label],
            depth: vec![0],
            children: vec![NONE; n_labels],
        }
    }

    pub fn root(&self) -> VertexId {
        VertexId(0)
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    /// Number of materialized vertices.
    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, v: VertexId) -> Label {
        self.label[v.index()]
    }

    pub fn depth(&self, v: VertexId) -> usize {
        self.depth[v.index()] as usize
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        match self.parent[v.index()] {
            NONE => None,
            p => Some(VertexId(p)),
        }
    }

    fn parent_label(&self, v: VertexId) -> Option<Label> {
        self.parent(v).map(|p| self.label(p))
    }

    /// The neighbor of `v` labeled `label`, if it is already materialized.
    pub fn find_neighbor(&self, v: VertexId, label: Label) -> Option<VertexId> {
        if self.parent_label(v) == Some(label) {
            return self.parent(v);
        }
        match self.children[v.index() * self.n_labels + usize::from(label)] {
            NONE => None,
            c => Some(VertexId(c)),
        }
    }

    /// The unique neighbor of `v` labeled `label`, created if needed.
    #[inline]
    pub fn neighbor(&mut self, v: VertexId, label: Label) -> VertexId {
        if self.parent_label(v) == Some(label) {
            return VertexId(self.parent[v.index()]);
        }
        self.child_unchecked(v, label)
    }

    /// The child of `v` labeled `label`. `None` when that label belongs to
    /// the parent.
    pub fn child(&mut self, v: VertexId, label: Label) -> Option<VertexId> {
        if self.parent_label(v) == Some(label) {
            return None;
        }
        Some(self.child_unchecked(v, label))
    }

    fn child_unchecked(&mut self, v: VertexId, label: Label) -> VertexId {
        let slot = v.index() * self.n_labels + usize::from(label);
        let existing = self.children[slot];
        if existing != NONE {
            return VertexId(existing);
        }
        let id = self.label.len() as u32;
        self.parent.push(v.0);
        self.label.push(label);
        self.depth.push(self.depth[v.index()] + 1);
        self.children.extend(std::iter::repeat(NONE).take(self.n_labels));
        self.children[slot] = id;
        VertexId(id)
    }

    /// Labels along the path from the root (exclusive) to `v`.
    pub fn label_path(&self, v: VertexId) -> Vec<Label> {
        let mut path = Vec::with_capacity(self.depth(v));
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            path.push(self.label(cur));
            cur = p;
        }
        path.reverse();
        path
    }

    /// Graph distance between two vertices.
    pub fn distance(&self, a: VertexId, b: VertexId) -> usize {
        let (mut a, mut b) = (a, b);
        let mut d = 0;
        while self.depth(a) > self.depth(b) {
            a = self.parent(a).unwrap();
            d += 1;
        }
        while self.depth(b) > self.depth(a) {
            b = self.parent(b).unwrap();
            d += 1;
        }
        while a != b {
            a = self.parent(a).unwrap();
            b = self.parent(b).unwrap();
            d += 2;
        }
        d
    }

    /// Position on `Z` of a vertex of the two-label tree: the ray starting
    /// with the child that repeats the root label is the positive half-line.
    pub fn line_coordinate(&self, v: VertexId) -> i64 {
        assert_eq!(self.n_labels, 2, "line coordinates need exactly two labels");
        let depth = self.depth(v) as i64;
        if depth == 0 {
            return 0;
        }
        let mut cur = v;
        while self.depth(cur) > 1 {
            cur = self.parent(cur).unwrap();
        }
        if self.label(cur) == self.label(self.root()) {
            depth
        } else {
            -depth
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_label_tree_is_the_period_four_line() {
        // root labeled 0; walking the positive ray should read 0 0 1 1 0 0 1 1 ...
        let mut t = LabeledTree::new(0, 2);
        let mut v = t.root();
        let mut pos_labels = vec![t.label(v)];
        for step in 0..8 {
            // the next vertex on the ray is the child whose label is not the parent's
            let l = if step == 0 {
                0
            } else {
                let pl = t.label(t.parent(v).unwrap());
                (0..2).find(|&l| l != pl).unwrap()
            };
            v = t.child(v, l).unwrap();
            pos_labels.push(t.label(v));
            assert_eq!(t.line_coordinate(v), step + 1);
        }
        assert_eq!(pos_labels, vec![0, 0, 1, 1, 0, 0, 1, 1, 0]);

        let neg1 = t.neighbor(t.root(), 1);
        assert_eq!(t.line_coordinate(neg1), -1);
        let neg2 = t.neighbor(neg1, 1);
        let neg3 = t.neighbor(neg2, 0);
        let neg4 = t.neighbor(neg3, 0);
        assert_eq!(t.line_coordinate(neg4), -4);
        // phi(-1) = phi(3), phi(-4) = phi(0)
        assert_eq!(t.label(neg1), 1);
        assert_eq!(t.label(neg4), 0);
    }

    #[test]
    fn neighbor_rule_is_a_bijection_on_labels() {
        let mut t = LabeledTree::new(1, 3);
        let root = t.root();
        let a = t.neighbor(root, 0);
        let b = t.neighbor(a, 2);
        let mut seen = std::collections::HashSet::new();
        for l in 0..3 {
            let n = t.neighbor(b, l);
            assert_eq!(t.label(n), l);
            assert!(seen.insert(n));
        }
        assert_eq!(t.neighbor(b, 0), a);
        assert_eq!(t.child(b, 0), None);
        assert_eq!(t.label_path(b), vec![0, 2]);
        assert_eq!(t.distance(root, b), 2);
        let c = t.neighbor(b, 1);
        let d = t.neighbor(root, 2);
        assert_eq!(t.distance(c, d), 4);
    }

    #[test]
    fn labeling_rejects_unknown_values() {
        let lab = Labeling::new(&[0.3, 0.7]).unwrap();
        assert_eq!(lab.encode(&[0.3, 0.7, 0.3]).unwrap(), vec![0, 1, 0]);
        assert!(matches!(
            lab.encode(&[0.3, 0.5]),
            Err(Error::SupportDrift { index: 1, .. })
        ));
        assert!(Labeling::new(&[0.3, 0.3]).is_err());
    }
}
