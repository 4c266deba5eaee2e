//! Support scan of an observation stream.
//!
//! A non-atomic value sits at a single site, so it can only be observed at
//! times of one parity. A value is certified as an atom when it shows up at
//! two consecutive times, or more generally at two times an odd distance
//! apart. Everything else that was seen is treated as non-atomic.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::value_key;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertRule {
    /// `xi(k) = xi(k+1)`.
    Adjacent,
    /// Equal values an odd number of steps apart.
    OddLag,
}

/// The index pair proving that a value is an atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AtomCertificate {
    pub rule: CertRule,
    pub first: usize,
    pub second: usize,
}

#[derive(Clone, Debug)]
struct ValueRecord {
    value: f64,
    first_seen: usize,
    occurrences: Vec<u32>,
    certificate: Option<AtomCertificate>,
    adjacent: Option<AtomCertificate>,
    last_even: Option<usize>,
    last_odd: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SupportReport {
    len: usize,
    records: Vec<ValueRecord>,
    index: HashMap<u64, usize>,
    adjacent_only: bool,
}

impl SupportReport {
    /// Length of the scanned prefix.
    pub fn scanned(&self) -> usize {
        self.len
    }

    fn record(&self, value: f64) -> Option<&ValueRecord> {
        self.index.get(&value_key(value)).map(|&i| &self.records[i])
    }

    fn cert_of<'a>(&self, r: &'a ValueRecord) -> Option<&'a AtomCertificate> {
        if self.adjacent_only {
            r.adjacent.as_ref()
        } else {
            r.certificate.as_ref()
        }
    }

    /// Distinct values in order of first appearance.
    pub fn seen(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn atoms(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| self.cert_of(r).is_some())
            .map(|r| r.value)
            .collect()
    }

    pub fn non_atoms(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| self.cert_of(r).is_none())
            .map(|r| r.value)
            .collect()
    }

    pub fn contains(&self, value: f64) -> bool {
        self.record(value).is_some()
    }

    pub fn is_atom(&self, value: f64) -> bool {
        self.record(value).is_some_and(|r| self.cert_of(r).is_some())
    }

    /// Seen and not certified.
    pub fn is_non_atom(&self, value: f64) -> bool {
        self.record(value).is_some_and(|r| self.cert_of(r).is_none())
    }

    pub fn first_seen(&self, value: f64) -> Option<usize> {
        self.record(value).map(|r| r.first_seen)
    }

    pub fn occurrences(&self, value: f64) -> &[u32] {
        self.record(value).map_or(&[], |r| &r.occurrences)
    }

    pub fn count(&self, value: f64) -> usize {
        self.occurrences(value).len()
    }

    pub fn certificate(&self, value: f64) -> Option<AtomCertificate> {
        self.record(value).and_then(|r| self.cert_of(r).copied())
    }

    /// The same scan with only adjacent-equality certificates.
    pub fn adjacent_only(&self) -> SupportReport {
        SupportReport {
            adjacent_only: true,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Entry {
            value: f64,
            first_seen: usize,
            count: usize,
            atomic: bool,
            certificate: Option<AtomCertificate>,
        }
        #[derive(Serialize)]
        struct View {
            scanned: usize,
            n_seen: usize,
            n_atoms: usize,
            rule: &'static str,
            values: Vec<Entry>,
        }
        let values: Vec<Entry> = self
            .records
            .iter()
            .map(|r| Entry {
                value: r.value,
                first_seen: r.first_seen,
                count: r.occurrences.len(),
                atomic: self.cert_of(r).is_some(),
                certificate: self.cert_of(r).copied(),
            })
            .collect();
        let view = View {
            scanned: self.len,
            n_seen: values.len(),
            n_atoms: values.iter().filter(|e| e.atomic).count(),
            rule: if self.adjacent_only { "adjacent" } else { "odd_lag" },
            values,
        };
        serde_json::to_value(view).expect("plain data")
    }
}

/// One pass over `xs`, recording occurrences and the earliest certificate of
/// each value.
pub fn scan_support(xs: &[f64]) -> SupportReport {
    let mut records: Vec<ValueRecord> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut prev: Option<usize> = None;
    for (k, &x) in xs.iter().enumerate() {
        let i = *index.entry(value_key(x)).or_insert_with(|| {
            records.push(ValueRecord {
                value: x,
                first_seen: k,
                occurrences: Vec::new(),
                certificate: None,
                adjacent: None,
                last_even: None,
                last_odd: None,
            });
            records.len() - 1
        });
        let r = &mut records[i];
        r.occurrences.push(k as u32);
        if prev == Some(i) {
            let cert = AtomCertificate {
                rule: CertRule::Adjacent,
                first: k - 1,
                second: k,
            };
            r.adjacent.get_or_insert(cert);
            r.certificate.get_or_insert(cert);
        } else if r.certificate.is_none() {
            let other = if k % 2 == 0 { r.last_odd } else { r.last_even };
            if let Some(j) = other {
                r.certificate = Some(AtomCertificate {
                    rule: CertRule::OddLag,
                    first: j,
                    second: k,
                });
            }
        }
        if k % 2 == 0 {
            r.last_even = Some(k);
        } else {
            r.last_odd = Some(k);
        }
        prev = Some(i);
    }
    SupportReport {
        len: xs.len(),
        records,
        index,
        adjacent_only: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MarkerMode,
    AtomicMode,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::MarkerMode => "marker_mode",
            Mode::AtomicMode => "atomic_mode",
        })
    }
}

/// Marker mode iff some seen value is non-atomic.
pub fn mode_select(report: &SupportReport) -> Result<Mode> {
    let seen = report.seen();
    if seen.is_empty() {
        return Err(Error::Empty("support report"));
    }
    if seen.len() == 1 && report.is_atom(seen[0]) {
        return Err(Error::DeterministicEnvironment(seen[0]));
    }
    Ok(if report.non_atoms().is_empty() {
        Mode::AtomicMode
    } else {
        Mode::MarkerMode
    })
}

/// Mode chosen on the first `fraction` of the stream (at least one value).
pub fn mode_select_prefix(xs: &[f64], fraction: f64) -> Result<Mode> {
    if xs.is_empty() {
        return Err(Error::Empty("observation stream"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("prefix fraction {fraction} not in (0, 1]")));
    }
    let n = ((xs.len() as f64 * fraction).ceil() as usize).clamp(1, xs.len());
    mode_select(&scan_support(&xs[..n]))
}
