//! Atom weights from straight-crossing frequencies, and the end-to-end
//! reconstruction of `mu` from an observation stream.
//!
//! For the pattern `(a, b, b, a)` the first confined crossing is straight
//! with probability `(1 - b(1 - b)) (1 - lambda_b^2)`, so the indicator mean
//! gives `lambda_b`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{mode_select, mode_select_prefix, scan_support, Mode, SupportReport};
use crate::decoder::{score_label_stream, LabelPair, WStream};
use crate::error::{Error, Result};
use crate::marker::{
    empirical_measure, extract_marker_samples, marker_recurrence_report, EmpiricalMeasure, MarkerSample,
    RecurrenceEvidence, RecurrenceOptions, RecurrenceReport,
};
use crate::measure::{classify_log_ratio, log_ratio, Atom, MeasureSpec, SolomonVerdict, SOLOMON_TOLERANCE};
use crate::tree::Labeling;
use crate::value_key;

/// `P(W = 1) = (1 - eta(1 - eta)) (1 - lambda^2)`.
pub fn straight_crossing_probability(lambda: f64, eta: f64) -> f64 {
    (1.0 - eta * (1.0 - eta)) * (1.0 - lambda * lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightEstimate {
    pub eta: f64,
    pub lambda_hat: f64,
    pub n_indicators: usize,
    pub p_hat: f64,
    pub stderr: f64,
    pub clamped: bool,
}

/// Inverts the straight-crossing probability, clamping `lambda^2` to
/// `[0, 1]`. The standard error is the binomial one pushed through the
/// inverse by the delta method.
pub fn estimate_weight(p_hat: f64, n: usize, eta: f64) -> WeightEstimate {
    let c = 1.0 - eta * (1.0 - eta);
    let sq = 1.0 - p_hat / c;
    let clamped = !(0.0..=1.0).contains(&sq);
    let lambda_hat = sq.clamp(0.0, 1.0).sqrt();
    let se_p = (p_hat * (1.0 - p_hat) / n.max(1) as f64).sqrt();
    let stderr = if lambda_hat > 0.0 {
        se_p / (2.0 * c * lambda_hat)
    } else {
        // the derivative blows up at zero; use the square-root scale instead
        (se_p / c).sqrt()
    };
    WeightEstimate {
        eta,
        lambda_hat,
        n_indicators: n,
        p_hat,
        stderr,
        clamped,
    }
}

#[derive(Clone, Debug)]
pub struct AtomEstimate {
    pub eta: f64,
    pub partner: f64,
    /// `None` when no indicator was scored.
    pub estimate: Option<WeightEstimate>,
    pub stream: WStream,
    pub low_confidence: bool,
}

impl AtomEstimate {
    /// Estimate from the indicators scored up to time `n`.
    pub fn estimate_at(&self, n: usize) -> Option<WeightEstimate> {
        let ws: Vec<bool> = self
            .stream
            .indicators
            .iter()
            .take_while(|w| w.time_found <= n)
            .map(|w| w.w)
            .collect();
        if ws.is_empty() {
            return None;
        }
        let p = ws.iter().filter(|&&w| w).count() as f64 / ws.len() as f64;
        Some(estimate_weight(p, ws.len(), self.eta))
    }
}

#[derive(Clone, Debug)]
pub struct AtomicReconstruction {
    pub atoms: Vec<AtomEstimate>,
    /// Final weights, aligned with `atoms`.
    pub weights: Vec<f64>,
    /// With two atoms, the atom whose estimate fixes both weights.
    pub pivot: Option<usize>,
    pub measure: MeasureSpec,
    pub solomon_integral: f64,
    pub solomon_stderr: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct AtomicOptions {
    pub min_indicators: usize,
}

impl Default for AtomicOptions {
    fn default() -> Self {
        Self { min_indicators: 100 }
    }
}

/// Final weights from per-atom estimates: with two atoms the more precise
/// estimate fixes the other as its complement; otherwise the present
/// estimates are renormalized.
fn combine(estimates: &[Option<WeightEstimate>]) -> Result<(Vec<f64>, Option<usize>, Vec<f64>)> {
    let se = |e: &WeightEstimate| e.stderr;
    if estimates.len() == 2 {
        let pivot = (0..2)
            .filter(|&i| estimates[i].is_some())
            .min_by(|&i, &j| se(estimates[i].as_ref().unwrap()).total_cmp(&se(estimates[j].as_ref().unwrap())))
            .ok_or_else(|| Error::NoData("no indicators scored for either atom".into()))?;
        let e = estimates[pivot].unwrap();
        let mut w = vec![0.0; 2];
        w[pivot] = e.lambda_hat;
        w[1 - pivot] = 1.0 - e.lambda_hat;
        let mut grad = vec![0.0; 2];
        grad[pivot] = e.stderr;
        grad[1 - pivot] = -e.stderr;
        return Ok((w, Some(pivot), grad));
    }
    let total: f64 = estimates.iter().flatten().map(|e| e.lambda_hat).sum();
    if !(total > 0.0) {
        return Err(Error::NoData("all estimated weights vanish".into()));
    }
    let w = estimates
        .iter()
        .map(|e| e.map_or(0.0, |e| e.lambda_hat / total))
        .collect();
    let grad = estimates.iter().map(|e| e.map_or(0.0, |e| e.stderr / total)).collect();
    Ok((w, None, grad))
}

/// One decoding pass per certified atom, each with the pattern
/// `(partner, atom, atom, partner)` where the partner is the most frequently
/// observed other atom.
pub fn reconstruct_atomic(xs: &[f64], report: &SupportReport, opts: AtomicOptions) -> Result<AtomicReconstruction> {
    let atoms = report.atoms();
    if atoms.len() < 2 {
        let seen = report.seen();
        return match seen.as_slice() {
            [v] => Err(Error::DeterministicEnvironment(*v)),
            _ => Err(Error::InsufficientData(format!("{} certified atoms, need 2", atoms.len()))),
        };
    }
    let labeling = Labeling::new(&report.seen())?;
    let labels = labeling.encode(xs)?;
    let label = |v: f64| labeling.label_of(v).expect("seen value");

    let atoms_out: Vec<AtomEstimate> = atoms
        .par_iter()
        .map(|&eta| {
            let partner = atoms
                .iter()
                .copied()
                .filter(|&a| value_key(a) != value_key(eta))
                .max_by_key(|&a| (report.count(a), std::cmp::Reverse(report.first_seen(a))))
                .expect("two atoms");
            let pair = LabelPair {
                outer: label(partner),
                inner: label(eta),
            };
            let (reg, _) = score_label_stream(&labels, labeling.len(), &[pair], false)?;
            let stream = WStream {
                indicators: reg.indicators().to_vec(),
            };
            let estimate = stream
                .mean()
                .map(|p| estimate_weight(p, stream.len(), eta));
            Ok(AtomEstimate {
                eta,
                partner,
                estimate,
                low_confidence: stream.len() < opts.min_indicators,
                stream,
            })
        })
        .collect::<Result<_>>()?;

    let estimates: Vec<Option<WeightEstimate>> = atoms_out.iter().map(|a| a.estimate).collect();
    let (weights, pivot, grad) = combine(&estimates)?;
    let logs: Vec<f64> = atoms_out.iter().map(|a| log_ratio(a.eta)).collect();
    let integral: f64 = weights.iter().zip(&logs).map(|(w, l)| w * l).sum();
    let var: f64 = match pivot {
        Some(p) => ((logs[p] - logs[1 - p]) * grad[p]).powi(2),
        None => grad.iter().zip(&logs).map(|(g, l)| ((l - integral) * g).powi(2)).sum(),
    };
    let measure = MeasureSpec::new(
        atoms_out
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(a, &w)| Atom { value: a.eta, weight: w })
            .collect(),
        Vec::new(),
    )?;
    Ok(AtomicReconstruction {
        atoms: atoms_out,
        weights,
        pivot,
        measure,
        solomon_integral: integral,
        solomon_stderr: var.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeRequest {
    #[default]
    Auto,
    Atomic,
    Marker,
}

impl std::str::FromStr for ModeRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "atomic" => Ok(Self::Atomic),
            "marker" => Ok(Self::Marker),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReconstructOptions {
    pub mode: ModeRequest,
    /// Fraction of the stream on which the mode is chosen.
    pub prefix_fraction: f64,
    pub min_indicators: usize,
    pub recurrence: RecurrenceOptions,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            mode: ModeRequest::Auto,
            prefix_fraction: 0.1,
            min_indicators: 100,
            recurrence: RecurrenceOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MarkerReconstruction {
    pub samples: Vec<MarkerSample>,
    pub empirical: EmpiricalMeasure,
    pub recurrence: RecurrenceReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct RawWeight {
    pub value: f64,
    pub raw: Option<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndicatorCount {
    pub value: f64,
    pub partner: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub indicator_counts: Vec<IndicatorCount>,
    /// Atoms whose squared weight estimate was clamped into `[0, 1]`.
    pub clamps: Vec<f64>,
    pub solomon: SolomonVerdict,
    pub solomon_integral: f64,
    pub solomon_stderr: f64,
    pub certified_atoms: usize,
    pub low_confidence: Vec<f64>,
    /// Atoms without any scored indicator.
    pub absent: Vec<f64>,
    pub marker_samples: Option<usize>,
    pub recurrence: Option<RecurrenceEvidence>,
    /// The prefix chose marker mode but the whole stream shows no
    /// non-atomic value.
    pub mode_revised: bool,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub mode: Mode,
    pub measure: MeasureSpec,
    pub raw_weights: Vec<RawWeight>,
    pub diagnostics: Diagnostics,
    pub support: SupportReport,
    pub atomic: Option<AtomicReconstruction>,
    pub marker: Option<MarkerReconstruction>,
}

impl Reconstruction {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode,
            "measure": self.measure,
            "raw_weights": self.raw_weights,
            "diagnostics": self.diagnostics,
        })
    }
}

/// Zero band of the Solomon verdict for an estimated integral.
pub fn verdict_tolerance(stderr: f64) -> f64 {
    SOLOMON_TOLERANCE.max(3.0 * stderr)
}

/// Support scan, mode choice, and dispatch to the marker or the atomic
/// estimator, with a recurrence verdict for the estimate.
pub fn reconstruct(xs: &[f64], opts: ReconstructOptions) -> Result<Reconstruction> {
    if xs.is_empty() {
        return Err(Error::Empty("observation stream"));
    }
    let support = scan_support(xs);
    mode_select(&support)?;
    let (mode, mode_revised) = match opts.mode {
        ModeRequest::Atomic => (Mode::AtomicMode, false),
        ModeRequest::Marker => (Mode::MarkerMode, false),
        ModeRequest::Auto => match mode_select_prefix(xs, opts.prefix_fraction)? {
            Mode::MarkerMode if support.non_atoms().is_empty() => (Mode::AtomicMode, true),
            m => (m, false),
        },
    };
    let certified_atoms = support.atoms().len();
    match mode {
        Mode::AtomicMode => {
            let rec = reconstruct_atomic(
                xs,
                &support,
                AtomicOptions {
                    min_indicators: opts.min_indicators,
                },
            )?;
            let tol = verdict_tolerance(rec.solomon_stderr);
            let diagnostics = Diagnostics {
                indicator_counts: rec
                    .atoms
                    .iter()
                    .map(|a| IndicatorCount {
                        value: a.eta,
                        partner: a.partner,
                        count: a.stream.len(),
                    })
                    .collect(),
                clamps: rec
                    .atoms
                    .iter()
                    .filter(|a| a.estimate.is_some_and(|e| e.clamped))
                    .map(|a| a.eta)
                    .collect(),
                solomon: classify_log_ratio(rec.solomon_integral, tol),
                solomon_integral: rec.solomon_integral,
                solomon_stderr: rec.solomon_stderr,
                certified_atoms,
                low_confidence: rec.atoms.iter().filter(|a| a.low_confidence).map(|a| a.eta).collect(),
                absent: rec.atoms.iter().filter(|a| a.estimate.is_none()).map(|a| a.eta).collect(),
                marker_samples: None,
                recurrence: None,
                mode_revised,
            };
            let raw_weights = rec
                .atoms
                .iter()
                .zip(&rec.weights)
                .map(|(a, &weight)| RawWeight {
                    value: a.eta,
                    raw: a.estimate.map(|e| e.lambda_hat),
                    weight,
                })
                .collect();
            Ok(Reconstruction {
                mode,
                measure: rec.measure.clone(),
                raw_weights,
                diagnostics,
                support,
                atomic: Some(rec),
                marker: None,
            })
        }
        Mode::MarkerMode => {
            let samples = extract_marker_samples(xs, &support);
            if samples.is_empty() {
                return Err(Error::NoData("no marker samples in the stream".into()));
            }
            let empirical = empirical_measure(&samples)?;
            let recurrence = marker_recurrence_report(xs, &samples, &support, opts.recurrence)?;
            let n = samples.len() as f64;
            let logs: Vec<f64> = samples.iter().map(|s| log_ratio(s.value)).collect();
            let mean = logs.iter().sum::<f64>() / n;
            let var = if samples.len() > 1 {
                logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let stderr = (var / n).sqrt();
            let measure = empirical.to_spec()?;
            let diagnostics = Diagnostics {
                indicator_counts: Vec::new(),
                clamps: Vec::new(),
                solomon: classify_log_ratio(mean, verdict_tolerance(stderr)),
                solomon_integral: mean,
                solomon_stderr: stderr,
                certified_atoms,
                low_confidence: Vec::new(),
                absent: Vec::new(),
                marker_samples: Some(samples.len()),
                recurrence: Some(recurrence.evidence),
                mode_revised,
            };
            let raw_weights = empirical
                .atoms
                .iter()
                .map(|a| RawWeight {
                    value: a.value,
                    raw: Some(a.weight),
                    weight: a.weight,
                })
                .collect();
            Ok(Reconstruction {
                mode,
                measure,
                raw_weights,
                diagnostics,
                support,
                atomic: None,
                marker: Some(MarkerReconstruction {
                    samples,
                    empirical,
                    recurrence,
                }),
            })
        }
    }
}
