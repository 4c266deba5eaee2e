use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use rwre_core::environment::ObservationSeq;
use rwre_core::estimator::estimate_weight;
use rwre_core::measure::{atomic_tv_distance, empirical_bl_distance, grid_cdf_distance, solomon_classify, SolomonVerdict};
use rwre_core::rng::derive_seed;
use rwre_core::{reconstruct, run_simulation, Mode, Reconstruction};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const OBSERVATIONS: &str = "observations.bin";
pub const MANIFEST: &str = "manifest.json";
pub const RECONSTRUCTION: &str = "reconstruction.json";
pub const CONVERGENCE: &str = "convergence.csv";
pub const TRAJECTORY: &str = "trajectory.bin";
pub const ENVIRONMENT: &str = "environment.json";
pub const EXPERIMENT: &str = "experiment.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub observations: String,
    pub observations_sha256: String,
    pub length: usize,
    pub ground_truth: Option<GroundTruthFiles>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundTruthFiles {
    pub trajectory: String,
    pub trajectory_sha256: String,
    pub environment: String,
    pub range: (i64, i64),
}

/// Simulates the configured run and writes the stream, the manifest and,
/// with `ground_truth`, the hidden trajectory and environment window.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let sim = run_simulation(&cfg.measure, cfg.seed, cfg.horizon, cfg.ground_truth)?;
    let out = cfg.prepare_out()?;
    let bytes = sim.observations.to_bytes();
    write_file(&out.join(OBSERVATIONS), &bytes)?;
    let ground_truth = match (&sim.trajectory, &sim.window) {
        (Some(traj), Some(window)) => {
            let mut tb = Vec::with_capacity(8 * traj.positions.len());
            for z in &traj.positions {
                tb.extend_from_slice(&z.to_le_bytes());
            }
            write_file(&out.join(TRAJECTORY), &tb)?;
            write_json(&out.join(ENVIRONMENT), window)?;
            Some(GroundTruthFiles {
                trajectory: TRAJECTORY.into(),
                trajectory_sha256: sha256_hex(&tb),
                environment: ENVIRONMENT.into(),
                range: traj.range(),
            })
        }
        _ => None,
    };
    let manifest = Manifest {
        config: cfg.clone(),
        observations: OBSERVATIONS.into(),
        observations_sha256: sha256_hex(&bytes),
        length: sim.observations.len(),
        ground_truth,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Checkpoints `1, 2, 4, ...` below `n`, then `n` itself.
pub fn checkpoints(n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k < n)
        .collect();
    if n > 0 {
        out.push(n);
    }
    out
}

/// Convergence table of a reconstruction. Atomic mode gives one row per atom
/// and indicator checkpoint; marker mode gives the grid distance of the
/// first `k` samples to `truth`.
pub fn convergence_csv(rec: &Reconstruction, truth: &rwre_core::MeasureSpec) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match rec.mode {
        Mode::AtomicMode => {
            w.write_record(["n_indicators", "eta", "partner", "p_hat", "lambda_hat", "stderr"])?;
            for atom in rec.atomic.iter().flat_map(|a| &a.atoms) {
                let ws = &atom.stream.indicators;
                let mut successes = 0usize;
                let cps = checkpoints(ws.len());
                let mut next = cps.iter().peekable();
                for (i, ind) in ws.iter().enumerate() {
                    successes += usize::from(ind.w);
                    if next.peek() == Some(&&(i + 1)) {
                        next.next();
                        let k = i + 1;
                        let e = estimate_weight(successes as f64 / k as f64, k, atom.eta);
                        w.serialize((k, atom.eta, atom.partner, e.p_hat, e.lambda_hat, e.stderr))?;
                    }
                }
            }
        }
        Mode::MarkerMode => {
            w.write_record(["n_samples", "grid_distance"])?;
            let values: Vec<f64> = rec.marker.iter().flat_map(|m| m.samples.iter().map(|s| s.value)).collect();
            for k in checkpoints(values.len()) {
                w.serialize((k, empirical_bl_distance(&values[..k], truth)?))?;
            }
        }
    }
    Ok(w.into_inner()?)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructReport {
    pub input: PathBuf,
    pub input_sha256: String,
    pub reconstruction: serde_json::Value,
}

/// Reads an observation file and writes the reconstruction and its
/// convergence table. Nothing is written when the file does not parse.
pub fn cmd_reconstruct(input: &Path, cfg: &RunConfig) -> Result<ReconstructReport> {
    cfg.validate()?;
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let xs = ObservationSeq::from_bytes(&bytes).with_context(|| format!("parsing {}", input.display()))?;
    let rec = reconstruct(&xs, cfg.reconstruct_options())?;
    let csv = convergence_csv(&rec, &cfg.measure)?;
    let report = ReconstructReport {
        input: input.to_path_buf(),
        input_sha256: sha256_hex(&bytes),
        reconstruction: rec.to_json(),
    };
    let out = cfg.prepare_out()?;
    write_json(&out.join(RECONSTRUCTION), &report)?;
    write_file(&out.join(CONVERGENCE), &csv)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicaResult {
    pub replica: usize,
    pub seed: u64,
    pub mode: Mode,
    pub metric: &'static str,
    pub distance: f64,
    pub verdict: SolomonVerdict,
    pub true_verdict: SolomonVerdict,
    pub verdict_agrees: bool,
    pub observations_sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub replicas: usize,
    pub mean_distance: f64,
    pub max_distance: f64,
    pub verdict_agreement: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: RunConfig,
    pub true_verdict: SolomonVerdict,
    pub replicas: Vec<ReplicaResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
}

/// Seed of replica `i`; a single replica runs on the config seed itself.
pub fn replica_seed(cfg: &RunConfig, i: usize) -> u64 {
    if cfg.replicas == 1 {
        cfg.seed
    } else {
        derive_seed(cfg.seed, "replica", i as u64)
    }
}

fn run_replica(cfg: &RunConfig, i: usize) -> Result<(ReplicaResult, serde_json::Value)> {
    let seed = replica_seed(cfg, i);
    let sim = run_simulation(&cfg.measure, seed, cfg.horizon, false)?;
    let rec = reconstruct(&sim.observations, cfg.reconstruct_options())?;
    let (metric, distance) = match atomic_tv_distance(&rec.measure, &cfg.measure) {
        Ok(tv) => ("atomic_tv", tv),
        Err(_) => ("grid_cdf", grid_cdf_distance(&rec.measure, &cfg.measure)),
    };
    let true_verdict = solomon_classify(&cfg.measure);
    let verdict = rec.diagnostics.solomon;
    Ok((
        ReplicaResult {
            replica: i,
            seed,
            mode: rec.mode,
            metric,
            distance,
            verdict,
            true_verdict,
            verdict_agrees: verdict == true_verdict,
            observations_sha256: sha256_hex(&sim.observations.to_bytes()),
        },
        rec.to_json(),
    ))
}

fn aggregate(results: &[ReplicaResult]) -> Aggregate {
    let n = results.len() as f64;
    Aggregate {
        replicas: results.len(),
        mean_distance: results.iter().map(|r| r.distance).sum::<f64>() / n,
        max_distance: results.iter().map(|r| r.distance).fold(0.0, f64::max),
        verdict_agreement: results.iter().filter(|r| r.verdict_agrees).count() as f64 / n,
    }
}

/// Simulate, reconstruct and compare, once per replica. Each replica writes
/// its own reconstruction; the merged report is written last.
pub fn cmd_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = cfg.prepare_out()?.to_path_buf();
    let mut results = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let (res, json) = run_replica(cfg, i)?;
            let dir = out.join(format!("replica-{i:03}"));
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write_json(&dir.join(RECONSTRUCTION), &json)?;
            Ok(res)
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| r.seed);
    let report = ExperimentReport {
        config: cfg.clone(),
        true_verdict: solomon_classify(&cfg.measure),
        aggregate: (cfg.replicas > 1).then(|| aggregate(&results)),
        replicas: results,
    };
    write_json(&out.join(EXPERIMENT), &report)?;
    Ok(report)
}
