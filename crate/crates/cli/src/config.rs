use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rwre_core::estimator::ModeRequest;
use rwre_core::MeasureSpec;
use serde::{Deserialize, Serialize};

fn default_seed() -> u64 {
    1
}

fn default_horizon() -> usize {
    1_000_000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_replicas() -> usize {
    1
}

fn default_prefix_fraction() -> f64 {
    0.1
}

fn default_min_indicators() -> usize {
    100
}

fn default_tracked() -> usize {
    10
}

fn default_window() -> f64 {
    0.1
}

/// Everything a command needs. Only `measure` is required in the JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub measure: MeasureSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub mode: ModeRequest,
    #[serde(default)]
    pub ground_truth: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Verification checks to run; empty means all of them.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_prefix_fraction")]
    pub prefix_fraction: f64,
    #[serde(default = "default_min_indicators")]
    pub min_indicators: usize,
    #[serde(default = "default_tracked")]
    pub recurrence_tracked: usize,
    #[serde(default = "default_window")]
    pub recurrence_window: f64,
}

impl RunConfig {
    pub fn new(measure: MeasureSpec) -> Self {
        Self {
            measure,
            seed: default_seed(),
            horizon: default_horizon(),
            mode: ModeRequest::Auto,
            ground_truth: false,
            out: default_out(),
            checks: Vec::new(),
            replicas: default_replicas(),
            prefix_fraction: default_prefix_fraction(),
            min_indicators: default_min_indicators(),
            recurrence_tracked: default_tracked(),
            recurrence_window: default_window(),
        }
    }

    /// Reads and validates a JSON config. An invalid measure fails here.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            bail!("horizon must be at least 1");
        }
        if self.replicas < 1 {
            bail!("replicas must be at least 1");
        }
        if !(self.prefix_fraction > 0.0 && self.prefix_fraction <= 1.0) {
            bail!("prefix_fraction {} not in (0, 1]", self.prefix_fraction);
        }
        if self.recurrence_tracked < 1 {
            bail!("recurrence_tracked must be at least 1");
        }
        if !(self.recurrence_window > 0.0 && self.recurrence_window <= 1.0) {
            bail!("recurrence_window {} not in (0, 1]", self.recurrence_window);
        }
        Ok(())
    }

    pub fn reconstruct_options(&self) -> rwre_core::ReconstructOptions {
        rwre_core::ReconstructOptions {
            mode: self.mode,
            prefix_fraction: self.prefix_fraction,
            min_indicators: self.min_indicators,
            recurrence: rwre_core::marker::RecurrenceOptions {
                tracked: self.recurrence_tracked,
                window: self.recurrence_window,
            },
        }
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_out(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let probe = self.out.join(".write-test");
        fs::write(&probe, b"").with_context(|| format!("{} is not writable", self.out.display()))?;
        fs::remove_file(&probe).ok();
        Ok(&self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg: RunConfig = serde_json::from_str(r#"{"measure": {"atoms": [{"value": 0.3, "weight": 1.0}]}}"#).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.replicas, 1);
        assert_eq!(cfg.mode, ModeRequest::Auto);
        assert!(cfg.checks.is_empty());
    }

    #[test]
    fn bad_weights_fail_to_parse() {
        let r: std::result::Result<RunConfig, _> =
            serde_json::from_str(r#"{"measure": {"atoms": [{"value": 0.3, "weight": 0.9}]}}"#);
        assert!(r.is_err());
    }

    #[test]
    fn zero_replicas_rejected() {
        let mut cfg = RunConfig::new(MeasureSpec::dirac(0.4).unwrap());
        cfg.replicas = 0;
        assert!(cfg.validate().is_err());
    }
}
