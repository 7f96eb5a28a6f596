//! Run configuration, read from TOML or JSON (chosen by file extension).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use activelo_core::ais::LoopConfig;
use activelo_core::diversity::ItssConfig;
use activelo_core::predictor::PredictorSpec;
use activelo_core::trajgraph::SegmentParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::DEFAULT_CACHE_FRAMES;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Epochs {
    pub e_init: u64,
    pub e_round: u64,
    pub e_full: u64,
}

impl Default for Epochs {
    fn default() -> Self {
        Self {
            e_init: 15,
            e_round: 5,
            e_full: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub segment: SegmentParams,
    #[serde(default = "default_epsilon")]
    pub outlier_epsilon: f64,
    #[serde(default)]
    pub itss: ItssConfig,
    #[serde(default)]
    pub ais: LoopConfig,
    /// Initial set for `ais`; `run` uses the ITSS selection instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<String>>,
    #[serde(default = "default_predictor")]
    pub predictor: PredictorSpec,
    #[serde(default = "default_cache")]
    pub cache_frames: usize,
    #[serde(default)]
    pub epochs: Epochs,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

fn default_epsilon() -> f64 {
    0.3
}

fn default_predictor() -> PredictorSpec {
    PredictorSpec::Icp
}

fn default_cache() -> usize {
    DEFAULT_CACHE_FRAMES
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            manifest: manifest.into(),
            seed,
            segment: SegmentParams::default(),
            outlier_epsilon: default_epsilon(),
            itss: ItssConfig::default(),
            ais: LoopConfig::default(),
            initial: None,
            predictor: default_predictor(),
            cache_frames: default_cache(),
            epochs: Epochs::default(),
            output_dir: None,
            workers: None,
        }
    }

    /// Parses a config; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
        };
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = absolute(base, &cfg.manifest);
        if let Some(out) = &cfg.output_dir {
            cfg.output_dir = Some(absolute(base, out));
        }
        Ok(cfg)
    }

    /// The seed drives every stochastic component.
    pub fn apply_seed(&mut self) {
        self.ais.params.augmentation.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.itss.validate().map_err(|e| invalid(&e))?;
        self.ais.params.validate().map_err(|e| invalid(&e))?;
        if self.ais.h == 0 {
            return Err(ConfigError::Invalid("ais.h must be at least 1".into()));
        }
        if !(self.outlier_epsilon > 0.0) {
            return Err(ConfigError::Invalid("outlier_epsilon must be positive".into()));
        }
        if !(self.segment.window_s > 0.0 && self.segment.turn_threshold > 0.0) {
            return Err(ConfigError::Invalid("segment window and threshold must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical JSON form written into every artifact.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(toml::from_str::<RunConfig>("manifest = \"m.json\"\n").is_err());
        let cfg: RunConfig = toml::from_str("manifest = \"m.json\"\nseed = 3\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.ais.h, 5);
        assert_eq!(cfg.predictor, PredictorSpec::Icp);
    }

    #[test]
    fn nested_overrides_and_unknown_keys() {
        let text =
            "manifest = \"m.json\"\nseed = 1\npredictor = \"oracle\"\n[itss]\nu = 2\n[ais]\nh = 3\n[ais.params.augmentation]\nc = 4\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!((cfg.itss.u, cfg.ais.h, cfg.ais.params.augmentation.c), (2, 3, 4));
        assert_eq!(cfg.predictor, PredictorSpec::Oracle);
        assert!(toml::from_str::<RunConfig>("manifest = \"m\"\nseed = 1\nbogus = 2\n").is_err());
    }

    #[test]
    fn snapshot_omits_run_location() {
        let mut cfg = RunConfig::new("m.json", 9);
        cfg.output_dir = Some("out".into());
        cfg.workers = Some(2);
        let snap = cfg.snapshot();
        assert!(snap.get("output_dir").is_none());
        assert!(snap.get("workers").is_none());
        let back: RunConfig = serde_json::from_value(snap).unwrap();
        assert_eq!(back.seed, 9);
    }
}
