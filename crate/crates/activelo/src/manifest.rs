//! Pool manifests.
//!
//! ```json
//! {
//!   "frame_rate": 10.0,
//!   "sequences": [
//!     { "id": "00", "poses": "poses/00.txt", "velodyne": "sequences/00/velodyne",
//!       "calib": "sequences/00/calib.txt" },
//!     { "id": "syn-a", "weather": "snowy", "seed": 7,
//!       "synthetic": { "segments": [{ "length": 40, "speed": 10 }], "clutter_fraction": 0.3 } }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. With `calib`, the
//! poses are read as camera poses and moved into the LiDAR frame using the
//! `Tr:` line of a KITTI calibration file.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use activelo_core::geom::{compose, invert, Pose};
use activelo_core::seed::hash_str;
use activelo_core::sequence::{FrameSource, SamplePool, SequenceError, SequenceRecord, Weather};
use activelo_core::synth::{synth_sequence, SynthError, SynthSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poses::{load_poses, PoseFileError};
use crate::velodyne::{VelodyneError, VelodyneFrames};

pub const DEFAULT_FRAME_RATE: f64 = 10.0;
pub const DEFAULT_CACHE_FRAMES: usize = 64;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("duplicate sequence id {0:?}")]
    DuplicateId(String),
    #[error("manifest lists no sequences")]
    Empty,
    #[error("sequence {id}: {message}")]
    Entry { id: String, message: String },
}

impl ManifestError {
    fn entry(id: &str, message: impl ToString) -> Self {
        ManifestError::Entry {
            id: id.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub frame_rate: Option<f64>,
    pub sequences: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weather: Option<Weather>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velodyne: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calib: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
    /// Seed for synthetic entries; defaults to a hash of the id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ManifestEntry {
    pub fn synthetic(id: impl Into<String>, spec: SynthSpec, seed: u64) -> Self {
        Self {
            id: id.into(),
            weather: None,
            frame_rate: None,
            poses: None,
            velodyne: None,
            calib: None,
            synthetic: Some(spec),
            seed: Some(seed),
        }
    }

    pub fn files(id: impl Into<String>, poses: impl Into<PathBuf>, velodyne: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            weather: None,
            frame_rate: None,
            poses: Some(poses.into()),
            velodyne: Some(velodyne.into()),
            calib: None,
            synthetic: None,
            seed: None,
        }
    }
}

/// A parsed manifest and the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub path: PathBuf,
    pub base: PathBuf,
    pub manifest: Manifest,
}

impl LoadedManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| ManifestError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self {
            path: path.to_path_buf(),
            base,
            manifest,
        };
        loaded.check_ids()?;
        Ok(loaded)
    }

    pub fn from_manifest(manifest: Manifest, base: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        let loaded = Self {
            path: PathBuf::new(),
            base: base.into(),
            manifest,
        };
        loaded.check_ids()?;
        Ok(loaded)
    }

    fn check_ids(&self) -> Result<(), ManifestError> {
        if self.manifest.sequences.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut seen = BTreeSet::new();
        for e in &self.manifest.sequences {
            if !seen.insert(e.id.as_str()) {
                return Err(ManifestError::DuplicateId(e.id.clone()));
            }
        }
        Ok(())
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Loads one entry.
    pub fn resolve_entry(&self, entry: &ManifestEntry, cache_frames: usize) -> Result<SequenceRecord, ManifestError> {
        let rate = entry.frame_rate.or(self.manifest.frame_rate);
        match (&entry.synthetic, &entry.poses) {
            (Some(spec), None) => {
                let mut spec = spec.clone();
                if let Some(r) = rate {
                    spec.frame_rate = r;
                }
                if let Some(w) = entry.weather {
                    spec.weather = w;
                }
                let seed = entry.seed.unwrap_or_else(|| hash_str(&entry.id));
                synth_sequence(entry.id.clone(), &spec, seed).map_err(|e: SynthError| ManifestError::entry(&entry.id, e))
            }
            (None, Some(poses)) => {
                let poses_path = self.resolve_path(poses);
                let mut poses = load_poses(&poses_path)
                    .map_err(|e: PoseFileError| ManifestError::entry(&entry.id, format!("{}: {e}", poses_path.display())))?;
                if let Some(calib) = &entry.calib {
                    let tr = load_calibration(self.resolve_path(calib)).map_err(|e| ManifestError::entry(&entry.id, e))?;
                    poses = camera_to_lidar(&poses, &tr);
                }
                let clouds: Option<Arc<dyn FrameSource>> = match &entry.velodyne {
                    Some(dir) => {
                        let frames = VelodyneFrames::open(self.resolve_path(dir), cache_frames)
                            .map_err(|e: VelodyneError| ManifestError::entry(&entry.id, e))?;
                        if frames.frame_count() != poses.len() {
                            return Err(ManifestError::entry(
                                &entry.id,
                                format!("{} poses but {} scans", poses.len(), frames.frame_count()),
                            ));
                        }
                        Some(Arc::new(frames))
                    }
                    None => None,
                };
                SequenceRecord::from_poses(
                    entry.id.clone(),
                    poses,
                    rate.unwrap_or(DEFAULT_FRAME_RATE),
                    entry.weather.unwrap_or_default(),
                    clouds,
                )
                .map_err(|e: SequenceError| ManifestError::entry(&entry.id, e))
            }
            (Some(_), Some(_)) => Err(ManifestError::entry(&entry.id, "give either poses or synthetic, not both")),
            (None, None) => Err(ManifestError::entry(&entry.id, "needs poses or a synthetic spec")),
        }
    }

    /// Loads every entry, collecting failures instead of stopping.
    pub fn resolve_all(&self, cache_frames: usize) -> (Vec<SequenceRecord>, Vec<ManifestError>) {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for e in &self.manifest.sequences {
            match self.resolve_entry(e, cache_frames) {
                Ok(s) => ok.push(s),
                Err(err) => {
                    log::warn!("{err}");
                    failed.push(err);
                }
            }
        }
        (ok, failed)
    }

    /// Loads every entry; the first failure aborts.
    pub fn build_pool(&self, cache_frames: usize) -> Result<SamplePool, ManifestError> {
        let sequences = self
            .manifest
            .sequences
            .iter()
            .map(|e| self.resolve_entry(e, cache_frames))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SamplePool {
            sequences,
            manifest_path: self.path.display().to_string(),
        })
    }
}

/// Reads the `Tr:` (LiDAR → camera) line of a KITTI calibration file.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<Pose, String> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("Tr:") else { continue };
        let v: Vec<f64> = rest
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| format!("{}: line {}: bad number", path.display(), i + 1))?;
        let v: [f64; 12] = v
            .try_into()
            .map_err(|v: Vec<f64>| format!("{}: line {}: expected 12 values, found {}", path.display(), i + 1, v.len()))?;
        let pose = Pose::from_row_major_unchecked(&v);
        return Ok(Pose::new(pose.rotation.renormalized(), pose.translation));
    }
    Err(format!("{}: no Tr: line", path.display()))
}

/// Expresses camera poses in the LiDAR frame: `Tr⁻¹ ∘ P ∘ Tr`.
pub fn camera_to_lidar(poses: &[Pose], tr: &Pose) -> Vec<Pose> {
    let tr_inv = invert(tr);
    poses.iter().map(|p| compose(&tr_inv, &compose(p, tr))).collect()
}
