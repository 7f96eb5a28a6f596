//! Output files: the features table, JSON reports wrapped in a common
//! envelope, and a checksum manifest over everything written.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use activelo_core::trajgraph::SequenceFeatures;
use activelo_core::Weather;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOOL: &str = "activelo";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CHECKSUMS: &str = "checksums.sha256";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// One row of `features.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub weather: Weather,
    pub frames: usize,
    pub m: usize,
    pub theta_mean: f64,
    pub theta_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub outlier_proportion: f64,
    pub total_length: f64,
    pub turn_energy: f64,
}

impl FeatureRow {
    pub fn new(f: &SequenceFeatures, weather: Weather, frames: usize) -> Self {
        Self {
            id: f.id.clone(),
            weather,
            frames,
            m: f.m,
            theta_mean: f.theta_mean,
            theta_std: f.theta_std,
            speed_mean: f.speed_mean,
            speed_std: f.speed_std,
            length_mean: f.length_mean,
            length_std: f.length_std,
            outlier_proportion: f.outlier_proportion,
            total_length: f.total_length,
            turn_energy: f.turn_energy,
        }
    }

    /// Per-frame outliers are not stored in the table.
    pub fn features(&self) -> SequenceFeatures {
        SequenceFeatures {
            id: self.id.clone(),
            m: self.m,
            theta_mean: self.theta_mean,
            theta_std: self.theta_std,
            speed_mean: self.speed_mean,
            speed_std: self.speed_std,
            length_mean: self.length_mean,
            length_std: self.length_std,
            outlier_proportion: self.outlier_proportion,
            per_frame_outliers: Vec::new(),
            total_length: self.total_length,
            turn_energy: self.turn_energy,
        }
    }
}

pub fn features_csv(rows: &[FeatureRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "id",
            "weather",
            "frames",
            "m",
            "theta_mean",
            "theta_std",
            "speed_mean",
            "speed_std",
            "length_mean",
            "length_std",
            "outlier_proportion",
            "total_length",
            "turn_energy",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>, ArtifactError> {
    let path = path.as_ref();
    let csv_err = |source| ArtifactError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<FeatureRow>, _>>().map_err(csv_err)
}

/// Wrapper shared by every JSON artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool: String,
    pub version: String,
    pub artifact: String,
    pub config: serde_json::Value,
    pub data: T,
}

/// Writes into one output directory and remembers what it wrote.
#[derive(Debug)]
pub struct ArtifactDir {
    dir: PathBuf,
    config: serde_json::Value,
    written: BTreeSet<String>,
}

impl ArtifactDir {
    pub fn create(dir: impl Into<PathBuf>, config: serde_json::Value) -> Result<Self, ArtifactError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| ArtifactError::Io { path: dir.clone(), source })?;
        Ok(Self {
            dir,
            config,
            written: BTreeSet::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, ArtifactError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|source| ArtifactError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.insert(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, artifact: &str, data: &T) -> Result<PathBuf, ArtifactError> {
        let env = Envelope {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            artifact: artifact.to_string(),
            config: self.config.clone(),
            data,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|source| ArtifactError::Json {
            path: self.path(name),
            source,
        })?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_features(&mut self, name: &str, rows: &[FeatureRow]) -> Result<PathBuf, ArtifactError> {
        let bytes = features_csv(rows).map_err(|source| ArtifactError::Csv {
            path: self.path(name),
            source,
        })?;
        self.write_bytes(name, &bytes)
    }

    /// The config exactly as it can be fed back to `--config`.
    pub fn write_config(&mut self) -> Result<PathBuf, ArtifactError> {
        let mut text = serde_json::to_string_pretty(&self.config).expect("json value serializes");
        text.push('\n');
        self.write_bytes("config.json", text.as_bytes())?;
        self.write_bytes("version.txt", format!("{TOOL} {VERSION}\n").as_bytes())
    }

    /// `sha256  name` lines for every file written so far, sorted by name.
    pub fn write_checksums(&mut self) -> Result<PathBuf, ArtifactError> {
        let mut out = String::new();
        for name in self.written.iter().filter(|n| n.as_str() != CHECKSUMS) {
            let path = self.path(name);
            let bytes = fs::read(&path).map_err(|source| ArtifactError::Io { path, source })?;
            out.push_str(&format!("{}  {name}\n", hex(&Sha256::digest(&bytes))));
        }
        self.write_bytes(CHECKSUMS, out.as_bytes())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str) -> FeatureRow {
        FeatureRow {
            id: id.to_string(),
            weather: Weather::Snowy,
            frames: 11,
            m: 2,
            theta_mean: 0.1 + 0.2,
            theta_std: 1e-300,
            speed_mean: 10.0,
            speed_std: 0.0,
            length_mean: 50.0,
            length_std: 1.0 / 3.0,
            outlier_proportion: 0.25,
            total_length: 100.0,
            turn_energy: std::f64::consts::PI,
        }
    }

    #[test]
    fn features_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("a"), row("b,\"quoted\"")];
        let path = dir.path().join("f.csv");
        fs::write(&path, features_csv(&rows).unwrap()).unwrap();
        assert_eq!(read_features(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,weather,frames,m,"));
        assert!(text.contains("\"b,\"\"quoted\"\"\""));
    }

    #[test]
    fn empty_table_keeps_header() {
        let text = String::from_utf8(features_csv(&[]).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn checksums_cover_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ArtifactDir::create(dir.path(), serde_json::json!({"seed": 1})).unwrap();
        a.write_bytes("b.txt", b"b").unwrap();
        a.write_json("a.json", "test", &[1, 2]).unwrap();
        a.write_checksums().unwrap();
        let sums = fs::read_to_string(a.path(CHECKSUMS)).unwrap();
        let names: Vec<&str> = sums.lines().map(|l| l.split_once("  ").unwrap().1).collect();
        assert_eq!(names, ["a.json", "b.txt"]);
        assert!(sums.starts_with(&hex(&Sha256::digest(fs::read(a.path("a.json")).unwrap()))));
    }
}
