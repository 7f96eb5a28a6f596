//! Velodyne scans stored as packed little-endian `f32` quadruples
//! `(x, y, z, reflectance)`, and a directory of them as a frame source.

use std::fmt;
use std::fs;
use std::io;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use activelo_core::sequence::{FrameSource, SequenceError};
use activelo_core::PointCloud;
use lru::LruCache;
use nalgebra::Point3;
use thiserror::Error;

const RECORD: usize = 16;

#[derive(Debug, Error)]
pub enum VelodyneError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{len} bytes is not a whole number of 16-byte points")]
    Truncated { len: usize },
    #[error("{0}: no .bin scans found")]
    EmptyDirectory(PathBuf),
}

/// A decoded scan and the number of non-finite points removed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: PointCloud,
    pub dropped: usize,
}

pub fn parse_bin(bytes: &[u8]) -> Result<Scan, VelodyneError> {
    if !bytes.len().is_multiple_of(RECORD) {
        return Err(VelodyneError::Truncated { len: bytes.len() });
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    let mut dropped = 0;
    for rec in bytes.chunks_exact(RECORD) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4-byte field"));
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            dropped += 1;
            continue;
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        intensity.push(r);
    }
    let mut cloud = PointCloud::from_points(points);
    cloud.intensity = Some(intensity);
    Ok(Scan { cloud, dropped })
}

pub fn load_bin(path: impl AsRef<Path>) -> Result<Scan, VelodyneError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| VelodyneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.is_empty() {
        log::warn!("{}: empty scan", path.display());
    }
    let scan = parse_bin(&bytes)?;
    if scan.dropped > 0 {
        log::warn!("{}: dropped {} non-finite points", path.display(), scan.dropped);
    }
    Ok(scan)
}

/// Encodes a cloud; missing intensity is written as zero.
pub fn encode_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for (i, p) in cloud.points.iter().enumerate() {
        let r = cloud.intensity.as_ref().and_then(|v| v.get(i)).copied().unwrap_or(0.0);
        for v in [p.x as f32, p.y as f32, p.z as f32, r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), VelodyneError> {
    let path = path.as_ref();
    fs::write(path, encode_bin(cloud)).map_err(|source| VelodyneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Sorted `*.bin` files of a directory.
pub fn list_scans(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, VelodyneError> {
    let dir = dir.as_ref();
    let io_err = |source| VelodyneError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().is_some_and(|e| e == "bin") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(VelodyneError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(files)
}

/// Scans loaded on demand and kept in a bounded LRU cache.
pub struct VelodyneFrames {
    files: Vec<PathBuf>,
    cache: Mutex<LruCache<usize, Arc<PointCloud>>>,
}

impl VelodyneFrames {
    pub fn new(files: Vec<PathBuf>, capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            files,
            cache: Mutex::new(LruCache::new(capacity)),
        }
    }

    pub fn open(dir: impl AsRef<Path>, capacity: usize) -> Result<Self, VelodyneError> {
        Ok(Self::new(list_scans(dir)?, capacity))
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl fmt::Debug for VelodyneFrames {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VelodyneFrames")
            .field("frames", &self.files.len())
            .field("cached", &self.cached())
            .finish()
    }
}

impl FrameSource for VelodyneFrames {
    fn frame_count(&self) -> usize {
        self.files.len()
    }

    fn cloud(&self, frame: usize) -> Result<Arc<PointCloud>, SequenceError> {
        let path = self.files.get(frame).ok_or_else(|| SequenceError::Frame {
            frame,
            message: format!("out of range ({} scans)", self.files.len()),
        })?;
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&frame) {
            return Ok(hit.clone());
        }
        let scan = load_bin(path).map_err(|e| SequenceError::Frame {
            frame,
            message: e.to_string(),
        })?;
        let cloud = Arc::new(scan.cloud.with_frame_index(frame));
        self.cache.lock().expect("cache lock").put(frame, cloud.clone());
        Ok(cloud)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let mut cloud = PointCloud::from_points(vec![Point3::new(1.5, -2.25, 0.125), Point3::new(0.0, 3.0, -1.0)]);
        cloud.intensity = Some(vec![0.5, 0.25]);
        let scan = parse_bin(&encode_bin(&cloud)).unwrap();
        assert_eq!(scan.cloud.points, cloud.points);
        assert_eq!(scan.cloud.intensity, cloud.intensity);
        assert_eq!(scan.dropped, 0);
    }

    #[test]
    fn truncated_and_non_finite_records() {
        assert!(matches!(parse_bin(&[0u8; 20]), Err(VelodyneError::Truncated { len: 20 })));
        let mut bytes = Vec::new();
        for v in [f32::NAN, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let scan = parse_bin(&bytes).unwrap();
        assert_eq!(scan.dropped, 1);
        assert_eq!(scan.cloud.points, vec![Point3::new(1.0, 2.0, 3.0)]);
        assert!(parse_bin(&[]).unwrap().cloud.is_empty());
    }
}
