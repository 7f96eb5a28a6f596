//! Sequences, sample pools and the frame-source abstraction that lets the
//! algorithms pull point clouds without knowing where they live.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::Vector3;
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::{compose, invert, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("sequence {id}: needs at least 2 frames, got {frames}")]
    TooFewFrames { id: String, frames: usize },
    #[error("sequence {id}: frame rate must be positive, got {rate}")]
    BadFrameRate { id: String, rate: f64 },
    #[error("sequence {id}: no ground-truth poses")]
    MissingPoses { id: String },
    #[error("sequence {id}: no point clouds attached")]
    MissingClouds { id: String },
    #[error("sequence {id}: frame {frame} out of range")]
    FrameOutOfRange { id: String, frame: usize },
    #[error("frame {frame}: {message}")]
    Frame { frame: usize, message: String },
    #[error("unknown weather tag {0:?}")]
    UnknownWeather(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Weather {
    #[default]
    General,
    Snowy,
}

impl Weather {
    pub fn as_str(&self) -> &'static str {
        match self {
            Weather::General => "general",
            Weather::Snowy => "snowy",
        }
    }
}

impl fmt::Display for Weather {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weather {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general" => Ok(Weather::General),
            "snowy" => Ok(Weather::Snowy),
            other => Err(SequenceError::UnknownWeather(other.to_string())),
        }
    }
}

/// Resolves a frame index to its point cloud. Implementations must be safe to
/// call from several workers at once.
pub trait FrameSource: Send + Sync + fmt::Debug {
    fn frame_count(&self) -> usize;
    fn cloud(&self, frame: usize) -> Result<Arc<PointCloud>, SequenceError>;
}

/// Clouds held in memory, as produced by the synthetic generator.
#[derive(Debug, Clone, Default)]
pub struct InMemoryFrames {
    frames: Vec<Arc<PointCloud>>,
}

impl InMemoryFrames {
    pub fn new(frames: Vec<PointCloud>) -> Self {
        Self {
            frames: frames.into_iter().map(Arc::new).collect(),
        }
    }
}

impl FrameSource for InMemoryFrames {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn cloud(&self, frame: usize) -> Result<Arc<PointCloud>, SequenceError> {
        self.frames.get(frame).cloned().ok_or(SequenceError::Frame {
            frame,
            message: "no such frame".to_string(),
        })
    }
}

/// One recorded drive.
#[derive(Debug, Clone)]
pub struct SequenceRecord {
    pub id: String,
    /// Trajectory with the first frame at the origin.
    pub positions: Vec<Vector3<f64>>,
    /// Absolute per-frame poses (sensor → world), translated so that the first
    /// frame sits at the origin.
    pub gt_poses: Option<Vec<Pose>>,
    pub clouds: Option<Arc<dyn FrameSource>>,
    /// Hz.
    pub frame_rate: f64,
    pub weather: Weather,
}

impl SequenceRecord {
    /// Builds a record from absolute poses, shifting them so the first frame is
    /// at the origin. Rotations are left untouched.
    pub fn from_poses(
        id: impl Into<String>,
        poses: Vec<Pose>,
        frame_rate: f64,
        weather: Weather,
        clouds: Option<Arc<dyn FrameSource>>,
    ) -> Result<Self, SequenceError> {
        let id = id.into();
        let origin = poses.first().map(|p| p.translation).unwrap_or_else(Vector3::zeros);
        let poses: Vec<Pose> = poses.into_iter().map(|p| Pose::new(p.rotation, p.translation - origin)).collect();
        let positions = poses.iter().map(|p| p.translation).collect();
        let seq = Self {
            id,
            positions,
            gt_poses: Some(poses),
            clouds,
            frame_rate,
            weather,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Builds a trajectory-only record.
    pub fn from_positions(
        id: impl Into<String>,
        positions: Vec<Vector3<f64>>,
        frame_rate: f64,
        weather: Weather,
    ) -> Result<Self, SequenceError> {
        let origin = positions.first().copied().unwrap_or_else(Vector3::zeros);
        let seq = Self {
            id: id.into(),
            positions: positions.into_iter().map(|p| p - origin).collect(),
            gt_poses: None,
            clouds: None,
            frame_rate,
            weather,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.positions.len() < 2 {
            return Err(SequenceError::TooFewFrames {
                id: self.id.clone(),
                frames: self.positions.len(),
            });
        }
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return Err(SequenceError::BadFrameRate {
                id: self.id.clone(),
                rate: self.frame_rate,
            });
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    /// Number of consecutive frame pairs.
    pub fn pair_count(&self) -> usize {
        self.frame_count().saturating_sub(1)
    }

    /// Ground-truth transform taking frame `i` coordinates into frame `i + 1`
    /// coordinates.
    pub fn relative_pose(&self, i: usize) -> Result<Pose, SequenceError> {
        let poses = self
            .gt_poses
            .as_ref()
            .ok_or_else(|| SequenceError::MissingPoses { id: self.id.clone() })?;
        let (a, b) = match (poses.get(i), poses.get(i + 1)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(SequenceError::FrameOutOfRange {
                    id: self.id.clone(),
                    frame: i,
                })
            }
        };
        Ok(compose(&invert(b), a))
    }

    pub fn cloud(&self, frame: usize) -> Result<Arc<PointCloud>, SequenceError> {
        let src = self
            .clouds
            .as_ref()
            .ok_or_else(|| SequenceError::MissingClouds { id: self.id.clone() })?;
        if frame >= src.frame_count() {
            return Err(SequenceError::FrameOutOfRange {
                id: self.id.clone(),
                frame,
            });
        }
        src.cloud(frame)
    }
}

/// The candidate sequences a selection draws from.
#[derive(Debug, Clone, Default)]
pub struct SamplePool {
    pub sequences: Vec<SequenceRecord>,
    pub manifest_path: String,
}

impl SamplePool {
    pub fn get(&self, id: &str) -> Option<&SequenceRecord> {
        self.sequences.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.sequences.iter().map(|s| s.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Sequences recorded in general weather.
    pub fn general(&self) -> impl Iterator<Item = &SequenceRecord> {
        self.sequences.iter().filter(|s| s.weather == Weather::General)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Rotation, Translation};
    use alloc::vec;

    #[test]
    fn origin_normalization_is_exact() {
        let poses = vec![
            Pose::new(Rotation::about_z(0.1), Translation::new(3.0, 4.0, 5.0)),
            Pose::new(Rotation::about_z(0.2), Translation::new(4.5, 4.0, 5.0)),
        ];
        let s = SequenceRecord::from_poses("a", poses, 10.0, Weather::General, None).unwrap();
        assert_eq!(s.positions[0], Vector3::zeros());
        for (p, q) in s.positions.iter().zip(s.gt_poses.as_ref().unwrap()) {
            assert_eq!(*p, q.translation);
        }
    }

    #[test]
    fn relative_pose_maps_frame_i_into_frame_i_plus_1() {
        let poses = vec![Pose::identity(), Pose::new(Rotation::about_z(0.5), Translation::new(1.0, 0.0, 0.0))];
        let s = SequenceRecord::from_poses("a", poses.clone(), 10.0, Weather::General, None).unwrap();
        let rel = s.relative_pose(0).unwrap();
        // A world point seen in frame 0 must land on the same world point seen from frame 1.
        let world = nalgebra::Point3::new(2.0, 3.0, 0.5);
        let in0 = poses[0].inverse().transform_point(&world);
        let in1 = poses[1].inverse().transform_point(&world);
        assert!((rel.transform_point(&in0) - in1).norm() < 1e-12);
        assert!(s.relative_pose(1).is_err());
    }

    #[test]
    fn rejects_short_or_bad_rate() {
        assert!(SequenceRecord::from_positions("a", vec![Vector3::zeros()], 10.0, Weather::General).is_err());
        assert!(SequenceRecord::from_positions("a", vec![Vector3::zeros(); 2], 0.0, Weather::General).is_err());
    }

    #[test]
    fn weather_parses() {
        assert_eq!("snowy".parse::<Weather>().unwrap(), Weather::Snowy);
        assert!("rainy".parse::<Weather>().is_err());
    }
}
