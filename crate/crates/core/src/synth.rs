//! Synthetic sequences with analytically known trajectory features.
//!
//! A trajectory is a chain of straight segments driven at constant speed with
//! instantaneous heading changes at the joints. The scene is a fixed world
//! made of a ground lattice and box-shaped structures set back from the path;
//! every frame observes the whole static world, so with exact ground-truth
//! poses each static point has an exact counterpart in the next frame.
//! Clutter ("snow") is resampled every frame inside a cylinder around the
//! sensor that never comes close to the static structure, which makes clutter
//! the only source of unmatched points.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use libm::{atan2, cos, floor, sin, sqrt};
use nalgebra::{Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::{Pose, Rotation, Translation};
use crate::seed::derive_seed;
use crate::sequence::{InMemoryFrames, SequenceRecord, Weather};

/// Sensor height above the ground plane.
pub const SENSOR_HEIGHT: f64 = 1.8;
/// Clutter stays within this horizontal radius of the sensor.
pub const CLUTTER_RADIUS: f64 = 10.0;
const CLUTTER_Z_MIN: f64 = -SENSOR_HEIGHT + 0.6;
const CLUTTER_Z_MAX: f64 = 7.5;
/// Box structures keep at least this horizontal clearance from every
/// trajectory position.
const STRUCTURE_CLEARANCE: f64 = CLUTTER_RADIUS + 1.5;
const STRUCTURE_OFFSET: f64 = 14.0;
const STRUCTURE_EVERY: f64 = 7.0;
const STRUCTURE_HEIGHT: f64 = 5.0;
const GROUND_MARGIN: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
}

/// One straight stretch. `turn` is the heading change (radians, positive to
/// the left) applied where this segment begins; on the first segment it sets
/// the initial heading.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub length: f64,
    pub speed: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub turn: f64,
}

impl Segment {
    pub fn new(length: f64, speed: f64, turn: f64) -> Self {
        Self { length, speed, turn }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SynthSpec {
    pub segments: Vec<Segment>,
    /// Hz.
    pub frame_rate: f64,
    /// Share of each frame's points that are per-frame random clutter.
    pub clutter_fraction: f64,
    /// Standard deviation of per-point Gaussian noise on static points (m).
    pub noise_sigma: f64,
    /// Lattice pitch of the static structure (m). Larger means sparser.
    pub structure_spacing: f64,
    pub weather: Weather,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            segments: Vec::new(),
            frame_rate: 10.0,
            clutter_fraction: 0.0,
            noise_sigma: 0.0,
            structure_spacing: 0.8,
            weather: Weather::General,
        }
    }
}

impl SynthSpec {
    pub fn new(segments: Vec<Segment>, frame_rate: f64) -> Self {
        Self {
            segments,
            frame_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.segments.is_empty() {
            return Err(SynthError::InvalidSpec("no segments"));
        }
        if self
            .segments
            .iter()
            .any(|s| !(s.length > 0.0) || !(s.speed > 0.0) || !s.turn.is_finite())
        {
            return Err(SynthError::InvalidSpec("segment lengths and speeds must be positive"));
        }
        if !(self.frame_rate > 0.0) {
            return Err(SynthError::InvalidSpec("frame rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.clutter_fraction) {
            return Err(SynthError::InvalidSpec("clutter fraction must be in [0, 1)"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SynthError::InvalidSpec("noise sigma must be non-negative"));
        }
        if !(self.structure_spacing > 0.0) {
            return Err(SynthError::InvalidSpec("structure spacing must be positive"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.length / s.speed).sum()
    }

    /// Frames sampled at `k / frame_rate` for every `k` whose time falls within
    /// the drive.
    pub fn frame_count(&self) -> usize {
        floor(self.duration() * self.frame_rate + 1e-9) as usize + 1
    }

    /// Times (s) at which each joint between consecutive segments is reached.
    pub fn joint_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for s in &self.segments[..self.segments.len().saturating_sub(1)] {
            t += s.length / s.speed;
            out.push(t);
        }
        out
    }
}

/// Planar pose of the vehicle at time `t`.
fn state_at(spec: &SynthSpec, t: f64) -> (Vector2<f64>, f64) {
    let mut pos = Vector2::zeros();
    let mut heading = 0.0;
    let mut elapsed = 0.0;
    let last = spec.segments.len() - 1;
    for (i, s) in spec.segments.iter().enumerate() {
        heading += s.turn;
        let dur = s.length / s.speed;
        let dir = Vector2::new(cos(heading), sin(heading));
        if t < elapsed + dur || i == last {
            let travelled = ((t - elapsed) * s.speed).clamp(0.0, s.length);
            return (pos + dir * travelled, heading);
        }
        pos += dir * s.length;
        elapsed += dur;
    }
    unreachable!("segments are non-empty")
}

pub fn synth_poses(spec: &SynthSpec) -> Vec<Pose> {
    (0..spec.frame_count())
        .map(|k| {
            let (p, heading) = state_at(spec, k as f64 / spec.frame_rate);
            Pose::new(Rotation::about_z(heading), Translation::new(p.x, p.y, 0.0))
        })
        .collect()
}

fn push_face(out: &mut Vec<Point3<f64>>, origin: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, (len_u, len_v): (f64, f64), spacing: f64) {
    let nu = floor(len_u / spacing) as usize + 1;
    let nv = floor(len_v / spacing) as usize + 1;
    for i in 0..nu {
        for j in 0..nv {
            out.push(Point3::from(origin + u * (i as f64 * spacing) + v * (j as f64 * spacing)));
        }
    }
}

fn horizontal_clearance(positions: &[Vector2<f64>], center: Vector2<f64>, half: f64) -> f64 {
    // Conservative: distance to the box's circumscribed circle.
    positions
        .iter()
        .map(|p| (p - center).norm() - half * core::f64::consts::SQRT_2)
        .fold(f64::INFINITY, f64::min)
}

/// Static world points for a trajectory.
pub fn build_world(spec: &SynthSpec, poses: &[Pose], seed: u64) -> Vec<Point3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5747]));
    let s = spec.structure_spacing;
    let positions: Vec<Vector2<f64>> = poses.iter().map(|p| Vector2::new(p.translation.x, p.translation.y)).collect();

    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for p in &positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    lo -= Vector2::repeat(GROUND_MARGIN);
    hi += Vector2::repeat(GROUND_MARGIN);

    let mut world = Vec::new();
    push_face(
        &mut world,
        Vector3::new(lo.x, lo.y, -SENSOR_HEIGHT),
        Vector3::x(),
        Vector3::y(),
        (hi.x - lo.x, hi.y - lo.y),
        s,
    );

    // Boxes on both sides of the path every few meters of travel.
    let mut next_at = 0.0;
    let mut travelled = 0.0;
    for k in 0..positions.len() {
        if k > 0 {
            travelled += (positions[k] - positions[k - 1]).norm();
        }
        if travelled + 1e-9 < next_at && k + 1 != positions.len() {
            continue;
        }
        next_at = travelled + STRUCTURE_EVERY;
        let heading = poses[k].rotation.to_euler().yaw;
        let left = Vector2::new(-sin(heading), cos(heading));
        for side in [-1.0, 1.0] {
            let half = rng.random_range(1.0..2.0);
            let yaw = heading + rng.random_range(-0.6..0.6);
            let center = positions[k] + left * (side * (STRUCTURE_OFFSET + half));
            if horizontal_clearance(&positions, center, half) < STRUCTURE_CLEARANCE {
                continue;
            }
            let (c, sn) = (cos(yaw), sin(yaw));
            let ax = Vector3::new(c, sn, 0.0);
            let ay = Vector3::new(-sn, c, 0.0);
            let base = Vector3::new(center.x, center.y, -SENSOR_HEIGHT + s);
            let height = STRUCTURE_HEIGHT - s;
            for (corner, dir) in [(-ax - ay, ax), (ax - ay, ay), (ax + ay, -ax), (-ax + ay, -ay)] {
                push_face(
                    &mut world,
                    base + corner * half,
                    dir,
                    Vector3::z(),
                    (2.0 * half - s * 0.5, height),
                    s,
                );
            }
        }
    }
    world
}

/// Generates a sequence and its point clouds. Deterministic in `(spec, seed)`.
pub fn synth_sequence(id: impl Into<String>, spec: &SynthSpec, seed: u64) -> Result<SequenceRecord, SynthError> {
    spec.validate()?;
    let poses = synth_poses(spec);
    let world = build_world(spec, &poses, seed);
    let clutter_per_frame = if spec.clutter_fraction > 0.0 {
        libm::round(world.len() as f64 * spec.clutter_fraction / (1.0 - spec.clutter_fraction)) as usize
    } else {
        0
    };
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");

    let frames: Vec<PointCloud> = poses
        .iter()
        .enumerate()
        .map(|(k, pose)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xF2A3, k as u64]));
            let to_sensor = pose.inverse();
            let mut points = Vec::with_capacity(world.len() + clutter_per_frame);
            let mut intensity = Vec::with_capacity(world.len() + clutter_per_frame);
            for w in &world {
                let mut q = to_sensor.transform_point(w);
                if spec.noise_sigma > 0.0 {
                    q += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                }
                points.push(q);
                intensity.push(0.6);
            }
            for _ in 0..clutter_per_frame {
                let r = CLUTTER_RADIUS * sqrt(rng.random_range(0.0..1.0));
                let a = rng.random_range(0.0..TAU);
                let z = rng.random_range(CLUTTER_Z_MIN..CLUTTER_Z_MAX);
                points.push(Point3::new(r * cos(a), r * sin(a), z));
                intensity.push(0.05);
            }
            PointCloud {
                points,
                intensity: Some(intensity),
                frame_index: k,
            }
        })
        .collect();

    let record = SequenceRecord::from_poses(
        id,
        poses,
        spec.frame_rate,
        spec.weather,
        Some(Arc::new(InMemoryFrames::new(frames))),
    )
    .map_err(|_| SynthError::InvalidSpec("sequence shorter than two frames"))?;
    Ok(record)
}

/// Planar heading of a segment chain after all its turns, for tests.
pub fn final_heading(spec: &SynthSpec) -> f64 {
    let h: f64 = spec.segments.iter().map(|s| s.turn).sum();
    atan2(sin(h), cos(h))
}
