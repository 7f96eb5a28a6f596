//! Per-frame point sets.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{Point3, Vector3};

/// One LiDAR sweep in its sensor frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// Reflectance in [0, 1], parallel to `points` when present.
    pub intensity: Option<Vec<f32>>,
    pub frame_index: usize,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            intensity: None,
            frame_index: 0,
        }
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the coordinate and intensity invariants.
    pub fn is_valid(&self) -> bool {
        let finite = self.points.iter().all(|p| p.iter().all(|v| v.is_finite()));
        let intensity_ok = self.intensity.as_ref().is_none_or(|i| i.len() == self.points.len());
        finite && intensity_ok
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        Some(Point3::from(sum / self.points.len() as f64))
    }

    /// Replaces all points falling in the same cubic voxel of side `size` by
    /// their centroid. Output is ordered by voxel key, so the result does not
    /// depend on input order.
    pub fn voxel_downsample(&self, size: f64) -> PointCloud {
        if !(size > 0.0) || self.points.is_empty() {
            return self.clone();
        }
        type Cell = (Vector3<f64>, f64, usize);
        let mut cells: BTreeMap<(i64, i64, i64), Cell> = BTreeMap::new();
        for (i, p) in self.points.iter().enumerate() {
            let key = (
                libm::floor(p.x / size) as i64,
                libm::floor(p.y / size) as i64,
                libm::floor(p.z / size) as i64,
            );
            let reflect = self.intensity.as_ref().map_or(0.0, |v| v[i] as f64);
            let cell = cells.entry(key).or_insert((Vector3::zeros(), 0.0, 0));
            cell.0 += p.coords;
            cell.1 += reflect;
            cell.2 += 1;
        }
        let mut points = Vec::with_capacity(cells.len());
        let mut intensity = Vec::with_capacity(cells.len());
        for (sum, reflect, n) in cells.values() {
            let n = *n as f64;
            points.push(Point3::from(sum / n));
            intensity.push((reflect / n) as f32);
        }
        PointCloud {
            points,
            intensity: self.intensity.as_ref().map(|_| intensity),
            frame_index: self.frame_index,
        }
    }
}
