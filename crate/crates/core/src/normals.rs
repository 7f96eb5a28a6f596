//! Surface normals from local k-NN covariance.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::cloud::PointCloud;
use crate::nn::NnIndex;

/// A neighbourhood whose middle eigenvalue is below this fraction of the
/// largest is treated as a line, not a surface.
const PLANARITY_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub normals: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

impl NormalField {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Vector3<f64>> {
        if self.valid[i] {
            Some(&self.normals[i])
        } else {
            None
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

pub fn estimate_normals(cloud: &PointCloud, k_neighbors: usize) -> NormalField {
    match NnIndex::build(&cloud.points) {
        Ok(index) => estimate_normals_with_index(cloud, &index, k_neighbors),
        Err(_) => NormalField {
            normals: Vec::new(),
            valid: Vec::new(),
        },
    }
}

/// Smallest-eigenvalue eigenvector of each point's k-NN covariance, flipped to
/// face the sensor origin. Points whose neighbourhood is not surface-like are
/// masked invalid, as is every point when the cloud is smaller than `k`.
pub fn estimate_normals_with_index(cloud: &PointCloud, index: &NnIndex, k_neighbors: usize) -> NormalField {
    let n = cloud.len();
    let mut normals = vec![Vector3::zeros(); n];
    let mut valid = vec![false; n];
    if k_neighbors < 3 || n < k_neighbors {
        log::warn!("normal estimation: {n} points, k = {k_neighbors}; all normals masked");
        return NormalField { normals, valid };
    }

    for (i, p) in cloud.points.iter().enumerate() {
        let neighbors = index.k_nearest(p, k_neighbors);
        let mean: Vector3<f64> = neighbors.iter().map(|nb| index.point(nb.index).coords).sum::<Vector3<f64>>() / neighbors.len() as f64;
        let mut cov = Matrix3::zeros();
        for nb in &neighbors {
            let d = index.point(nb.index).coords - mean;
            cov += d * d.transpose();
        }
        cov /= neighbors.len() as f64;

        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
        if !(l2 > 0.0) || l1 < PLANARITY_RATIO * l2 {
            continue;
        }
        let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
        let norm = normal.norm();
        if !(norm > 0.0) {
            continue;
        }
        normal /= norm;
        if normal.dot(&(-p.coords)) < 0.0 {
            normal = -normal;
        }
        normals[i] = normal;
        valid[i] = true;
    }
    NormalField { normals, valid }
}
