//! Point-to-plane ICP.
//!
//! Each iteration linearizes the residual `(R q + t − p) · n` around the
//! current estimate with a small-angle rotation and solves the 6×6 normal
//! equations. The update is applied on the left: `T ← exp(δ) ∘ T`.

use alloc::vec::Vec;

use nalgebra::{Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::{compose, Pose, Rotation};
use crate::nn::NnIndex;
use crate::normals::{estimate_normals_with_index, NormalField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IcpError {
    #[error("empty {0} cloud")]
    EmptyCloud(&'static str),
    #[error("only {0} usable correspondences; need at least 6")]
    TooFewCorrespondences(usize),
    #[error("normal equations are rank deficient (eigenvalue ratio {ratio:.3e}); the scene does not constrain all six degrees of freedom")]
    Degenerate { ratio: f64 },
    #[error("normal field does not match target cloud ({normals} normals, {points} points)")]
    NormalMismatch { normals: usize, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop once the update norm drops below this.
    pub tol: f64,
    /// Correspondences farther apart than this (meters) are rejected.
    pub max_correspondence: f64,
    pub k_neighbors: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol: 1e-6,
            max_correspondence: 1.0,
            k_neighbors: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: Pose,
    pub iterations: usize,
    /// Mean squared point-to-plane residual measured at each accepted
    /// iteration. Non-increasing.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

const RANK_RATIO: f64 = 1e-10;

pub fn icp_point_to_plane(source: &PointCloud, target: &PointCloud, init: &Pose, params: &IcpParams) -> Result<IcpResult, IcpError> {
    if source.is_empty() {
        return Err(IcpError::EmptyCloud("source"));
    }
    let index = NnIndex::build(&target.points).map_err(|_| IcpError::EmptyCloud("target"))?;
    let normals = estimate_normals_with_index(target, &index, params.k_neighbors);
    icp_with_normals(source, &index, &normals, init, params)
}

/// ICP against a prepared target (index and normals built once).
pub fn icp_with_normals(
    source: &PointCloud,
    target: &NnIndex,
    normals: &NormalField,
    init: &Pose,
    params: &IcpParams,
) -> Result<IcpResult, IcpError> {
    if source.is_empty() {
        return Err(IcpError::EmptyCloud("source"));
    }
    if normals.len() != target.len() {
        return Err(IcpError::NormalMismatch {
            normals: normals.len(),
            points: target.len(),
        });
    }
    let gate = params.max_correspondence;
    let mut pose = *init;
    let mut previous = *init;
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        let mut sq = 0.0;
        let mut count = 0usize;
        for q in &source.points {
            let s = pose.transform_point(q);
            let nb = target.nearest(&s);
            if nb.distance > gate {
                continue;
            }
            let Some(n) = normals.get(nb.index) else { continue };
            let r = (s - target.point(nb.index)).dot(n);
            let sxn = s.coords.cross(n);
            let j = Vector6::new(sxn.x, sxn.y, sxn.z, n.x, n.y, n.z);
            h += j * j.transpose();
            g += j * r;
            sq += r * r;
            count += 1;
        }
        if count < 6 {
            return Err(IcpError::TooFewCorrespondences(count));
        }
        let mse = sq / count as f64;
        if let Some(&last) = residuals.last() {
            if mse > last {
                // Stalled: keep the last estimate whose residual was measured.
                pose = previous;
                converged = true;
                break;
            }
        }
        residuals.push(mse);

        let eig = h.symmetric_eigen();
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if !(ratio > RANK_RATIO) {
            return Err(IcpError::Degenerate { ratio });
        }
        let Some(chol) = h.cholesky() else {
            return Err(IcpError::Degenerate { ratio });
        };
        let delta = -chol.solve(&g);

        let step = Pose::new(
            Rotation::exp(&Vector3::new(delta[0], delta[1], delta[2])),
            Vector3::new(delta[3], delta[4], delta[5]),
        );
        previous = pose;
        pose = compose(&step, &pose);
        iterations += 1;
        if delta.norm() < params.tol {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        pose: Pose::new(pose.rotation.renormalized(), pose.translation),
        iterations,
        residuals,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{geodesic_distance, invert, transform_cloud, EulerAngles, Translation};
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A room: floor, two walls along x, one along y, a ceiling and a box.
    fn room() -> PointCloud {
        let mut pts = Vec::new();
        let s = 0.4;
        for i in 0..50 {
            for j in 0..25 {
                let (a, b) = (-10.0 + i as f64 * s, -5.0 + j as f64 * s);
                pts.push(Point3::new(a, b, -1.8));
                pts.push(Point3::new(a, b, 3.0));
            }
        }
        for i in 0..50 {
            for k in 0..12 {
                let (a, c) = (-10.0 + i as f64 * s, -1.8 + k as f64 * s);
                pts.push(Point3::new(a, -5.2, c));
                pts.push(Point3::new(a, 5.2, c));
            }
        }
        for j in 0..25 {
            for k in 0..12 {
                pts.push(Point3::new(9.8, -5.0 + j as f64 * s, -1.8 + k as f64 * s));
            }
        }
        for j in 0..5 {
            for k in 0..5 {
                pts.push(Point3::new(3.0, 1.0 + j as f64 * s, -1.8 + k as f64 * s));
                pts.push(Point3::new(3.0 + j as f64 * s, 1.0, -1.8 + k as f64 * s));
            }
        }
        PointCloud::from_points(pts)
    }

    #[test]
    fn fixed_point_on_identical_clouds() {
        let c = room();
        let r = icp_point_to_plane(&c, &c, &Pose::identity(), &IcpParams::default()).unwrap();
        assert!(geodesic_distance(&r.pose.rotation, &Rotation::identity()) < 1e-6);
        assert!(r.pose.translation.norm() < 1e-6);
    }

    #[test]
    fn recovers_a_known_small_motion() {
        let source = room();
        let truth = Pose::new(
            Rotation::from_euler(&EulerAngles::new(0.01, -0.008, 0.03)),
            Translation::new(0.3, -0.1, 0.05),
        );
        let target = transform_cloud(&truth, &source);
        let r = icp_point_to_plane(&source, &target, &Pose::identity(), &IcpParams::default()).unwrap();
        assert!(r.converged);
        assert!(geodesic_distance(&r.pose.rotation, &truth.rotation) < 1e-3);
        assert!((r.pose.translation - truth.translation).norm() < 1e-3);
        for w in r.residuals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn equivariant_under_a_common_rigid_motion() {
        let source = room();
        let truth = Pose::new(Rotation::about_z(0.02), Translation::new(0.2, 0.1, 0.0));
        let target = transform_cloud(&truth, &source);
        let g = Pose::new(Rotation::about_z(0.01), Translation::new(0.05, -0.04, 0.02));
        let params = IcpParams::default();

        let plain = icp_point_to_plane(&source, &target, &Pose::identity(), &params).unwrap();
        let moved = icp_point_to_plane(
            &transform_cloud(&g, &source),
            &transform_cloud(&g, &target),
            &Pose::identity(),
            &params,
        )
        .unwrap();
        let expected = compose(&compose(&g, &plain.pose), &invert(&g));
        assert!(geodesic_distance(&moved.pose.rotation, &expected.rotation) < 1e-4);
        assert!((moved.pose.translation - expected.translation).norm() < 1e-4);
    }

    #[test]
    fn pure_clutter_fails_or_does_not_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut cloud = || {
            PointCloud::from_points(
                (0..300)
                    .map(|_| {
                        Point3::new(
                            rng.random_range(-40.0..40.0),
                            rng.random_range(-40.0..40.0),
                            rng.random_range(0.0..10.0),
                        )
                    })
                    .collect(),
            )
        };
        let (a, b) = (cloud(), cloud());
        match icp_point_to_plane(&a, &b, &Pose::identity(), &IcpParams::default()) {
            Err(_) => {}
            Ok(r) => assert!(!r.converged, "{r:?}"),
        }
    }

    #[test]
    fn single_plane_is_degenerate() {
        let pts: Vec<_> = (0..400)
            .map(|i| Point3::new((i % 20) as f64 * 0.3, (i / 20) as f64 * 0.3, -1.5))
            .collect();
        let c = PointCloud::from_points(pts);
        assert!(matches!(
            icp_point_to_plane(&c, &c, &Pose::identity(), &IcpParams::default()),
            Err(IcpError::Degenerate { .. })
        ));
    }
}
