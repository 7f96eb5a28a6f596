//! The pose-predictor contract and its reference implementations.
//!
//! Selection only consumes the `(R, t)` a model predicts for a frame pair, so
//! anything that can answer [`PosePredictor::predict`] can drive it. The
//! bundled implementations are training-free:
//!
//! * [`IcpPredictor`] registers the clouds with point-to-plane ICP;
//! * [`OraclePredictor`] returns ground truth (test fixture);
//! * [`NoisyOracle`] returns ground truth with seeded rotation and
//!   translation noise.
//!
//! Predictions map source coordinates into target coordinates
//! (`Q_i → Q_{i+1}`).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::{compose, Pose, Rotation};
use crate::icp::{icp_point_to_plane, IcpParams};
use crate::seed::{derive_seed, hash_str};
use crate::sequence::SequenceRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("no ground truth for sequence {sequence} pair {frame}")]
    UnknownPair { sequence: String, frame: usize },
    #[error("predictor needs the pair identity but none was given")]
    MissingKey,
    #[error("prediction failed: {0}")]
    Failed(String),
    #[error("predictor {0} returned an invalid pose")]
    InvalidPose(String),
}

/// Identifies the pair `(frame, frame + 1)` of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairKey<'a> {
    pub sequence: &'a str,
    pub frame: usize,
}

/// One prediction request.
#[derive(Debug, Clone, Copy)]
pub struct PairQuery<'a> {
    pub source: &'a PointCloud,
    pub target: &'a PointCloud,
    pub key: Option<PairKey<'a>>,
    /// When the target is an augmented copy `Δ Q_{i+1}`, the augmentation
    /// index and `Δ`. Learned predictors ignore this; oracles use it to stay
    /// exact.
    pub augmentation: Option<(usize, Pose)>,
}

impl<'a> PairQuery<'a> {
    pub fn new(source: &'a PointCloud, target: &'a PointCloud) -> Self {
        Self {
            source,
            target,
            key: None,
            augmentation: None,
        }
    }

    pub fn with_key(mut self, sequence: &'a str, frame: usize) -> Self {
        self.key = Some(PairKey { sequence, frame });
        self
    }

    pub fn with_augmentation(mut self, index: usize, delta: Pose) -> Self {
        self.augmentation = Some((index, delta));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorInfo {
    pub name: String,
    pub deterministic: bool,
}

pub trait PosePredictor: Send + Sync {
    fn info(&self) -> PredictorInfo;
    fn predict(&self, query: &PairQuery<'_>) -> Result<Pose, PredictError>;
}

/// Calls `predictor` and rejects non-rigid output.
pub fn predict_checked(predictor: &dyn PosePredictor, query: &PairQuery<'_>) -> Result<Pose, PredictError> {
    let pose = predictor.predict(query)?;
    if !pose.is_valid() {
        return Err(PredictError::InvalidPose(predictor.info().name));
    }
    Ok(pose)
}

/// Ground-truth relative poses keyed by sequence id.
#[derive(Debug, Clone, Default)]
pub struct OraclePredictor {
    relative: BTreeMap<String, Vec<Pose>>,
}

impl OraclePredictor {
    /// Sequences without ground truth are skipped; queries against them fail
    /// with [`PredictError::UnknownPair`].
    pub fn from_sequences<'a>(sequences: impl IntoIterator<Item = &'a SequenceRecord>) -> Self {
        let mut relative = BTreeMap::new();
        for seq in sequences {
            let poses: Result<Vec<Pose>, _> = (0..seq.pair_count()).map(|i| seq.relative_pose(i)).collect();
            if let Ok(poses) = poses {
                relative.insert(seq.id.clone(), poses);
            }
        }
        Self { relative }
    }

    pub fn truth(&self, key: &PairKey<'_>) -> Result<Pose, PredictError> {
        self.relative
            .get(key.sequence)
            .and_then(|p| p.get(key.frame))
            .copied()
            .ok_or_else(|| PredictError::UnknownPair {
                sequence: key.sequence.to_string(),
                frame: key.frame,
            })
    }

    /// The exact answer for `query`, including any augmentation.
    fn exact(&self, query: &PairQuery<'_>) -> Result<Pose, PredictError> {
        let key = query.key.as_ref().ok_or(PredictError::MissingKey)?;
        let truth = self.truth(key)?;
        Ok(match query.augmentation {
            Some((_, delta)) => compose(&delta, &truth),
            None => truth,
        })
    }
}

impl PosePredictor for OraclePredictor {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "oracle".to_string(),
            deterministic: true,
        }
    }

    fn predict(&self, query: &PairQuery<'_>) -> Result<Pose, PredictError> {
        self.exact(query)
    }
}

pub fn oracle_predictor<'a>(sequences: impl IntoIterator<Item = &'a SequenceRecord>) -> OraclePredictor {
    OraclePredictor::from_sequences(sequences)
}

/// Ground truth perturbed by a random rotation (uniform axis, half-normal
/// angle with scale `sigma_rot`) applied on the left and Gaussian translation
/// noise with per-axis deviation `sigma_trans`. The noise for a query is a
/// function of `(seed, sequence, frame, augmentation index)` only.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    oracle: OraclePredictor,
    pub sigma_rot: f64,
    pub sigma_trans: f64,
    pub seed: u64,
}

impl NoisyOracle {
    pub fn new(oracle: OraclePredictor, sigma_rot: f64, sigma_trans: f64, seed: u64) -> Self {
        Self {
            oracle,
            sigma_rot,
            sigma_trans,
            seed,
        }
    }
}

pub fn noisy_oracle<'a>(
    sequences: impl IntoIterator<Item = &'a SequenceRecord>,
    sigma_rot: f64,
    sigma_trans: f64,
    seed: u64,
) -> NoisyOracle {
    NoisyOracle::new(OraclePredictor::from_sequences(sequences), sigma_rot, sigma_trans, seed)
}

/// Draws a rotation whose axis is uniform on the sphere and whose angle is
/// `|N(0, sigma)|`.
pub fn random_small_rotation<R: rand::Rng>(rng: &mut R, sigma: f64) -> Rotation {
    if !(sigma > 0.0) {
        return Rotation::identity();
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut axis = Vector3::zeros();
    while axis.norm() < 1e-12 {
        axis = Vector3::new(unit.sample(rng), unit.sample(rng), unit.sample(rng));
    }
    let angle = (unit.sample(rng) * sigma).abs();
    Rotation::from_axis_angle(&axis, angle)
}

impl PosePredictor for NoisyOracle {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: format!("noisy:{},{}", self.sigma_rot, self.sigma_trans),
            deterministic: true,
        }
    }

    fn predict(&self, query: &PairQuery<'_>) -> Result<Pose, PredictError> {
        let exact = self.oracle.exact(query)?;
        let key = query.key.as_ref().ok_or(PredictError::MissingKey)?;
        let aug = query.augmentation.map_or(0, |(i, _)| i as u64 + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[hash_str(key.sequence), key.frame as u64, aug]));
        let rot = random_small_rotation(&mut rng, self.sigma_rot);
        let mut t = exact.translation;
        if self.sigma_trans > 0.0 {
            let n = Normal::new(0.0, self.sigma_trans).expect("finite sigma");
            t += Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
        }
        Ok(Pose::new(rot * exact.rotation, t))
    }
}

/// Point-to-plane ICP from the identity, optionally on voxel-downsampled
/// clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpPredictor {
    pub params: IcpParams,
    pub voxel_size: Option<f64>,
}

impl Default for IcpPredictor {
    fn default() -> Self {
        Self {
            params: IcpParams::default(),
            voxel_size: Some(0.3),
        }
    }
}

impl PosePredictor for IcpPredictor {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "icp".to_string(),
            deterministic: true,
        }
    }

    fn predict(&self, query: &PairQuery<'_>) -> Result<Pose, PredictError> {
        let result = match self.voxel_size {
            Some(v) if v > 0.0 => icp_point_to_plane(
                &query.source.voxel_downsample(v),
                &query.target.voxel_downsample(v),
                &Pose::identity(),
                &self.params,
            ),
            _ => icp_point_to_plane(query.source, query.target, &Pose::identity(), &self.params),
        };
        result.map(|r| r.pose).map_err(|e| PredictError::Failed(e.to_string()))
    }
}

/// Predictor selection as written on the command line:
/// `icp`, `oracle`, or `noisy:<sigma_rot>,<sigma_trans>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorSpec {
    Icp,
    Oracle,
    Noisy { sigma_rot: f64, sigma_trans: f64 },
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorSpec::Icp => f.write_str("icp"),
            PredictorSpec::Oracle => f.write_str("oracle"),
            PredictorSpec::Noisy { sigma_rot, sigma_trans } => write!(f, "noisy:{sigma_rot},{sigma_trans}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown predictor {0:?}; expected icp, oracle or noisy:<sigma_rot>,<sigma_trans>")]
pub struct PredictorSpecError(pub String);

impl FromStr for PredictorSpec {
    type Err = PredictorSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PredictorSpecError(s.to_string());
        match s.trim() {
            "icp" => Ok(PredictorSpec::Icp),
            "oracle" => Ok(PredictorSpec::Oracle),
            other => {
                let rest = other.strip_prefix("noisy:").ok_or_else(bad)?;
                let (r, t) = rest.split_once(',').ok_or_else(bad)?;
                let sigma_rot: f64 = r.trim().parse().map_err(|_| bad())?;
                let sigma_trans: f64 = t.trim().parse().map_err(|_| bad())?;
                if !(sigma_rot >= 0.0 && sigma_trans >= 0.0) {
                    return Err(bad());
                }
                Ok(PredictorSpec::Noisy { sigma_rot, sigma_trans })
            }
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for PredictorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for PredictorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str> as serde::Deserialize>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{geodesic_distance, Translation};
    use crate::synth::{synth_sequence, Segment, SynthSpec};
    use alloc::vec;

    fn fixture() -> SequenceRecord {
        let spec = SynthSpec::new(vec![Segment::new(4.0, 4.0, 0.0), Segment::new(4.0, 4.0, 0.4)], 10.0);
        synth_sequence("fx", &spec, 2).unwrap()
    }

    #[test]
    fn oracle_is_exact() {
        let seq = fixture();
        let oracle = oracle_predictor([&seq]);
        let (a, b) = (seq.cloud(3).unwrap(), seq.cloud(4).unwrap());
        let q = PairQuery::new(&a, &b).with_key("fx", 3);
        let p = predict_checked(&oracle, &q).unwrap();
        let truth = seq.relative_pose(3).unwrap();
        assert_eq!(geodesic_distance(&p.rotation, &truth.rotation), 0.0);
        assert_eq!((p.translation - truth.translation).norm(), 0.0);

        let delta = Pose::new(Rotation::about_x(0.1), Translation::new(0.5, 0.0, 0.0));
        let p = oracle.predict(&q.with_augmentation(0, delta)).unwrap();
        assert_eq!(p, compose(&delta, &truth));
    }

    #[test]
    fn oracle_errors() {
        let seq = fixture();
        let oracle = oracle_predictor([&seq]);
        let c = seq.cloud(0).unwrap();
        assert_eq!(oracle.predict(&PairQuery::new(&c, &c)), Err(PredictError::MissingKey));
        assert!(matches!(
            oracle.predict(&PairQuery::new(&c, &c).with_key("nope", 0)),
            Err(PredictError::UnknownPair { .. })
        ));
        assert!(matches!(
            oracle.predict(&PairQuery::new(&c, &c).with_key("fx", 1000)),
            Err(PredictError::UnknownPair { .. })
        ));
    }

    #[test]
    fn zero_noise_matches_oracle() {
        let seq = fixture();
        let oracle = oracle_predictor([&seq]);
        let noisy = noisy_oracle([&seq], 0.0, 0.0, 5);
        let c = seq.cloud(0).unwrap();
        for i in 0..seq.pair_count() {
            let q = PairQuery::new(&c, &c).with_key("fx", i);
            assert_eq!(noisy.predict(&q).unwrap(), oracle.predict(&q).unwrap());
        }
    }

    #[test]
    fn noise_angle_is_half_normal() {
        // Angle of the left perturbation is |N(0, σ)|, whose mean is σ·sqrt(2/π).
        let seq = fixture();
        let sigma = 0.05;
        let oracle = oracle_predictor([&seq]);
        let c = seq.cloud(0).unwrap();
        let mut total = 0.0;
        let mut n = 0usize;
        for seed in 0..60u64 {
            let noisy = noisy_oracle([&seq], sigma, 0.0, seed);
            for i in 0..seq.pair_count() {
                let q = PairQuery::new(&c, &c).with_key("fx", i);
                let (p, t) = (noisy.predict(&q).unwrap(), oracle.predict(&q).unwrap());
                total += geodesic_distance(&p.rotation, &t.rotation);
                n += 1;
            }
        }
        assert!(n >= 1000);
        let expected = sigma * libm::sqrt(2.0 / core::f64::consts::PI);
        let mean = total / n as f64;
        assert!((mean - expected).abs() < 0.1 * expected, "{mean} vs {expected}");
    }

    #[test]
    fn noisy_is_deterministic_per_pair() {
        let seq = fixture();
        let noisy = noisy_oracle([&seq], 0.05, 0.1, 11);
        let c = seq.cloud(0).unwrap();
        let q = PairQuery::new(&c, &c).with_key("fx", 2);
        assert_eq!(noisy.predict(&q).unwrap(), noisy.predict(&q).unwrap());
        let d = Pose::identity();
        assert_ne!(
            noisy.predict(&q.with_augmentation(0, d)).unwrap(),
            noisy.predict(&q.with_augmentation(1, d)).unwrap()
        );
    }

    #[test]
    fn icp_predictor_tracks_ground_truth() {
        let seq = fixture();
        let icp = IcpPredictor {
            voxel_size: None,
            ..IcpPredictor::default()
        };
        let (a, b) = (seq.cloud(5).unwrap(), seq.cloud(6).unwrap());
        let p = predict_checked(&icp, &PairQuery::new(&a, &b)).unwrap();
        let truth = seq.relative_pose(5).unwrap();
        assert!(geodesic_distance(&p.rotation, &truth.rotation) < 1e-3);
        assert!((p.translation - truth.translation).norm() < 1e-3);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("icp".parse::<PredictorSpec>().unwrap(), PredictorSpec::Icp);
        assert_eq!("oracle".parse::<PredictorSpec>().unwrap(), PredictorSpec::Oracle);
        assert_eq!(
            "noisy:0.05,0.1".parse::<PredictorSpec>().unwrap(),
            PredictorSpec::Noisy {
                sigma_rot: 0.05,
                sigma_trans: 0.1
            }
        );
        for bad in ["", "noisy:", "noisy:1", "noisy:a,b", "noisy:-1,0", "gicp"] {
            assert!(bad.parse::<PredictorSpec>().is_err(), "{bad}");
        }
        let s = PredictorSpec::Noisy {
            sigma_rot: 0.01,
            sigma_trans: 0.02,
        };
        assert_eq!(s.to_string().parse::<PredictorSpec>().unwrap(), s);
    }
}
