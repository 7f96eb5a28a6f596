//! Active incremental selection.
//!
//! Every remaining sequence is scored by two label-free losses computed from a
//! pose predictor: the scene reconstruction loss (how badly the predicted pose
//! aligns consecutive frames, measured point-to-plane) and the prediction
//! inconsistency loss (how much the predictor's answer moves when the target
//! frame is rigidly perturbed and the perturbation is undone afterwards). The
//! highest-loss sequences are admitted each round.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::{geodesic_distance, mean_rotation, transform_cloud, EulerAngles, GeomError, Pose, Rotation};
use crate::nn::NnIndex;
use crate::normals::{estimate_normals_with_index, NormalField};
use crate::predictor::{predict_checked, PairQuery, PosePredictor, PredictError};
use crate::seed::{derive_seed, hash_str};
use crate::sequence::{SequenceError, SequenceRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AisError {
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
    #[error("the initial set is empty")]
    EmptyInitial,
    #[error("sequence {0} is not in the pool")]
    UnknownId(String),
    #[error("sequence {0} is listed twice")]
    DuplicateId(String),
    #[error("no correspondences within the {gate} m gate")]
    NoCorrespondences { gate: f64 },
    #[error("only {survivors} augmentations succeeded; need at least 2")]
    TooFewAugmentations { survivors: usize },
    #[error("sequence {id}: all {pairs} evaluated pairs failed (first: {first})")]
    AllPairsFailed { id: String, pairs: usize, first: String },
    #[error("training hook failed: {0}")]
    Training(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AugmentationConfig {
    /// Augmented copies per pair.
    pub c: usize,
    /// Perturbation scale relative to the expected pose.
    pub aug_alpha: f64,
    /// Minimum translation deviation (m).
    pub floor_trans: f64,
    /// Minimum rotation deviation (rad).
    pub floor_rot: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            c: 8,
            aug_alpha: 0.1,
            floor_trans: 0.02,
            floor_rot: 0.005,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<(), AisError> {
        if self.c < 2 {
            return Err(AisError::BadConfig("augmentation count c must be at least 2"));
        }
        if !(self.aug_alpha > 0.0 && self.aug_alpha <= 1.0) {
            return Err(AisError::BadConfig("aug_alpha must lie in (0, 1]"));
        }
        if !(self.floor_trans >= 0.0 && self.floor_trans.is_finite() && self.floor_rot >= 0.0 && self.floor_rot.is_finite()) {
            return Err(AisError::BadConfig("augmentation floors must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Per-axis standard deviations `(x, y, z, roll, pitch, yaw)` used to perturb
/// a pair whose expected motion is `expected`.
pub fn augmentation_std(expected: &Pose, cfg: &AugmentationConfig) -> [f64; 6] {
    let t = expected.translation;
    let e = expected.rotation.to_euler();
    let trans = |v: f64| (cfg.aug_alpha * v.abs()).max(cfg.floor_trans);
    let rot = |v: f64| (cfg.aug_alpha * v.abs()).max(cfg.floor_rot);
    [trans(t.x), trans(t.y), trans(t.z), rot(e.roll), rot(e.pitch), rot(e.yaw)]
}

/// `cfg.c` rigid perturbations drawn with `cfg.seed`.
pub fn sample_augmentations(expected: &Pose, cfg: &AugmentationConfig) -> Vec<Pose> {
    sample_augmentations_seeded(expected, cfg, cfg.seed)
}

/// As [`sample_augmentations`] with an explicit seed.
pub fn sample_augmentations_seeded(expected: &Pose, cfg: &AugmentationConfig, seed: u64) -> Vec<Pose> {
    let std = augmentation_std(expected, cfg);
    let axes: Vec<Normal<f64>> = std
        .iter()
        .map(|&s| Normal::new(0.0, s).expect("finite non-negative deviation"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.c)
        .map(|_| {
            let d: Vec<f64> = axes.iter().map(|n| n.sample(&mut rng)).collect();
            Pose::new(
                Rotation::from_euler(&EulerAngles::new(d[3], d[4], d[5])),
                Vector3::new(d[0], d[1], d[2]),
            )
        })
        .collect()
}

/// Undoes an augmentation: `R̂ = Δ_R⁻¹ R`, `t̂ = Δ_R⁻¹ (t − Δ_t)`.
pub fn recover_pose(predicted: &Pose, delta: &Pose) -> Pose {
    let inv = delta.rotation.inverse();
    Pose::new(inv * predicted.rotation, inv.rotate(&(predicted.translation - delta.translation)))
}

/// Mean squared distance from the arithmetic mean (m²).
pub fn translation_variance(ts: &[Vector3<f64>]) -> f64 {
    if ts.is_empty() {
        return 0.0;
    }
    let n = ts.len() as f64;
    let mean = ts.iter().sum::<Vector3<f64>>() / n;
    ts.iter().map(|t| (t - mean).norm_squared()).sum::<f64>() / n
}

/// Mean squared geodesic distance from the mean rotation (rad²).
pub fn rotation_variance(rs: &[Rotation]) -> Result<f64, AisError> {
    let mean = mean_rotation(rs)?.rotation;
    let n = rs.len() as f64;
    Ok(rs
        .iter()
        .map(|r| {
            let d = geodesic_distance(r, &mean);
            d * d
        })
        .sum::<f64>()
        / n)
}

/// A target cloud with its search index and normals.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub index: NnIndex,
    pub normals: NormalField,
}

impl PreparedTarget {
    pub fn new(cloud: &PointCloud, k_neighbors: usize) -> Result<Self, AisError> {
        let index = NnIndex::build(&cloud.points).map_err(|_| AisError::NoCorrespondences { gate: 0.0 })?;
        let normals = estimate_normals_with_index(cloud, &index, k_neighbors);
        Ok(Self { index, normals })
    }
}

/// Mean absolute point-to-plane residual of `source` moved by `predicted`
/// against `target`, over correspondences within `gate` meters whose target
/// normal is valid.
pub fn scene_recon_loss(predicted: &Pose, source: &PointCloud, target: &PreparedTarget, gate: f64) -> Result<f64, AisError> {
    let (mut sum, mut count) = (0.0, 0usize);
    for q in &source.points {
        let s = predicted.transform_point(q);
        let nb = target.index.nearest(&s);
        if nb.distance > gate {
            continue;
        }
        let Some(n) = target.normals.get(nb.index) else { continue };
        sum += (s - target.index.point(nb.index)).dot(n).abs();
        count += 1;
    }
    if count == 0 {
        return Err(AisError::NoCorrespondences { gate });
    }
    Ok(sum / count as f64)
}

/// Identity of a pair, forwarded to predictors that need it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairId<'a> {
    pub sequence: &'a str,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inconsistency {
    /// `var(R̂) + var(t̂)`.
    pub value: f64,
    pub rotation_variance: f64,
    pub translation_variance: f64,
    pub recovered: Vec<Pose>,
    /// Augmentations whose prediction failed.
    pub dropped: usize,
}

/// Perturbs the target `c` times, predicts each augmented pair, undoes the
/// perturbation and measures the spread of the recovered poses.
pub fn prediction_inconsistency(
    predictor: &dyn PosePredictor,
    source: &PointCloud,
    target: &PointCloud,
    pair: Option<PairId<'_>>,
    expected: &Pose,
    cfg: &AugmentationConfig,
    seed: u64,
) -> Result<Inconsistency, AisError> {
    let deltas = sample_augmentations_seeded(expected, cfg, seed);
    let mut recovered = Vec::with_capacity(deltas.len());
    let mut dropped = 0;
    for (k, delta) in deltas.iter().enumerate() {
        let augmented = transform_cloud(delta, target);
        let mut query = PairQuery::new(source, &augmented).with_augmentation(k, *delta);
        if let Some(p) = pair {
            query = query.with_key(p.sequence, p.frame);
        }
        match predict_checked(predictor, &query) {
            Ok(pose) => recovered.push(recover_pose(&pose, delta)),
            Err(e) => {
                log::debug!("augmentation {k} dropped: {e}");
                dropped += 1;
            }
        }
    }
    if recovered.len() < 2 {
        return Err(AisError::TooFewAugmentations {
            survivors: recovered.len(),
        });
    }
    let rots: Vec<Rotation> = recovered.iter().map(|p| p.rotation).collect();
    let trans: Vec<Vector3<f64>> = recovered.iter().map(|p| p.translation).collect();
    let rv = rotation_variance(&rots)?;
    let tv = translation_variance(&trans);
    Ok(Inconsistency {
        value: rv + tv,
        rotation_variance: rv,
        translation_variance: tv,
        recovered,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AisParams {
    pub augmentation: AugmentationConfig,
    /// Correspondence gate for the reconstruction loss (m).
    pub srl_gate: f64,
    pub srl_weight: f64,
    pub pil_weight: f64,
    /// Min-max normalize both losses across the evaluated sequences before
    /// weighting.
    pub normalize: bool,
    /// Evaluate every `stride`-th pair.
    pub stride: usize,
    /// Voxel size for downsampling both frames; `None` keeps every point.
    pub voxel_size: Option<f64>,
    pub k_neighbors: usize,
}

impl Default for AisParams {
    fn default() -> Self {
        Self {
            augmentation: AugmentationConfig::default(),
            srl_gate: 1.0,
            srl_weight: 0.5,
            pil_weight: 0.5,
            normalize: true,
            stride: 1,
            voxel_size: Some(0.3),
            k_neighbors: 10,
        }
    }
}

impl AisParams {
    pub fn validate(&self) -> Result<(), AisError> {
        self.augmentation.validate()?;
        if !(self.srl_gate > 0.0) {
            return Err(AisError::BadConfig("srl_gate must be positive"));
        }
        if !(self.srl_weight >= 0.0 && self.pil_weight >= 0.0 && self.srl_weight.is_finite() && self.pil_weight.is_finite()) {
            return Err(AisError::BadConfig("loss weights must be finite and non-negative"));
        }
        if self.stride == 0 {
            return Err(AisError::BadConfig("stride must be at least 1"));
        }
        if self.k_neighbors < 3 {
            return Err(AisError::BadConfig("k_neighbors must be at least 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairMetrics {
    pub frame: usize,
    pub f_recon: f64,
    pub f_incon: f64,
    pub dropped_augmentations: usize,
}

/// Both losses for the pair `(frame, frame + 1)` of `seq`.
pub fn pair_metrics(
    predictor: &dyn PosePredictor,
    seq: &SequenceRecord,
    frame: usize,
    params: &AisParams,
) -> Result<PairMetrics, AisError> {
    let load = |f: usize| -> Result<PointCloud, AisError> {
        let cloud = seq.cloud(f)?;
        Ok(match params.voxel_size {
            Some(v) if v > 0.0 => cloud.voxel_downsample(v),
            _ => (*cloud).clone(),
        })
    };
    let source = load(frame)?;
    let target = load(frame + 1)?;
    let prepared = PreparedTarget::new(&target, params.k_neighbors)?;
    let query = PairQuery::new(&source, &target).with_key(&seq.id, frame);
    let expected = predict_checked(predictor, &query)?;
    let f_recon = scene_recon_loss(&expected, &source, &prepared, params.srl_gate)?;
    let seed = derive_seed(params.augmentation.seed, &[hash_str(&seq.id), frame as u64]);
    let pair = Some(PairId { sequence: &seq.id, frame });
    let pil = prediction_inconsistency(predictor, &source, &target, pair, &expected, &params.augmentation, seed)?;
    Ok(PairMetrics {
        frame,
        f_recon,
        f_incon: pil.value,
        dropped_augmentations: pil.dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairFailure {
    pub frame: usize,
    pub error: String,
}

/// Raw per-sequence losses before weighting.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceEval {
    pub id: String,
    pub pairs: Vec<PairMetrics>,
    pub failures: Vec<PairFailure>,
}

impl SequenceEval {
    pub fn mean_srl(&self) -> f64 {
        self.pairs.iter().map(|p| p.f_recon).sum::<f64>() / self.pairs.len().max(1) as f64
    }

    pub fn mean_pil(&self) -> f64 {
        self.pairs.iter().map(|p| p.f_incon).sum::<f64>() / self.pairs.len().max(1) as f64
    }
}

/// Evaluates every `stride`-th consecutive pair of `seq`. Failing pairs are
/// recorded and skipped; the sequence fails only when none succeeds.
pub fn evaluate_sequence(predictor: &dyn PosePredictor, seq: &SequenceRecord, params: &AisParams) -> Result<SequenceEval, AisError> {
    params.validate()?;
    if seq.frame_count() < 2 {
        return Err(SequenceError::TooFewFrames {
            id: seq.id.clone(),
            frames: seq.frame_count(),
        }
        .into());
    }
    let frames: Vec<usize> = (0..seq.pair_count()).step_by(params.stride).collect();
    let eval = |&f: &usize| pair_metrics(predictor, seq, f, params);
    #[cfg(feature = "rayon")]
    let results: Vec<Result<PairMetrics, AisError>> = {
        use rayon::prelude::*;
        frames.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "rayon"))]
    let results: Vec<Result<PairMetrics, AisError>> = frames.iter().map(eval).collect();

    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (frame, r) in frames.iter().zip(results) {
        match r {
            Ok(m) => pairs.push(m),
            Err(e) => failures.push(PairFailure {
                frame: *frame,
                error: e.to_string(),
            }),
        }
    }
    if pairs.is_empty() {
        return Err(AisError::AllPairsFailed {
            id: seq.id.clone(),
            pairs: failures.len(),
            first: failures.first().map(|f| f.error.clone()).unwrap_or_default(),
        });
    }
    Ok(SequenceEval {
        id: seq.id.clone(),
        pairs,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceLossReport {
    pub id: String,
    pub mean_srl: f64,
    pub mean_pil: f64,
    /// Weighted loss `L` used for ranking.
    pub combined: f64,
    /// Pairs that contributed.
    pub pairs: usize,
    pub failed_pairs: usize,
}

/// `L = α_w · mean SRL + β_w · mean PIL`, each loss optionally min-max scaled
/// to [0, 1] across `evals` first (a constant loss scales to 0).
pub fn combine_losses(evals: &[SequenceEval], params: &AisParams) -> Vec<SequenceLossReport> {
    let srl: Vec<f64> = evals.iter().map(SequenceEval::mean_srl).collect();
    let pil: Vec<f64> = evals.iter().map(SequenceEval::mean_pil).collect();
    let (srl_n, pil_n) = if params.normalize {
        (min_max(&srl), min_max(&pil))
    } else {
        (srl.clone(), pil.clone())
    };
    evals
        .iter()
        .enumerate()
        .map(|(i, e)| SequenceLossReport {
            id: e.id.clone(),
            mean_srl: srl[i],
            mean_pil: pil[i],
            combined: params.srl_weight * srl_n[i] + params.pil_weight * pil_n[i],
            pairs: e.pairs.len(),
            failed_pairs: e.failures.len(),
        })
        .collect()
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values.iter().map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 }).collect()
}

/// Evaluates and weights a single sequence on its own (no normalization
/// across a pool).
pub fn sequence_loss(predictor: &dyn PosePredictor, seq: &SequenceRecord, params: &AisParams) -> Result<SequenceLossReport, AisError> {
    let eval = evaluate_sequence(predictor, seq, params)?;
    let raw = AisParams {
        normalize: false,
        ..*params
    };
    Ok(combine_losses(core::slice::from_ref(&eval), &raw).remove(0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Admission {
    pub id: String,
    /// 0 for the initial set.
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundReport {
    pub round: usize,
    /// Reports in ranking order (highest loss first).
    pub reports: Vec<SequenceLossReport>,
    /// Sequences that could not be evaluated; ranked after all others.
    pub failures: Vec<SequenceFailure>,
    pub admitted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionState {
    /// Admission order.
    pub selected: Vec<Admission>,
    /// Ascending by id.
    pub remaining: Vec<String>,
    pub itr: usize,
    pub rounds: Vec<RoundReport>,
    pub h: usize,
    pub iter: usize,
}

impl SelectionState {
    pub fn new(pool_ids: &[String], initial: &[String], h: usize, iter: usize) -> Result<Self, AisError> {
        if initial.is_empty() {
            return Err(AisError::EmptyInitial);
        }
        if h == 0 {
            return Err(AisError::BadConfig("h must be at least 1"));
        }
        let pool: BTreeSet<&str> = pool_ids.iter().map(String::as_str).collect();
        if pool.len() != pool_ids.len() {
            let mut seen = BTreeSet::new();
            let dup = pool_ids.iter().find(|id| !seen.insert(id.as_str())).expect("duplicate exists");
            return Err(AisError::DuplicateId(dup.clone()));
        }
        let mut chosen = BTreeSet::new();
        for id in initial {
            if !pool.contains(id.as_str()) {
                return Err(AisError::UnknownId(id.clone()));
            }
            if !chosen.insert(id.as_str()) {
                return Err(AisError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            selected: initial.iter().map(|id| Admission { id: id.clone(), round: 0 }).collect(),
            remaining: pool.iter().filter(|id| !chosen.contains(*id)).map(|s| s.to_string()).collect(),
            itr: 0,
            rounds: Vec::new(),
            h,
            iter,
        })
    }

    pub fn selected_ids(&self) -> Vec<&str> {
        self.selected.iter().map(|a| a.id.as_str()).collect()
    }
}

/// Ranks the remaining sequences by descending `L` (ties by ascending id,
/// unevaluated ones last) and admits the top `h`.
pub fn select_increment(state: &SelectionState, mut reports: Vec<SequenceLossReport>, failures: Vec<SequenceFailure>) -> SelectionState {
    reports.retain(|r| state.remaining.contains(&r.id));
    reports.sort_by(|a, b| {
        b.combined
            .partial_cmp(&a.combined)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    let ranked: BTreeSet<&str> = reports.iter().map(|r| r.id.as_str()).collect();
    let mut order: Vec<&str> = reports.iter().map(|r| r.id.as_str()).collect();
    order.extend(state.remaining.iter().map(String::as_str).filter(|id| !ranked.contains(id)));

    let take = state.h.min(order.len());
    let round = state.itr + 1;
    let admitted: Vec<String> = order[..take].iter().map(|s| s.to_string()).collect();
    let mut next = state.clone();
    next.itr = round;
    next.selected.extend(admitted.iter().map(|id| Admission { id: id.clone(), round }));
    next.remaining.retain(|id| !admitted.contains(id));
    next.rounds.push(RoundReport {
        round,
        reports,
        failures,
        admitted,
    });
    next
}

/// Supplies the predictor for each round. `train` is the training hook: it
/// sees the currently selected sequences before the remaining pool is scored.
pub trait PredictorFactory: Sync {
    fn train(&self, round: usize, selected: &[&SequenceRecord]) -> Result<Arc<dyn PosePredictor>, AisError>;
}

/// A predictor that does not learn; the training hook is a no-op.
pub struct TrainingFree(pub Arc<dyn PosePredictor>);

impl PredictorFactory for TrainingFree {
    fn train(&self, _round: usize, _selected: &[&SequenceRecord]) -> Result<Arc<dyn PosePredictor>, AisError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LoopConfig {
    /// Sequences admitted per round.
    pub h: usize,
    /// Maximum number of rounds.
    pub iter: usize,
    pub params: AisParams,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            h: 5,
            iter: 6,
            params: AisParams::default(),
        }
    }
}

/// Scores every remaining sequence with `predictor`.
pub fn score_remaining(
    predictor: &dyn PosePredictor,
    pool: &[SequenceRecord],
    remaining: &[String],
    params: &AisParams,
) -> (Vec<SequenceLossReport>, Vec<SequenceFailure>) {
    let seqs: Vec<&SequenceRecord> = remaining.iter().filter_map(|id| pool.iter().find(|s| &s.id == id)).collect();
    let eval = |s: &&SequenceRecord| evaluate_sequence(predictor, s, params);
    #[cfg(feature = "rayon")]
    let results: Vec<Result<SequenceEval, AisError>> = {
        use rayon::prelude::*;
        seqs.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "rayon"))]
    let results: Vec<Result<SequenceEval, AisError>> = seqs.iter().map(eval).collect();

    let mut evals = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in seqs.iter().zip(results) {
        match r {
            Ok(e) => evals.push(e),
            Err(e) => {
                log::warn!("sequence {}: {e}", s.id);
                failures.push(SequenceFailure {
                    id: s.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    (combine_losses(&evals, params), failures)
}

/// Runs up to `cfg.iter` rounds, stopping early once the pool is exhausted.
/// `history[0]` is the initial state and `history[k]` the state after round `k`.
pub fn run_active_loop(
    pool: &[SequenceRecord],
    initial: &[String],
    factory: &dyn PredictorFactory,
    cfg: &LoopConfig,
) -> Result<Vec<SelectionState>, AisError> {
    cfg.params.validate()?;
    let ids: Vec<String> = pool.iter().map(|s| s.id.clone()).collect();
    let mut state = SelectionState::new(&ids, initial, cfg.h, cfg.iter)?;
    let mut history = alloc::vec![state.clone()];
    while state.itr < cfg.iter && !state.remaining.is_empty() {
        let selected: Vec<&SequenceRecord> = state.selected.iter().filter_map(|a| pool.iter().find(|s| s.id == a.id)).collect();
        let predictor = factory.train(state.itr + 1, &selected)?;
        let (reports, failures) = score_remaining(predictor.as_ref(), pool, &state.remaining, &cfg.params);
        state = select_increment(&state, reports, failures);
        history.push(state.clone());
    }
    Ok(history)
}

/// Boxed closure adapter for [`PredictorFactory`].
pub struct FnFactory<F>(pub F);

impl<F> PredictorFactory for FnFactory<F>
where
    F: Fn(usize, &[&SequenceRecord]) -> Result<Arc<dyn PosePredictor>, AisError> + Sync,
{
    fn train(&self, round: usize, selected: &[&SequenceRecord]) -> Result<Arc<dyn PosePredictor>, AisError> {
        (self.0)(round, selected)
    }
}

/// Convenience for callers holding a boxed predictor.
pub fn training_free(predictor: Box<dyn PosePredictor>) -> TrainingFree {
    TrainingFree(Arc::from(predictor))
}
