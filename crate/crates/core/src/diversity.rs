//! Sequence scoring and the initial-set selection program.
//!
//! Each candidate receives a variability score (spread of its turn angles,
//! edge lengths and speeds) and an importance score (speed change through
//! turns plus its share of the pool's path length). The selection picks
//! exactly `u` sequences maximizing the summed scores, subject to covering
//! every non-empty outlier-proportion bin and mean-speed bin.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use libm::sqrt;
use thiserror::Error;

use crate::trajgraph::{turn_energy, SequenceFeatures, TrajectoryGraph};

/// Pools up to this size are solved exactly.
pub const EXACT_LIMIT: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiversityError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("invalid weights: {0}")]
    BadWeights(&'static str),
    #[error("invalid selection config: {0}")]
    BadConfig(&'static str),
    #[error("u = {u} cannot cover every bin; the smallest feasible u is {min_u} (pool of {n})")]
    Infeasible { u: usize, min_u: usize, n: usize },
    #[error("u = {u} exceeds the pool size {n}")]
    TooMany { u: usize, n: usize },
    #[error("sequence {0}: non-finite score")]
    NonFinite(String),
    #[error("pool path length must be positive, got {0}")]
    ZeroPoolLength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DiversityWeights {
    /// Angle-spread weight.
    pub lambda1: f64,
    /// Length-spread weight.
    pub lambda2: f64,
    /// Speed-spread weight.
    pub lambda3: f64,
    /// Turn-energy weight.
    pub lambda4: f64,
    /// Length-share weight.
    pub lambda5: f64,
}

impl Default for DiversityWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0 / 3.0,
            lambda2: 1.0 / 3.0,
            lambda3: 1.0 / 3.0,
            lambda4: 0.5,
            lambda5: 0.5,
        }
    }
}

impl DiversityWeights {
    pub fn validate(&self) -> Result<(), DiversityError> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(DiversityError::BadWeights("weights must be finite and non-negative"));
        }
        if !(self.lambda1 + self.lambda2 + self.lambda3 > 0.0) {
            return Err(DiversityError::BadWeights("variability weights sum to zero"));
        }
        if !(self.lambda4 + self.lambda5 > 0.0) {
            return Err(DiversityError::BadWeights("importance weights sum to zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ItssConfig {
    pub u: usize,
    pub bins_outlier: usize,
    pub bins_speed: usize,
    pub weights: DiversityWeights,
    /// Z-score the spread features across the pool before weighting.
    pub normalize: bool,
}

impl Default for ItssConfig {
    fn default() -> Self {
        Self {
            u: 4,
            bins_outlier: 3,
            bins_speed: 3,
            weights: DiversityWeights::default(),
            normalize: true,
        }
    }
}

impl ItssConfig {
    pub fn validate(&self) -> Result<(), DiversityError> {
        self.weights.validate()?;
        if self.u == 0 {
            return Err(DiversityError::BadConfig("u must be at least 1"));
        }
        if self.bins_outlier == 0 || self.bins_speed == 0 {
            return Err(DiversityError::BadConfig("bin counts must be at least 1"));
        }
        Ok(())
    }
}

/// Mean and population std of `(σ_θ, σ_l, σ_v)` across the pool.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoolStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl PoolStats {
    pub fn from_features(features: &[SequenceFeatures]) -> Self {
        let rows: Vec<[f64; 3]> = features.iter().map(spreads).collect();
        let n = rows.len().max(1) as f64;
        let mut stats = PoolStats::default();
        for d in 0..3 {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<f64>() / n;
            stats.mean[d] = mean;
            stats.std[d] = sqrt(var);
        }
        stats
    }

    /// Z-scores `values`; a feature with zero spread maps to 0.
    pub fn normalize(&self, values: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for d in 0..3 {
            if self.std[d] > 0.0 {
                out[d] = (values[d] - self.mean[d]) / self.std[d];
            }
        }
        out
    }
}

fn spreads(f: &SequenceFeatures) -> [f64; 3] {
    [f.theta_std, f.length_std, f.speed_std]
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoredSequence {
    pub id: String,
    pub f_var: f64,
    pub f_impor: f64,
    /// `(σ_θ, σ_l, σ_v)` after optional normalization.
    pub normalized: [f64; 3],
    pub outlier_proportion: f64,
    pub speed_mean: f64,
    pub bin_outlier: usize,
    pub bin_speed: usize,
}

impl ScoredSequence {
    pub fn score(&self) -> f64 {
        self.f_var + self.f_impor
    }
}

/// `λ1 σ_θ + λ2 σ_l + λ3 σ_v`, z-scored against `pool` when given.
pub fn variability(feat: &SequenceFeatures, w: &DiversityWeights, pool: Option<&PoolStats>) -> f64 {
    let raw = spreads(feat);
    let x = match pool {
        Some(stats) => stats.normalize(raw),
        None => raw,
    };
    w.lambda1 * x[0] + w.lambda2 * x[1] + w.lambda3 * x[2]
}

/// `λ4 · turn energy + λ5 · length / pool length`.
pub fn importance(graph: &TrajectoryGraph, pool_total_length: f64, w: &DiversityWeights) -> Result<f64, DiversityError> {
    importance_from_parts(turn_energy(graph), graph.total_length(), pool_total_length, w)
}

pub fn importance_from_parts(turn_energy: f64, length: f64, pool_total_length: f64, w: &DiversityWeights) -> Result<f64, DiversityError> {
    if !(pool_total_length > 0.0) {
        return Err(DiversityError::ZeroPoolLength(pool_total_length));
    }
    Ok(w.lambda4 * turn_energy + w.lambda5 * length / pool_total_length)
}

/// Equal-population bins over ascending `values`. Rank `r` of `n` lands in
/// bin `⌊r·B/n⌋`; a run of equal values takes the bin of its first member.
/// Equal values are ordered by `ids` for stability.
pub fn assign_bins(values: &[f64], ids: &[&str], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then_with(|| ids[a].cmp(ids[b])));
    let mut out = alloc::vec![0; n];
    let mut run_bin = 0;
    for (rank, &i) in order.iter().enumerate() {
        let tied = rank > 0 && values[order[rank - 1]] == values[i];
        if !tied {
            run_bin = rank * bins / n;
        }
        out[i] = run_bin;
    }
    out
}

/// Scores every candidate and assigns its bins.
pub fn score_pool(features: &[SequenceFeatures], cfg: &ItssConfig) -> Result<Vec<ScoredSequence>, DiversityError> {
    if features.is_empty() {
        return Err(DiversityError::EmptyPool);
    }
    cfg.validate()?;
    let stats = PoolStats::from_features(features);
    let pool_length: f64 = features.iter().map(|f| f.total_length).sum();
    let ids: Vec<&str> = features.iter().map(|f| f.id.as_str()).collect();
    let so: Vec<f64> = features.iter().map(|f| f.outlier_proportion).collect();
    let v: Vec<f64> = features.iter().map(|f| f.speed_mean).collect();
    let bins_o = assign_bins(&so, &ids, cfg.bins_outlier);
    let bins_v = assign_bins(&v, &ids, cfg.bins_speed);

    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let pool = cfg.normalize.then_some(&stats);
            let f_var = variability(f, &cfg.weights, pool);
            let f_impor = importance_from_parts(f.turn_energy, f.total_length, pool_length, &cfg.weights)?;
            if !(f_var.is_finite() && f_impor.is_finite()) {
                return Err(DiversityError::NonFinite(f.id.clone()));
            }
            Ok(ScoredSequence {
                id: f.id.clone(),
                f_var,
                f_impor,
                normalized: pool.map_or(spreads(f), |s| s.normalize(spreads(f))),
                outlier_proportion: f.outlier_proportion,
                speed_mean: f.speed_mean,
                bin_outlier: bins_o[i],
                bin_speed: bins_v[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ItssSelection {
    /// Selected ids in ascending order.
    pub selected: Vec<String>,
    pub objective: f64,
    /// False when the greedy fallback was used.
    pub exact: bool,
    /// Selected count per outlier bin.
    pub coverage_outlier: Vec<usize>,
    /// Selected count per speed bin.
    pub coverage_speed: Vec<usize>,
    pub min_feasible_u: usize,
}

/// Smallest set size covering every non-empty bin on both axes: a minimum
/// edge cover of the bipartite graph whose edges are the sequences.
pub fn min_feasible_u(scored: &[ScoredSequence]) -> usize {
    let bo = scored.iter().map(|s| s.bin_outlier + 1).max().unwrap_or(0);
    let bv = scored.iter().map(|s| s.bin_speed + 1).max().unwrap_or(0);
    let mut adj = alloc::vec![Vec::new(); bo];
    let mut used_o = alloc::vec![false; bo];
    let mut used_v = alloc::vec![false; bv];
    for s in scored {
        adj[s.bin_outlier].push(s.bin_speed);
        used_o[s.bin_outlier] = true;
        used_v[s.bin_speed] = true;
    }
    let mut matched_v: Vec<Option<usize>> = alloc::vec![None; bv];
    let mut matching = 0;
    for o in 0..bo {
        let mut seen = alloc::vec![false; bv];
        if augment(o, &adj, &mut seen, &mut matched_v) {
            matching += 1;
        }
    }
    let nonempty = used_o.iter().filter(|&&b| b).count() + used_v.iter().filter(|&&b| b).count();
    nonempty - matching
}

fn augment(o: usize, adj: &[Vec<usize>], seen: &mut [bool], matched_v: &mut [Option<usize>]) -> bool {
    for &v in &adj[o] {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        if matched_v[v].is_none_or(|other| augment(other, adj, seen, matched_v)) {
            matched_v[v] = Some(o);
            return true;
        }
    }
    false
}

/// True when `chosen` (indices into `scored`) hits every non-empty bin.
pub fn covers_all_bins(scored: &[ScoredSequence], chosen: &[usize]) -> bool {
    let hit = |bin: fn(&ScoredSequence) -> usize| scored.iter().all(|s| chosen.iter().any(|&c| bin(&scored[c]) == bin(s)));
    hit(|s| s.bin_outlier) && hit(|s| s.bin_speed)
}

/// Tolerance below which two objective values count as tied.
fn tie_tolerance(scored: &[ScoredSequence]) -> f64 {
    let scale: f64 = scored.iter().map(|s| s.score().abs()).sum();
    1e-12 * if scale > 0.0 { scale } else { 1.0 }
}

/// True if `(value, ids)` beats `(best, best_ids)`: higher objective, or a tie
/// and a lexicographically smaller sorted id list.
fn better(value: f64, ids: &[&str], best: Option<(f64, &[&str])>, tol: f64) -> bool {
    match best {
        None => true,
        Some((b, b_ids)) => {
            if value > b + tol {
                true
            } else if value >= b - tol {
                ids < b_ids
            } else {
                false
            }
        }
    }
}

fn sorted_ids<'a>(scored: &'a [ScoredSequence], chosen: &[usize]) -> Vec<&'a str> {
    let mut ids: Vec<&str> = chosen.iter().map(|&i| scored[i].id.as_str()).collect();
    ids.sort_unstable();
    ids
}

/// Chooses exactly `cfg.u` sequences maximizing `Σ (F_Var + F_Impor)` while
/// covering every non-empty bin. Exact for pools up to [`EXACT_LIMIT`];
/// greedy with coverage repair beyond.
pub fn select_itss(scored: &[ScoredSequence], cfg: &ItssConfig) -> Result<ItssSelection, DiversityError> {
    let n = scored.len();
    if n == 0 {
        return Err(DiversityError::EmptyPool);
    }
    if cfg.u == 0 {
        return Err(DiversityError::BadConfig("u must be at least 1"));
    }
    if let Some(s) = scored.iter().find(|s| !s.score().is_finite()) {
        return Err(DiversityError::NonFinite(s.id.clone()));
    }
    if cfg.u > n {
        return Err(DiversityError::TooMany { u: cfg.u, n });
    }
    let min_u = min_feasible_u(scored);
    if cfg.u < min_u {
        return Err(DiversityError::Infeasible { u: cfg.u, min_u, n });
    }

    let exact = n <= EXACT_LIMIT;
    let chosen = if exact {
        branch_and_bound(scored, cfg.u)
    } else {
        greedy(scored, cfg.u)
    };
    debug_assert!(covers_all_bins(scored, &chosen));

    let bo = scored.iter().map(|s| s.bin_outlier + 1).max().unwrap_or(0);
    let bv = scored.iter().map(|s| s.bin_speed + 1).max().unwrap_or(0);
    let mut coverage_outlier = alloc::vec![0; bo];
    let mut coverage_speed = alloc::vec![0; bv];
    for &c in &chosen {
        coverage_outlier[scored[c].bin_outlier] += 1;
        coverage_speed[scored[c].bin_speed] += 1;
    }
    let objective = chosen.iter().map(|&c| scored[c].score()).sum();
    Ok(ItssSelection {
        selected: sorted_ids(scored, &chosen).into_iter().map(String::from).collect(),
        objective,
        exact,
        coverage_outlier,
        coverage_speed,
        min_feasible_u: min_u,
    })
}

/// Candidates ordered by descending score, then ascending id.
fn score_order(scored: &[ScoredSequence]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .score()
            .partial_cmp(&scored[a].score())
            .unwrap_or(Ordering::Equal)
            .then_with(|| scored[a].id.cmp(&scored[b].id))
    });
    order
}

struct Search<'a> {
    scored: &'a [ScoredSequence],
    order: Vec<usize>,
    /// `prefix[i]` is the summed score of `order[..i]`.
    prefix: Vec<f64>,
    /// Last position in `order` holding each outlier / speed bin.
    last_o: Vec<usize>,
    last_v: Vec<usize>,
    hits_o: Vec<usize>,
    hits_v: Vec<usize>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    tol: f64,
}

impl Search<'_> {
    fn feasible(&self, pos: usize, slots: usize) -> bool {
        let mut missing_o = 0;
        for (b, &last) in self.last_o.iter().enumerate() {
            if last != usize::MAX && self.hits_o[b] == 0 {
                if last < pos {
                    return false;
                }
                missing_o += 1;
            }
        }
        let mut missing_v = 0;
        for (b, &last) in self.last_v.iter().enumerate() {
            if last != usize::MAX && self.hits_v[b] == 0 {
                if last < pos {
                    return false;
                }
                missing_v += 1;
            }
        }
        missing_o <= slots && missing_v <= slots
    }

    fn run(&mut self, pos: usize, slots: usize, value: f64) {
        if slots == 0 {
            if !self.feasible(pos, 0) {
                return;
            }
            let ids = sorted_ids(self.scored, &self.chosen);
            let best = self.best.as_ref().map(|(v, c)| (*v, sorted_ids(self.scored, c)));
            if better(value, &ids, best.as_ref().map(|(v, i)| (*v, i.as_slice())), self.tol) {
                self.best = Some((value, self.chosen.clone()));
            }
            return;
        }
        if self.order.len() - pos < slots || !self.feasible(pos, slots) {
            return;
        }
        let bound = value + self.prefix[pos + slots] - self.prefix[pos];
        if let Some((best, _)) = &self.best {
            if bound < best - self.tol {
                return;
            }
        }
        let item = self.order[pos];
        let (bo, bv) = (self.scored[item].bin_outlier, self.scored[item].bin_speed);
        self.chosen.push(item);
        self.hits_o[bo] += 1;
        self.hits_v[bv] += 1;
        self.run(pos + 1, slots - 1, value + self.scored[item].score());
        self.hits_o[bo] -= 1;
        self.hits_v[bv] -= 1;
        self.chosen.pop();
        self.run(pos + 1, slots, value);
    }
}

fn branch_and_bound(scored: &[ScoredSequence], u: usize) -> Vec<usize> {
    let order = score_order(scored);
    let mut prefix = alloc::vec![0.0; order.len() + 1];
    for (i, &o) in order.iter().enumerate() {
        prefix[i + 1] = prefix[i] + scored[o].score();
    }
    let bo = scored.iter().map(|s| s.bin_outlier + 1).max().unwrap_or(0);
    let bv = scored.iter().map(|s| s.bin_speed + 1).max().unwrap_or(0);
    let mut last_o = alloc::vec![usize::MAX; bo];
    let mut last_v = alloc::vec![usize::MAX; bv];
    for (pos, &o) in order.iter().enumerate() {
        last_o[scored[o].bin_outlier] = pos;
        last_v[scored[o].bin_speed] = pos;
    }
    let mut search = Search {
        scored,
        order,
        prefix,
        last_o,
        last_v,
        hits_o: alloc::vec![0; bo],
        hits_v: alloc::vec![0; bv],
        chosen: Vec::with_capacity(u),
        best: None,
        tol: tie_tolerance(scored),
    };
    search.run(0, u, 0.0);
    search.best.map(|(_, c)| c).expect("feasibility was checked")
}

/// Covers bins first, preferring candidates that close the most uncovered
/// bins and then the highest score; fills the rest by score.
fn greedy(scored: &[ScoredSequence], u: usize) -> Vec<usize> {
    let order = score_order(scored);
    let bo = scored.iter().map(|s| s.bin_outlier + 1).max().unwrap_or(0);
    let bv = scored.iter().map(|s| s.bin_speed + 1).max().unwrap_or(0);
    let mut need_o = alloc::vec![false; bo];
    let mut need_v = alloc::vec![false; bv];
    for s in scored {
        need_o[s.bin_outlier] = true;
        need_v[s.bin_speed] = true;
    }
    let mut taken = alloc::vec![false; scored.len()];
    let mut chosen = Vec::with_capacity(u);
    while need_o.iter().chain(&need_v).any(|&b| b) {
        let gain = |i: usize| need_o[scored[i].bin_outlier] as usize + need_v[scored[i].bin_speed] as usize;
        let mut pick = None;
        for &i in &order {
            if !taken[i] && gain(i) > pick.map_or(0, gain) {
                pick = Some(i);
            }
        }
        let i = pick.expect("uncovered bins always have a candidate");
        taken[i] = true;
        need_o[scored[i].bin_outlier] = false;
        need_v[scored[i].bin_speed] = false;
        chosen.push(i);
    }
    // Greedy cover can overshoot the minimum; repair by dropping the lowest
    // scoring members whose removal keeps coverage.
    while chosen.len() > u {
        let mut drop = None;
        for (k, &c) in chosen.iter().enumerate() {
            let rest: Vec<usize> = chosen.iter().copied().filter(|&x| x != c).collect();
            if covers_all_bins(scored, &rest) && drop.is_none_or(|(_, d): (usize, usize)| scored[c].score() < scored[d].score()) {
                drop = Some((k, c));
            }
        }
        match drop {
            Some((k, _)) => {
                chosen.remove(k);
            }
            None => break,
        }
    }
    for &i in &order {
        if chosen.len() >= u {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            chosen.push(i);
        }
    }
    chosen
}
