//! Trajectory segmentation into turn nodes and constant-motion edges, and the
//! per-sequence features derived from them.

use alloc::string::String;
use alloc::vec::Vec;

use libm::{acos, atan2, round, sqrt};
use nalgebra::Vector3;
use thiserror::Error;

use crate::geom::wrap_angle;
use crate::nn::NnIndex;
use crate::sequence::{SequenceError, SequenceRecord};

/// Steps shorter than this (m) carry no heading information.
const MIN_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajError {
    #[error("sequence {id}: needs at least 2 frames, got {frames}")]
    TooFewFrames { id: String, frames: usize },
    #[error("node {node} is not interior (graph has {nodes} nodes)")]
    NotInterior { node: usize, nodes: usize },
    #[error("node {node}: adjacent node coincides with it, angle undefined")]
    DegenerateNode { node: usize },
    #[error("outlier threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

/// Turn detection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SegmentParams {
    /// Sliding-window length in seconds over which heading change accumulates.
    pub window_s: f64,
    /// Accumulated heading change (radians) that marks a turn.
    pub turn_threshold: f64,
    /// Minimum frame gap between nodes; defaults to one window (`window_s · r`).
    pub min_gap_frames: Option<usize>,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            turn_threshold: 15f64.to_radians(),
            min_gap_frames: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajNode {
    pub frame_index: usize,
    pub position: Vector3<f64>,
    /// Turning angle in [0, π]; absent on the endpoints.
    pub angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajEdge {
    pub start_node: usize,
    pub end_node: usize,
    /// Inclusive frame range `[i, j]`.
    pub frame_span: (usize, usize),
    /// Path length in meters.
    pub length: f64,
    /// Mean speed in m/s.
    pub speed: f64,
}

impl TrajEdge {
    /// `j − i + 1`.
    pub fn frame_count(&self) -> usize {
        self.frame_span.1 - self.frame_span.0 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryGraph {
    pub nodes: Vec<TrajNode>,
    pub edges: Vec<TrajEdge>,
}

impl TrajectoryGraph {
    /// Index of the last node, `m`.
    pub fn m(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn interior_angles(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| n.angle)
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub id: String,
    /// Index of the last node (`nodes − 1`), which is also the edge count.
    pub m: usize,
    pub theta_mean: f64,
    pub theta_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub length_mean: f64,
    pub length_std: f64,
    pub outlier_proportion: f64,
    /// `o_i` per frame pair; `None` where the pair was skipped.
    pub per_frame_outliers: Vec<Option<f64>>,
    /// Sum of edge lengths (m).
    pub total_length: f64,
    /// `Σ |v_{k−1,k} − v_{k,k+1}| · θ_k` over interior nodes.
    pub turn_energy: f64,
}

/// Signed heading change at each frame (zero at the endpoints).
fn heading_changes(positions: &[Vector3<f64>]) -> Vec<f64> {
    let n = positions.len();
    let mut headings: Vec<Option<f64>> = positions
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if sqrt(d.x * d.x + d.y * d.y) < MIN_STEP {
                None
            } else {
                Some(atan2(d.y, d.x))
            }
        })
        .collect();
    // Stationary steps inherit the last known heading (or the first, at the start).
    let first_known = headings.iter().flatten().next().copied();
    let mut last = first_known;
    for h in headings.iter_mut() {
        match h {
            Some(v) => last = Some(*v),
            None => *h = last,
        }
    }
    let mut change = alloc::vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        if let (Some(a), Some(b)) = (headings[i - 1], headings[i]) {
            change[i] = wrap_angle(b - a);
        }
    }
    change
}

/// Splits a trajectory at its turns.
///
/// A frame is a turn candidate when the signed heading change accumulated over
/// a window of `window_s` seconds centered on it exceeds `turn_threshold`.
/// Each run of candidates contributes the frame with the sharpest per-frame
/// heading change. Nodes closer than `min_gap_frames` are merged, keeping the
/// one with the larger accumulated change. The first and last frames are
/// always nodes.
pub fn segment_trajectory(seq: &SequenceRecord, params: &SegmentParams) -> Result<TrajectoryGraph, TrajError> {
    let n = seq.positions.len();
    if n < 2 {
        return Err(TrajError::TooFewFrames {
            id: seq.id.clone(),
            frames: n,
        });
    }
    let rate = seq.frame_rate;
    let change = heading_changes(&seq.positions);
    let half = ((round(params.window_s * rate) as usize) / 2).max(1);

    let mut accumulated = alloc::vec![0.0; n];
    for (i, acc) in accumulated.iter_mut().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        *acc = change[lo..=hi].iter().sum::<f64>();
    }

    // (frame, accumulated change) for the sharpest frame of each candidate run.
    let mut picked: Vec<(usize, f64)> = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if accumulated[i].abs() <= params.turn_threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && accumulated[i].abs() > params.turn_threshold {
            i += 1;
        }
        let mut best = start;
        for f in start..i {
            if change[f].abs() > change[best].abs() {
                best = f;
            }
        }
        picked.push((best, accumulated[best].abs()));
    }

    let min_gap = params.min_gap_frames.unwrap_or_else(|| round(params.window_s * rate) as usize);
    loop {
        let mut merged = false;
        for k in 1..picked.len() {
            if picked[k].0 - picked[k - 1].0 < min_gap {
                // Drop the weaker; on a tie keep the earlier.
                let drop = if picked[k].1 > picked[k - 1].1 { k - 1 } else { k };
                picked.remove(drop);
                merged = true;
                break;
            }
        }
        if !merged {
            break;
        }
    }
    // Keep interior nodes clear of the endpoints by the same gap.
    picked.retain(|&(f, _)| f > 0 && f < n - 1);

    let mut frames = Vec::with_capacity(picked.len() + 2);
    frames.push(0);
    frames.extend(picked.iter().map(|p| p.0));
    frames.push(n - 1);

    build_graph(seq, &frames)
}

/// Builds the graph for the given node frames (strictly increasing, starting at
/// 0 and ending at the last frame) and fills in angles and edge features.
pub fn build_graph(seq: &SequenceRecord, node_frames: &[usize]) -> Result<TrajectoryGraph, TrajError> {
    let nodes = node_frames
        .iter()
        .map(|&f| TrajNode {
            frame_index: f,
            position: seq.positions[f],
            angle: None,
        })
        .collect();
    let edges = node_frames
        .windows(2)
        .enumerate()
        .map(|(k, w)| TrajEdge {
            start_node: k,
            end_node: k + 1,
            frame_span: (w[0], w[1]),
            length: 0.0,
            speed: 0.0,
        })
        .collect();
    let mut graph = TrajectoryGraph { nodes, edges };
    for k in 1..graph.m() {
        graph.nodes[k].angle = Some(node_angle(&graph, k)?);
    }
    edge_features(&mut graph, seq);
    Ok(graph)
}

/// Angle between the incoming and outgoing node-to-node vectors at interior
/// node `k`, in radians.
pub fn node_angle(graph: &TrajectoryGraph, k: usize) -> Result<f64, TrajError> {
    if k == 0 || k >= graph.m() {
        return Err(TrajError::NotInterior {
            node: k,
            nodes: graph.nodes.len(),
        });
    }
    let d_in = graph.nodes[k].position - graph.nodes[k - 1].position;
    let d_out = graph.nodes[k + 1].position - graph.nodes[k].position;
    let denom = d_in.norm() * d_out.norm();
    if !(denom > 0.0) {
        return Err(TrajError::DegenerateNode { node: k });
    }
    Ok(acos((d_in.dot(&d_out) / denom).clamp(-1.0, 1.0)))
}

/// Mean and population standard deviation of the interior-node angles.
/// A graph without interior nodes yields `(0, 0)`.
pub fn angle_stats(graph: &TrajectoryGraph) -> (f64, f64) {
    let angles: Vec<f64> = graph.interior_angles().collect();
    if angles.is_empty() {
        log::warn!("no interior nodes; angle statistics set to zero");
        return (0.0, 0.0);
    }
    mean_std(&angles)
}

/// Fills `length` and `speed` on every edge from the sequence positions.
pub fn edge_features(graph: &mut TrajectoryGraph, seq: &SequenceRecord) {
    for e in &mut graph.edges {
        let (i, j) = e.frame_span;
        e.length = seq.positions[i..=j].windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        e.speed = e.length / ((j - i + 1) as f64 / seq.frame_rate);
    }
}

/// `(v̄, σ_v, l̄, σ_l)` with population statistics over edges.
pub fn edge_stats(graph: &TrajectoryGraph) -> (f64, f64, f64, f64) {
    let speeds: Vec<f64> = graph.edges.iter().map(|e| e.speed).collect();
    let lengths: Vec<f64> = graph.edges.iter().map(|e| e.length).collect();
    let (v, sv) = mean_std(&speeds);
    let (l, sl) = mean_std(&lengths);
    (v, sv, l, sl)
}

/// `Σ_k |v_{k−1,k} − v_{k,k+1}| · θ_k` over interior nodes.
pub fn turn_energy(graph: &TrajectoryGraph) -> f64 {
    (1..graph.m())
        .map(|k| {
            let dv = (graph.edges[k - 1].speed - graph.edges[k].speed).abs();
            dv * graph.nodes[k].angle.unwrap_or(0.0)
        })
        .sum()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, sqrt(var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    /// `o_i` for each pair `(i, i+1)`; `None` when either frame was empty.
    pub per_frame: Vec<Option<f64>>,
    pub outliers: usize,
    pub points: usize,
    /// `s_o`, total outliers over total points of the evaluated frames.
    pub proportion: f64,
    pub skipped: Vec<usize>,
}

/// Share of points that have no neighbour within `epsilon` in the next frame
/// once the frame is moved by its ground-truth relative pose.
pub fn outlier_proportion(seq: &SequenceRecord, epsilon: f64) -> Result<OutlierReport, TrajError> {
    if !(epsilon > 0.0) {
        return Err(TrajError::BadThreshold(epsilon));
    }
    let mut per_frame = Vec::with_capacity(seq.pair_count());
    let mut skipped = Vec::new();
    let (mut outliers, mut points) = (0usize, 0usize);
    let mut next = seq.cloud(0)?;
    for i in 0..seq.pair_count() {
        let current = next;
        next = seq.cloud(i + 1)?;
        let rel = seq.relative_pose(i)?;
        if current.is_empty() || next.is_empty() {
            log::warn!("sequence {}: empty frame in pair {i}, skipped", seq.id);
            per_frame.push(None);
            skipped.push(i);
            continue;
        }
        let index = NnIndex::build(&next.points).expect("non-empty");
        let count = current
            .points
            .iter()
            .filter(|q| index.nearest(&rel.transform_point(q)).distance > epsilon)
            .count();
        per_frame.push(Some(count as f64 / current.len() as f64));
        outliers += count;
        points += current.len();
    }
    let proportion = if points > 0 { outliers as f64 / points as f64 } else { 0.0 };
    Ok(OutlierReport {
        per_frame,
        outliers,
        points,
        proportion,
        skipped,
    })
}

/// All node, edge and sample features of one sequence.
pub fn sequence_features(
    seq: &SequenceRecord,
    params: &SegmentParams,
    epsilon: f64,
) -> Result<(TrajectoryGraph, SequenceFeatures), TrajError> {
    let graph = segment_trajectory(seq, params)?;
    let (theta_mean, theta_std) = angle_stats(&graph);
    let (speed_mean, speed_std, length_mean, length_std) = edge_stats(&graph);
    let outliers = outlier_proportion(seq, epsilon)?;
    let features = SequenceFeatures {
        id: seq.id.clone(),
        m: graph.m(),
        theta_mean,
        theta_std,
        speed_mean,
        speed_std,
        length_mean,
        length_std,
        outlier_proportion: outliers.proportion,
        per_frame_outliers: outliers.per_frame,
        total_length: graph.total_length(),
        turn_energy: turn_energy(&graph),
    };
    Ok((graph, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::geom::{Pose, Rotation, Translation};
    use crate::sequence::{InMemoryFrames, Weather};
    use crate::synth::{synth_poses, synth_sequence, Segment, SynthSpec};
    use alloc::sync::Arc;
    use alloc::vec;
    use approx::assert_relative_eq;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trajectory(spec: &SynthSpec) -> SequenceRecord {
        SequenceRecord::from_poses("t", synth_poses(spec), spec.frame_rate, Weather::General, None).unwrap()
    }

    fn graph_of(positions: &[[f64; 3]]) -> TrajectoryGraph {
        let pos: Vec<_> = positions.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        let seq = SequenceRecord::from_positions("g", pos, 10.0, Weather::General).unwrap();
        let frames: Vec<usize> = (0..positions.len()).collect();
        let mut g = build_graph(&seq, &[0, positions.len() - 1]).unwrap();
        // Promote every frame to a node without computing angles.
        g.nodes = frames
            .iter()
            .map(|&f| TrajNode {
                frame_index: f,
                position: seq.positions[f],
                angle: None,
            })
            .collect();
        g
    }

    #[test]
    fn straight_trajectory_has_no_interior_nodes() {
        let seq = trajectory(&SynthSpec::new(vec![Segment::new(100.0, 10.0, 0.0)], 10.0));
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(angle_stats(&g), (0.0, 0.0));
    }

    #[test]
    fn l_shape_has_one_node_at_the_joint() {
        let seq = trajectory(&SynthSpec::new(
            vec![Segment::new(40.0, 10.0, 0.0), Segment::new(40.0, 10.0, FRAC_PI_2)],
            10.0,
        ));
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert!((g.nodes[1].frame_index as i64 - 40).abs() <= 3);
        assert!((g.nodes[1].angle.unwrap() - FRAC_PI_2).abs() < 2f64.to_radians());
    }

    #[test]
    fn l_shape_off_frame_joint_is_localized() {
        // Joint at t = 3.05 s falls between frames 30 and 31.
        let seq = trajectory(&SynthSpec::new(
            vec![Segment::new(30.5, 10.0, 0.0), Segment::new(40.0, 10.0, FRAC_PI_2)],
            10.0,
        ));
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert!((g.nodes[1].frame_index as i64 - 30).abs() <= 3);
    }

    #[test]
    fn zigzag_with_four_joints() {
        let t = 30f64.to_radians();
        let seq = trajectory(&SynthSpec::new(
            vec![
                Segment::new(30.0, 10.0, 0.0),
                Segment::new(30.0, 10.0, t),
                Segment::new(30.0, 10.0, -t),
                Segment::new(30.0, 10.0, t),
                Segment::new(30.0, 10.0, -t),
            ],
            10.0,
        ));
        let params = SegmentParams {
            turn_threshold: 15f64.to_radians(),
            ..SegmentParams::default()
        };
        let g = segment_trajectory(&seq, &params).unwrap();
        assert_eq!(g.nodes.len(), 6);
        for (k, node) in g.nodes[1..5].iter().enumerate() {
            assert_eq!(node.frame_index, 30 * (k + 1));
            assert!((node.angle.unwrap() - t).abs() < 1e-9);
        }
    }

    #[test]
    fn zigzag_angle_stats_match_construction() {
        let turns = [30.0f64, -45.0, 60.0, -30.0].map(f64::to_radians);
        let mut segments = vec![Segment::new(30.0, 10.0, 0.0)];
        segments.extend(turns.iter().map(|&t| Segment::new(30.0, 10.0, t)));
        let seq = trajectory(&SynthSpec::new(segments, 10.0));
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();

        let abs: Vec<f64> = turns.iter().map(|t| t.abs()).collect();
        let mean = abs.iter().sum::<f64>() / 4.0;
        let std = sqrt(abs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 4.0);
        let (m, s) = angle_stats(&g);
        assert!((m - mean).abs() < 1e-6);
        assert!((s - std).abs() < 1e-6);
    }

    #[test]
    fn node_angle_examples() {
        let g = graph_of(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(node_angle(&g, 1).unwrap(), 0.0);
        let g = graph_of(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        assert_relative_eq!(node_angle(&g, 1).unwrap(), FRAC_PI_2, epsilon = 1e-12);
        let g = graph_of(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_relative_eq!(node_angle(&g, 1).unwrap(), PI, epsilon = 1e-12);
        assert!(matches!(node_angle(&g, 0), Err(TrajError::NotInterior { .. })));
        let g = graph_of(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(node_angle(&g, 1), Err(TrajError::DegenerateNode { node: 1 }));
    }

    #[test]
    fn angle_stats_examples() {
        let mut g = graph_of(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        g.nodes[1].angle = Some(0.5);
        assert_eq!(angle_stats(&g), (0.5, 0.0));
        let mut g = graph_of(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        g.nodes[1].angle = Some(0.0);
        g.nodes[2].angle = Some(FRAC_PI_2);
        let (m, s) = angle_stats(&g);
        assert_relative_eq!(m, FRAC_PI_4, epsilon = 1e-15);
        assert_relative_eq!(s, FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn edge_features_examples() {
        let pos: Vec<_> = (0..11).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let seq = SequenceRecord::from_positions("e", pos, 10.0, Weather::General).unwrap();
        let g = build_graph(&seq, &[0, 10]).unwrap();
        assert_relative_eq!(g.edges[0].length, 10.0, epsilon = 1e-12);
        assert_relative_eq!(g.edges[0].speed, 10.0 / 1.1, epsilon = 1e-12);

        let still = SequenceRecord::from_positions("s", vec![Vector3::zeros(); 5], 10.0, Weather::General).unwrap();
        let g = build_graph(&still, &[0, 4]).unwrap();
        assert_eq!((g.edges[0].length, g.edges[0].speed), (0.0, 0.0));
    }

    #[test]
    fn constant_speed_is_recovered() {
        let seq = trajectory(&SynthSpec::new(vec![Segment::new(150.0, 15.0, 0.0)], 10.0));
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        assert!((g.edges[0].speed - 15.0).abs() < 0.02 * 15.0);
    }

    #[test]
    fn edge_stats_examples() {
        let g = TrajectoryGraph {
            nodes: vec![],
            edges: vec![TrajEdge {
                start_node: 0,
                end_node: 1,
                frame_span: (0, 5),
                length: 10.0,
                speed: 5.0,
            }],
        };
        assert_eq!(edge_stats(&g), (5.0, 0.0, 10.0, 0.0));
        let mut g2 = g.clone();
        g2.edges.push(TrajEdge {
            speed: 6.0,
            ..g.edges[0].clone()
        });
        g2.edges[0].speed = 4.0;
        let (v, sv, _, _) = edge_stats(&g2);
        assert_eq!((v, sv), (5.0, 1.0));
    }

    #[test]
    fn three_segment_edge_stats_match_construction() {
        let segs = [(30.0, 10.0), (20.0, 5.0), (45.0, 15.0)];
        let spec = SynthSpec::new(
            vec![
                Segment::new(segs[0].0, segs[0].1, 0.0),
                Segment::new(segs[1].0, segs[1].1, 1.0),
                Segment::new(segs[2].0, segs[2].1, -1.0),
            ],
            10.0,
        );
        let seq = trajectory(&spec);
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        assert_eq!(g.edges.len(), 3);

        // Joints fall on frames 30 and 70, the end on frame 100.
        let spans = [(0usize, 30usize), (30, 70), (70, 100)];
        let lengths: Vec<f64> = segs.iter().map(|s| s.0).collect();
        let speeds: Vec<f64> = spans
            .iter()
            .zip(&lengths)
            .map(|(&(i, j), l)| l / ((j - i + 1) as f64 / 10.0))
            .collect();
        let stat = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (m, sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64))
        };
        let (v, sv) = stat(&speeds);
        let (l, sl) = stat(&lengths);
        let got = edge_stats(&g);
        for (a, b) in [(got.0, v), (got.1, sv), (got.2, l), (got.3, sl)] {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn edges_tile_the_frame_range() {
        let seq = trajectory(&SynthSpec::new(
            vec![
                Segment::new(30.0, 10.0, 0.0),
                Segment::new(25.0, 8.0, 0.8),
                Segment::new(30.0, 12.0, -0.6),
            ],
            10.0,
        ));
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        assert_eq!(g.edges[0].frame_span.0, 0);
        assert_eq!(g.edges.last().unwrap().frame_span.1, seq.frame_count() - 1);
        for w in g.edges.windows(2) {
            assert_eq!(w[0].frame_span.1, w[1].frame_span.0);
        }
        let covered: usize = g.edges.iter().map(|e| e.frame_count()).sum::<usize>() - (g.edges.len() - 1);
        assert_eq!(covered, seq.frame_count());
    }

    #[test]
    fn angles_invariant_under_rigid_motion_and_speed_scales_with_rate() {
        let spec = SynthSpec::new(
            vec![
                Segment::new(30.0, 10.0, 0.0),
                Segment::new(30.0, 10.0, 0.9),
                Segment::new(30.0, 10.0, -0.5),
            ],
            10.0,
        );
        let seq = trajectory(&spec);
        let g = segment_trajectory(&seq, &SegmentParams::default()).unwrap();

        let motion = Pose::new(Rotation::about_z(1.1) * Rotation::about_x(0.2), Translation::new(5.0, -3.0, 2.0));
        let moved: Vec<_> = seq
            .positions
            .iter()
            .map(|p| motion.transform_point(&Point3::from(*p)).coords)
            .collect();
        let seq2 = SequenceRecord::from_positions("m", moved, 10.0, Weather::General).unwrap();
        let frames: Vec<usize> = g.nodes.iter().map(|n| n.frame_index).collect();
        let g2 = build_graph(&seq2, &frames).unwrap();
        for (a, b) in g.interior_angles().zip(g2.interior_angles()) {
            assert!((a - b).abs() < 1e-9);
        }

        let mut fast = seq.clone();
        fast.frame_rate = 20.0;
        let g3 = build_graph(&fast, &frames).unwrap();
        for (a, b) in g.edges.iter().zip(&g3.edges) {
            assert_eq!(b.speed, a.speed * 2.0);
        }
    }

    fn cloud_seq(frames: Vec<PointCloud>, poses: Vec<Pose>) -> SequenceRecord {
        SequenceRecord::from_poses("c", poses, 10.0, Weather::General, Some(Arc::new(InMemoryFrames::new(frames)))).unwrap()
    }

    #[test]
    fn static_scene_has_no_outliers() {
        let cloud = PointCloud::from_points((0..30).map(|i| Point3::new(i as f64, 0.5 * i as f64, 1.0)).collect());
        let seq = cloud_seq(vec![cloud.clone(), cloud.clone(), cloud], vec![Pose::identity(); 3]);
        let r = outlier_proportion(&seq, 0.3).unwrap();
        assert_eq!(r.proportion, 0.0);
        assert_eq!(r.per_frame, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn outliers_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let mut frames = Vec::new();
            let mut poses = Vec::new();
            for k in 0..4 {
                frames.push(PointCloud::from_points(
                    (0..50)
                        .map(|_| {
                            Point3::new(
                                rng.random_range(-3.0..3.0),
                                rng.random_range(-3.0..3.0),
                                rng.random_range(-1.0..1.0),
                            )
                        })
                        .collect(),
                ));
                poses.push(Pose::new(
                    Rotation::about_z(0.1 * k as f64),
                    Translation::new(0.2 * k as f64, 0.0, 0.0),
                ));
            }
            let seq = cloud_seq(frames.clone(), poses);
            let eps = 0.5;
            let (mut out, mut total) = (0usize, 0usize);
            for i in 0..3 {
                let rel = seq.relative_pose(i).unwrap();
                for q in &frames[i].points {
                    let t = rel.transform_point(q);
                    let d = frames[i + 1].points.iter().map(|p| (p - t).norm()).fold(f64::INFINITY, f64::min);
                    if d > eps {
                        out += 1;
                    }
                    total += 1;
                }
            }
            assert_eq!(outlier_proportion(&seq, eps).unwrap().proportion, out as f64 / total as f64);
        }
    }

    #[test]
    fn empty_frames_are_skipped() {
        let c = PointCloud::from_points(vec![Point3::new(1.0, 0.0, 0.0)]);
        let seq = cloud_seq(vec![c.clone(), PointCloud::default(), c.clone(), c], vec![Pose::identity(); 4]);
        let r = outlier_proportion(&seq, 0.3).unwrap();
        assert_eq!(r.skipped, vec![0, 1]);
        assert_eq!(r.per_frame, vec![None, None, Some(0.0)]);
    }

    #[test]
    fn missing_clouds_and_bad_threshold_error() {
        let seq = trajectory(&SynthSpec::new(vec![Segment::new(10.0, 10.0, 0.0)], 10.0));
        assert!(matches!(
            outlier_proportion(&seq, 0.3),
            Err(TrajError::Sequence(SequenceError::MissingClouds { .. }))
        ));
        assert_eq!(outlier_proportion(&seq, 0.0), Err(TrajError::BadThreshold(0.0)));
    }

    #[test]
    fn clutter_fraction_is_recovered() {
        for f in [0.1, 0.2, 0.4] {
            let mut spec = SynthSpec::new(vec![Segment::new(3.0, 5.0, 0.0), Segment::new(3.0, 5.0, 0.4)], 10.0);
            spec.clutter_fraction = f;
            let seq = synth_sequence("c", &spec, 17).unwrap();
            let r = outlier_proportion(&seq, 0.3).unwrap();
            assert!((r.proportion - f).abs() < 0.03, "f = {f}: s_o = {}", r.proportion);
        }
    }

    #[test]
    fn outlier_proportion_is_monotone_in_epsilon() {
        let mut spec = SynthSpec::new(vec![Segment::new(3.0, 5.0, 0.0)], 10.0);
        spec.clutter_fraction = 0.3;
        spec.noise_sigma = 0.05;
        let seq = synth_sequence("m", &spec, 5).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.05, 0.1, 0.2, 0.3, 0.6, 1.2, 2.5] {
            let s = outlier_proportion(&seq, eps).unwrap().proportion;
            assert!(s <= last);
            last = s;
        }
    }
}
