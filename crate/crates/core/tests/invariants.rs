use activelo_core::diversity::{covers_all_bins, min_feasible_u, score_pool, select_itss, ItssConfig};
use activelo_core::efficiency::{BudgetParams, CostReport};
use activelo_core::trajgraph::{angle_stats, edge_stats, segment_trajectory, turn_energy, SegmentParams, SequenceFeatures};
use activelo_core::{SequenceRecord, Weather};
use nalgebra::Vector3;
use proptest::prelude::*;

/// Piecewise-straight drive: each leg is `(frames, speed, heading change)`.
fn drive(legs: &[(usize, f64, f64)]) -> Vec<Vector3<f64>> {
    let (mut p, mut heading) = (Vector3::zeros(), 0.0f64);
    let mut out = vec![p];
    for &(frames, speed, turn) in legs {
        heading += turn;
        for _ in 0..frames {
            p += Vector3::new(heading.cos(), heading.sin(), 0.0) * speed / 10.0;
            out.push(p);
        }
    }
    out
}

fn features(id: String, positions: Vec<Vector3<f64>>, outliers: f64) -> SequenceFeatures {
    let seq = SequenceRecord::from_positions(id.clone(), positions, 10.0, Weather::General).unwrap();
    let graph = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
    let (theta_mean, theta_std) = angle_stats(&graph);
    let (speed_mean, speed_std, length_mean, length_std) = edge_stats(&graph);
    SequenceFeatures {
        id,
        m: graph.m(),
        theta_mean,
        theta_std,
        speed_mean,
        speed_std,
        length_mean,
        length_std,
        outlier_proportion: outliers,
        per_frame_outliers: Vec::new(),
        total_length: graph.total_length(),
        turn_energy: turn_energy(&graph),
    }
}

fn legs() -> impl Strategy<Value = Vec<(usize, f64, f64)>> {
    prop::collection::vec((30usize..120, 2.0f64..20.0, -1.8f64..1.8), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_tile_the_trajectory(legs in legs()) {
        let positions = drive(&legs);
        let path: f64 = positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let n = positions.len();
        let seq = SequenceRecord::from_positions("p", positions, 10.0, Weather::General).unwrap();
        let graph = segment_trajectory(&seq, &SegmentParams::default()).unwrap();
        prop_assert_eq!(graph.edges.len(), graph.m());
        prop_assert_eq!(graph.edges[0].frame_span.0, 0);
        prop_assert_eq!(graph.edges.last().unwrap().frame_span.1, n - 1);
        for w in graph.edges.windows(2) {
            prop_assert_eq!(w[0].frame_span.1, w[1].frame_span.0);
        }
        prop_assert!((graph.total_length() - path).abs() < 1e-9 * path.max(1.0));
        prop_assert_eq!(graph.interior_angles().count(), graph.m().saturating_sub(1));
        let (speed_mean, speed_std, _, length_std) = edge_stats(&graph);
        prop_assert!(angle_stats(&graph).1 >= 0.0 && speed_std >= 0.0 && length_std >= 0.0);
        prop_assert!(speed_mean > 0.0);
    }

    #[test]
    fn selection_respects_budget_and_coverage(
        drives in prop::collection::vec((legs(), 0.0f64..0.5), 4..9),
        u_extra in 0usize..3,
        bins in 1usize..4,
    ) {
        let features: Vec<_> = drives
            .iter()
            .enumerate()
            .map(|(i, (l, o))| features(format!("s{i}"), drive(l), *o))
            .collect();
        let mut cfg = ItssConfig { bins_outlier: bins, bins_speed: bins, ..ItssConfig::default() };
        let scored = score_pool(&features, &cfg).unwrap();
        cfg.u = (min_feasible_u(&scored) + u_extra).min(scored.len());
        let sel = select_itss(&scored, &cfg).unwrap();
        prop_assert!(sel.selected.len() <= cfg.u);
        let chosen: Vec<usize> = sel.selected.iter().map(|id| scored.iter().position(|s| &s.id == id).unwrap()).collect();
        prop_assert!(covers_all_bins(&scored, &chosen));
        let objective: f64 = chosen.iter().map(|&i| scored[i].score()).sum();
        prop_assert!((objective - sel.objective).abs() < 1e-9 * objective.abs().max(1.0));

        let mut reversed = features.clone();
        reversed.reverse();
        let again = select_itss(&score_pool(&reversed, &cfg).unwrap(), &cfg).unwrap();
        prop_assert_eq!(again.selected, sel.selected);
    }

    #[test]
    fn cost_report_adds_up(n_init in 1u64..20, h in 1u64..10, iter in 1u64..10, extra in 0u64..50) {
        let p = BudgetParams { n_total: n_init + h * iter + extra, n_init, h, iter, ..BudgetParams::default() };
        let r = CostReport::default_profile(&p).unwrap();
        prop_assert_eq!(r.l_active_total, r.l_train + r.l_remain);
        prop_assert_eq!(r.l_full, p.e_full * p.n_total);
        prop_assert_eq!(r.selected, n_init + h * (iter - 1));
        prop_assert!(r.selected <= p.n_total);
    }
}
