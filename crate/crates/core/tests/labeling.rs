use srp_core::bev::{detect_intersection_core, extract_crosswalks};
use srp_core::geometry::{SemanticClass, Vec2};
use srp_core::labeler::{
    label_episode, labeling_accuracy, quality_filter, CoherenceParams, LabelerParams, RejectReason,
};
use srp_core::sim::{make_episode, synthesize_trajectory, Episode, SimConfig};
use srp_core::topology::{
    afforded_actions, build_topology, AffordedAction, SemanticRegion, TopologyKind, TopologyParams,
};

use SemanticRegion::*;

fn episode(kind: TopologyKind, params: TopologyParams, action: AffordedAction, cfg: &SimConfig) -> Episode {
    let t = build_topology(kind, params).unwrap();
    make_episode(&t, action, cfg).unwrap()
}

fn runs(labels: &[SemanticRegion]) -> Vec<SemanticRegion> {
    let mut out: Vec<SemanticRegion> = Vec::new();
    for r in labels {
        if out.last() != Some(r) {
            out.push(*r);
        }
    }
    out
}

fn label(ep: &Episode) -> srp_core::labeler::LabelingResult {
    let params = LabelerParams::for_layout(&ep.topology.params, ep.grid.resolution);
    label_episode(ep, &CoherenceParams::default(), &params).unwrap()
}

fn gt(ep: &Episode) -> Vec<Option<SemanticRegion>> {
    ep.gt_regions.iter().copied().map(Some).collect()
}

#[test]
fn clean_labels_match_ground_truth_everywhere() {
    let cfg = SimConfig::clean();
    for kind in TopologyKind::ALL {
        for lanes in 1..=3 {
            for cw in [0.0, 3.0] {
                let params = TopologyParams {
                    lanes_per_direction: lanes,
                    crosswalk_width: cw,
                    ..Default::default()
                };
                let t = build_topology(kind, params).unwrap();
                for action in afforded_actions(&t) {
                    let ep = make_episode(&t, action, &cfg).unwrap();
                    let res = label(&ep);
                    assert!(res.accepted, "{kind} {lanes} {cw} {action}: {:?}", res.reject_reason);
                    let acc = labeling_accuracy(&res, &gt(&ep)).unwrap();
                    assert_eq!(
                        acc,
                        1.0,
                        "{kind} lanes={lanes} cw={cw} {action}: {:?} vs {:?}",
                        res.runs(),
                        runs(&ep.gt_regions)
                    );
                }
            }
        }
    }
}

#[test]
fn clean_run_sequences() {
    let cfg = SimConfig::clean();
    let p = TopologyParams::default();
    let cases = [
        (AffordedAction::LeftTurn, vec![S, A1, B1, C1, T1]),
        (AffordedAction::Straight, vec![S, A2, B2, C2, T2]),
        (AffordedAction::RightTurn, vec![S, A3, B3, C3, T3]),
    ];
    for (action, want) in cases {
        let ep = episode(TopologyKind::FourWay, p, action, &cfg);
        assert_eq!(runs(&ep.gt_regions), want);
        assert_eq!(label(&ep).runs(), want);
    }
    let no_cw = TopologyParams {
        crosswalk_width: 0.0,
        ..p
    };
    let ep = episode(TopologyKind::FourWay, no_cw, AffordedAction::LeftTurn, &cfg);
    assert_eq!(runs(&ep.gt_regions), vec![S, B1, T1]);
    assert_eq!(label(&ep).runs(), vec![S, B1, T1]);

    let lanes = [
        (AffordedAction::LeftLaneChange, vec![NS, NCL, NTL]),
        (AffordedAction::RightLaneChange, vec![NS, NCR, NTR]),
        (AffordedAction::Straight, vec![NS]),
    ];
    for (action, want) in lanes {
        let ep = episode(TopologyKind::StraightMultiLane, p, action, &cfg);
        assert_eq!(runs(&ep.gt_regions), want);
        assert_eq!(label(&ep).runs(), want);
    }
}

#[test]
fn crosswalk_components_and_core() {
    let cfg = SimConfig::clean();
    let p = TopologyParams::default();
    let ep = episode(TopologyKind::FourWay, p, AffordedAction::Straight, &cfg);
    let lp = LabelerParams::for_layout(&p, ep.grid.resolution);
    assert_eq!(extract_crosswalks(&ep.grid, lp.min_component_cells).len(), 4);
    let truth = ep.topology.intersection_core.clone().unwrap();
    let core = detect_intersection_core(&ep.grid, lp.road_width).unwrap();
    assert!(core.convex_iou(&truth) >= 0.8, "iou {}", core.convex_iou(&truth));

    let no_cw = TopologyParams {
        crosswalk_width: 0.0,
        ..p
    };
    let ep = episode(TopologyKind::FourWay, no_cw, AffordedAction::Straight, &cfg);
    let truth = ep.topology.intersection_core.clone().unwrap();
    let core = detect_intersection_core(&ep.grid, lp.road_width).unwrap();
    assert!(core.convex_iou(&truth) >= 0.6, "iou {}", core.convex_iou(&truth));

    let ep = episode(TopologyKind::StraightMultiLane, p, AffordedAction::Straight, &cfg);
    assert!(detect_intersection_core(&ep.grid, lp.road_width).is_none());
}

#[test]
fn crosswalk_cells_are_classed_crosswalk() {
    let cfg = SimConfig::clean();
    let ep = episode(
        TopologyKind::FourWay,
        TopologyParams::default(),
        AffordedAction::Straight,
        &cfg,
    );
    for cw in &ep.topology.crosswalks {
        let (lo, hi) = cw.bbox();
        let (mut inside, mut good) = (0, 0);
        for r in 0..ep.grid.height {
            for c in 0..ep.grid.width {
                let p = ep.grid.cell_center(r, c);
                if p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y {
                    inside += 1;
                    good += usize::from(ep.grid.class(r, c) == SemanticClass::Crosswalk);
                }
            }
        }
        assert!(good as f64 >= 0.99 * inside as f64, "{good}/{inside}");
    }
}

#[test]
fn noisy_labeling_is_reasonable() {
    let cfg = SimConfig::default();
    let p = TopologyParams::default();
    let mut accs = Vec::new();
    for seed in 0..20 {
        for action in [
            AffordedAction::LeftTurn,
            AffordedAction::RightTurn,
            AffordedAction::Straight,
        ] {
            let ep = episode(TopologyKind::FourWay, p, action, &cfg.with_seed(seed));
            let res = label(&ep);
            if res.accepted {
                accs.push(labeling_accuracy(&res, &gt(&ep)).unwrap());
            }
        }
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    println!("accepted {} mean accuracy {mean:.4}", accs.len());
    assert!(mean > 0.9);
}

#[test]
fn dropout_rejection_matches_binomial_tail() {
    let t = build_topology(TopologyKind::FourWay, TopologyParams::default()).unwrap();
    let cfg = SimConfig {
        pose_dropout_rate: 0.6,
        ..SimConfig::clean()
    };
    let coherence = CoherenceParams {
        min_localized_fraction: 0.5,
        ..Default::default()
    };
    let mut rejected = 0;
    let mut n = 0;
    for seed in 0..500 {
        let poses = synthesize_trajectory(&t, AffordedAction::LeftTurn, &cfg.with_seed(seed)).unwrap();
        n = poses.len();
        let (ok, reason) = quality_filter(&poses, &coherence).unwrap();
        if !ok && reason == Some(RejectReason::ReconstructionFailure) {
            rejected += 1;
        }
    }
    // P(localized < n/2) for localized ~ Binomial(n, 0.4)
    let need = (n as f64 * 0.5).ceil() as u64;
    let tail: f64 = (0..need).map(|k| binom_pmf(n as u64, k, 0.4)).sum();
    let rate = rejected as f64 / 500.0;
    assert!(
        (rate - tail).abs() <= 0.02 + 2.0 * (tail * (1.0 - tail) / 500.0).sqrt(),
        "rate {rate} tail {tail}"
    );
}

fn binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum();
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

#[test]
fn ideal_positions_stay_in_lane_for_straight_road() {
    let cfg = SimConfig::clean();
    let ep = episode(
        TopologyKind::StraightMultiLane,
        TopologyParams::default(),
        AffordedAction::Straight,
        &cfg,
    );
    assert!(ep.gt_regions.iter().all(|r| *r == NS));
    assert!(ep
        .true_poses
        .iter()
        .all(|p| (p.position.x - Vec2::new(5.25, 0.0).x).abs() < 1e-9));
}
