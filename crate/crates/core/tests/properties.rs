use std::f64::consts::PI;

use proptest::prelude::*;
use srp_core::geometry::{winner_take_all, wrap_angle, Polygon, SemanticClass, Vec2, VoteCounts};
use srp_core::heads::BoxRect;
use srp_core::metrics::{accuracy, average_precision, compute_metrics, PredictionRecord};

/// Interpolated AP by direct integration: at every recall level the
/// precision is the best over all thresholds reaching that recall.
fn ap_oracle(scores: &[f64], positive: &[bool]) -> f64 {
    let total = positive.iter().filter(|&&p| p).count() as f64;
    if total == 0.0 {
        return 0.0;
    }
    let points: Vec<(f64, f64)> = scores
        .iter()
        .map(|&t| {
            let kept: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
            let tp = kept.iter().filter(|&&i| positive[i]).count() as f64;
            (tp / total, tp / kept.len() as f64)
        })
        .collect();
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.push(0.0);
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    recalls
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let best = points.iter().filter(|p| p.0 >= mid).map(|p| p.1).fold(0.0, f64::max);
            (w[1] - w[0]) * best
        })
        .sum()
}

fn rect_overlap(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let w = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let h = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    w * h
}

fn rect() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-10.0..10.0f64, -10.0..10.0f64, 0.1..8.0f64, 0.1..8.0f64).prop_map(|(x, y, w, h)| (x, y, x + w, y + h))
}

fn records(n_classes: usize) -> impl Strategy<Value = Vec<PredictionRecord>> {
    prop::collection::vec((prop::collection::vec(0.0..1.0f64, n_classes), 0..n_classes), 1..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (s, gt))| PredictionRecord::new(s, gt, i as u64, 0))
            .collect()
    })
}

#[test]
fn hand_ranked_average_precision() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.5];
    let pos = [true, false, true, false, true];
    let want = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
    assert!((average_precision(&scores, &pos) - want).abs() < 1e-12);
    assert!((ap_oracle(&scores, &pos) - want).abs() < 1e-12);
    // a later positive with better precision lifts the earlier dip
    let pos = [true, false, false, true, true];
    let want = (1.0 + 0.6 + 0.6) / 3.0;
    assert!((average_precision(&scores, &pos) - want).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wrapped_angles_stay_in_range(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let k = ((a - w) / (2.0 * PI)).round();
        prop_assert!((a - w - k * 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn local_frame_preserves_distances(px in -50.0..50.0f64, py in -50.0..50.0f64,
                                       ox in -50.0..50.0f64, oy in -50.0..50.0f64,
                                       heading in -PI..PI) {
        let (p, o) = (Vec2::new(px, py), Vec2::new(ox, oy));
        let l = p.to_local(o, heading);
        prop_assert!((l.norm() - p.distance(o)).abs() < 1e-9);
        // the heading direction maps onto +x
        let ahead = (o + Vec2::from_heading(heading) * 3.0).to_local(o, heading);
        prop_assert!((ahead.x - 3.0).abs() < 1e-9 && ahead.y.abs() < 1e-9);
    }

    #[test]
    fn rectangle_polygons_match_closed_forms(r in rect(), px in -12.0..20.0f64, py in -12.0..20.0f64) {
        let p = Polygon::rect(r.0, r.1, r.2, r.3);
        prop_assert!(((p.area() - (r.2 - r.0) * (r.3 - r.1)) / p.area()).abs() < 1e-12);
        let c = p.centroid();
        prop_assert!((c.x - 0.5 * (r.0 + r.2)).abs() < 1e-9 && (c.y - 0.5 * (r.1 + r.3)).abs() < 1e-9);
        let inside = px > r.0 && px < r.2 && py > r.1 && py < r.3;
        let edge = [px - r.0, r.2 - px, py - r.1, r.3 - py].iter().any(|d| d.abs() < 1e-9);
        if !edge {
            prop_assert_eq!(p.contains(Vec2::new(px, py)), inside);
        }
    }

    #[test]
    fn convex_iou_matches_rectangle_overlap(a in rect(), b in rect()) {
        let (pa, pb) = (Polygon::rect(a.0, a.1, a.2, a.3), Polygon::rect(b.0, b.1, b.2, b.3));
        let inter = rect_overlap(a, b);
        let want = inter / (pa.area() + pb.area() - inter);
        prop_assert!((pa.convex_iou(&pb) - want).abs() < 1e-9);
        prop_assert!((pa.convex_iou(&pb) - pb.convex_iou(&pa)).abs() < 1e-12);
        prop_assert!((pa.convex_iou(&pa) - 1.0).abs() < 1e-12);

        let (ba, bb) = (
            BoxRect { min: Vec2::new(a.0, a.1), max: Vec2::new(a.2, a.3) },
            BoxRect { min: Vec2::new(b.0, b.1), max: Vec2::new(b.2, b.3) },
        );
        prop_assert!((ba.iou(&bb) - want).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ba.iou(&bb)));
    }

    #[test]
    fn winner_has_the_most_votes(counts in prop::collection::vec(0u32..6, SemanticClass::COUNT)) {
        let votes = VoteCounts(counts.clone().try_into().unwrap());
        match winner_take_all(&votes) {
            Err(_) => prop_assert!(counts.iter().all(|&c| c == 0)),
            Ok(w) => {
                let max = *counts.iter().max().unwrap();
                let first = counts.iter().position(|&c| c == max).unwrap();
                prop_assert_eq!(w.id() as usize, first);
            }
        }
    }

    #[test]
    fn average_precision_matches_oracle(v in prop::collection::vec((0u8..6, any::<bool>()), 1..30)) {
        // coarse scores force ties
        let scores: Vec<f64> = v.iter().map(|x| f64::from(x.0) / 5.0).collect();
        let pos: Vec<bool> = v.iter().map(|x| x.1).collect();
        let ap = average_precision(&scores, &pos);
        prop_assert!((ap - ap_oracle(&scores, &pos)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn metrics_ignore_record_order(recs in records(4), seed in any::<u64>()) {
        let a = compute_metrics(&recs, 4).unwrap();
        let mut shuffled = recs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 1) >> 7) as usize % (i + 1));
        }
        let b = compute_metrics(&shuffled, 4).unwrap();
        prop_assert!((a.map - b.map).abs() < 1e-12);
        prop_assert_eq!(a.macro_avg_precision, b.macro_avg_precision);
        prop_assert_eq!(a.micro_avg_precision, b.micro_avg_precision);
    }

    #[test]
    fn micro_precision_is_accuracy(recs in records(5)) {
        let m = compute_metrics(&recs, 5).unwrap();
        prop_assert_eq!(m.micro_avg_precision, accuracy(&recs));
    }

    #[test]
    fn monotone_score_transform_keeps_metrics(recs in records(3)) {
        let a = compute_metrics(&recs, 3).unwrap();
        let moved: Vec<PredictionRecord> = recs
            .iter()
            .map(|r| PredictionRecord::new(r.class_scores.iter().map(|s| (3.0 * s).exp() - 1.0).collect(), r.gt, r.sample_id, 0))
            .collect();
        let b = compute_metrics(&moved, 3).unwrap();
        prop_assert!((a.map - b.map).abs() < 1e-12);
        prop_assert_eq!(a.macro_avg_precision, b.macro_avg_precision);
        prop_assert_eq!(a.micro_avg_precision, b.micro_avg_precision);
    }
}
