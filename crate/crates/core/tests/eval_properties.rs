use proptest::prelude::*;
use rotbox_iou::eval::{
    assign_difficulty, evaluate, map_thresholds, match_frame, Detection, Difficulty, EvalConfig,
    EvalMode, GtObject, Outcome,
};
use rotbox_iou::{AABox2, Box3};

// Ground truths sit on a 12 m grid and are at most 4 m long, so they never
// overlap and no detection can reach IoU 0.5 with two of them.
fn gt_strategy(frame: usize, slot: usize) -> impl Strategy<Value = GtObject> {
    (
        1.5..4.0f64,
        1.0..2.0f64,
        -3.0..3.0f64,
        20.0..80.0f64,
        0u8..3,
        0.0..0.4f64,
    )
        .prop_map(move |(w, l, yaw, px, occ, trunc)| GtObject {
            frame_id: format!("{frame:06}"),
            class_label: "Car".into(),
            bbox: Box3::new(12.0 * slot as f64, 0.0, 0.75, w, l, 1.5, yaw).unwrap(),
            image_bbox: AABox2::new(100.0 * slot as f64, 0.0, 100.0 * slot as f64 + 50.0, px)
                .unwrap(),
            truncation: trunc,
            occlusion: occ,
        })
}

fn jitter(g: &GtObject, dx: f64, dyaw: f64, scale: f64, score: f64) -> Detection {
    let b = g.bbox;
    Detection {
        frame_id: g.frame_id.clone(),
        class_label: "Car".into(),
        bbox: Box3::new(
            b.cx() + dx,
            b.cy() - 0.5 * dx,
            b.cz(),
            b.w() * scale,
            b.l(),
            b.h(),
            b.yaw() + dyaw,
        )
        .unwrap(),
        image_bbox: g.image_bbox,
        score,
    }
}

#[derive(Debug, Clone)]
struct Dataset {
    gts: Vec<GtObject>,
    dets: Vec<Detection>,
}

fn dataset() -> impl Strategy<Value = Dataset> {
    let frame = |f: usize| {
        (1usize..4).prop_flat_map(move |n| {
            let gts: Vec<_> = (0..n).map(|s| gt_strategy(f, s)).collect();
            let jit = prop::collection::vec(
                (
                    any::<bool>(),
                    -0.6..0.6f64,
                    -0.3..0.3f64,
                    0.8..1.2f64,
                    1u8..10,
                ),
                n,
            );
            let fps = prop::collection::vec((0.0..40.0f64, -4.0..4.0f64, 1u8..10), 0..3);
            (gts, jit, fps)
        })
    };
    (1usize..4)
        .prop_flat_map(move |frames| (0..frames).map(frame).collect::<Vec<_>>())
        .prop_map(|frames| {
            let mut gts = Vec::new();
            let mut dets = Vec::new();
            for (gs, jit, fps) in frames {
                for (g, (keep, dx, dyaw, scale, s)) in gs.iter().zip(jit) {
                    if keep {
                        dets.push(jitter(g, dx, dyaw, scale, f64::from(s) / 10.0));
                    }
                }
                for (x, y, s) in fps {
                    dets.push(Detection {
                        frame_id: gs[0].frame_id.clone(),
                        class_label: "Car".into(),
                        bbox: Box3::new(x, y, 0.75, 3.0, 1.5, 1.5, 0.0).unwrap(),
                        image_bbox: AABox2::new(0.0, 0.0, 10.0, 10.0).unwrap(),
                        score: f64::from(s) / 10.0,
                    });
                }
                gts.extend(gs);
            }
            Dataset { gts, dets }
        })
}

fn config(mode: EvalMode) -> EvalConfig {
    let mut c = EvalConfig::new("Car", mode);
    c.thresholds = map_thresholds();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ap_non_increasing_in_threshold(ds in dataset(), mode in prop_oneof![Just(EvalMode::Bev), Just(EvalMode::Full3D)]) {
        let r = evaluate(&ds.gts, &ds.dets, &config(mode)).unwrap();
        for d in Difficulty::LEVELS {
            let aps: Vec<Option<f64>> = map_thresholds().iter().map(|&t| r.ap_at(d, t)).collect();
            for w in aps.windows(2) {
                if let (Some(a), Some(b)) = (w[0], w[1]) {
                    prop_assert!(b <= a, "{d:?}: {aps:?}");
                }
            }
        }
    }

    #[test]
    fn duplicating_detections_never_helps(ds in dataset()) {
        let base = evaluate(&ds.gts, &ds.dets, &config(EvalMode::Bev)).unwrap();
        let doubled: Vec<Detection> = ds.dets.iter().chain(&ds.dets).cloned().collect();
        let dup = evaluate(&ds.gts, &doubled, &config(EvalMode::Bev)).unwrap();
        for (a, b) in base.ap.iter().zip(&dup.ap) {
            if let (Some(x), Some(y)) = (a.ap, b.ap) {
                prop_assert!(y <= x + 1e-12, "{:?} {}: {x} -> {y}", a.difficulty, a.threshold);
            }
        }
    }

    #[test]
    fn removing_a_false_positive_never_hurts(ds in dataset(), pick in any::<prop::sample::Index>()) {
        let (level, t) = (Difficulty::Moderate, 0.7);
        let mut fps = Vec::new();
        let mut frames: Vec<&str> = ds.gts.iter().map(|g| g.frame_id.as_str()).collect();
        frames.dedup();
        for f in frames {
            let gts: Vec<&GtObject> = ds.gts.iter().filter(|g| g.frame_id == f).collect();
            let idx: Vec<usize> = (0..ds.dets.len()).filter(|&i| ds.dets[i].frame_id == f).collect();
            let dets: Vec<&Detection> = idx.iter().map(|&i| &ds.dets[i]).collect();
            let ignored: Vec<bool> = gts.iter().map(|g| assign_difficulty(g) > level).collect();
            let m = match_frame(&dets, &gts, &ignored, t, EvalMode::Bev);
            fps.extend(idx.iter().zip(&m.outcomes).filter(|(_, o)| **o == Outcome::FalsePositive).map(|(i, _)| *i));
        }
        prop_assume!(!fps.is_empty());
        let drop = fps[pick.index(fps.len())];
        let fewer: Vec<Detection> = ds.dets.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, d)| d.clone()).collect();
        let cfg = config(EvalMode::Bev);
        let before = evaluate(&ds.gts, &ds.dets, &cfg).unwrap().ap_at(level, t);
        let after = evaluate(&ds.gts, &fewer, &cfg).unwrap().ap_at(level, t);
        if let (Some(b), Some(a)) = (before, after) {
            prop_assert!(a >= b, "{b} -> {a}");
        }
    }

    #[test]
    fn map_is_mean_of_sweep(ds in dataset()) {
        let r = evaluate(&ds.gts, &ds.dets, &EvalConfig::new("Car", EvalMode::Full3D)).unwrap();
        for m in &r.map {
            if let Some(map) = m.map {
                let mean = m.sweep.iter().map(|a| a.unwrap()).sum::<f64>() / 10.0;
                prop_assert!((map - mean).abs() <= 1e-12);
                prop_assert!((0.0..=100.0).contains(&map));
            }
        }
    }

    #[test]
    fn frame_order_does_not_matter(ds in dataset()) {
        let reorder = |dets: &[Detection]| -> Vec<Detection> {
            let mut frames: Vec<&str> = dets.iter().map(|d| d.frame_id.as_str()).collect();
            frames.dedup();
            frames.reverse();
            frames.iter().flat_map(|f| dets.iter().filter(move |d| d.frame_id == *f)).cloned().collect()
        };
        let mut gts = ds.gts.clone();
        gts.reverse();
        let a = evaluate(&ds.gts, &ds.dets, &config(EvalMode::Bev)).unwrap();
        let b = evaluate(&gts, &reorder(&ds.dets), &config(EvalMode::Bev)).unwrap();
        let aps = |r: &rotbox_iou::eval::EvalReport| r.ap.iter().map(|e| e.ap).collect::<Vec<_>>();
        prop_assert_eq!(aps(&a), aps(&b));
    }
}
