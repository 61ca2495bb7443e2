use proptest::prelude::*;
use visbeam_core::codebook::{BeamPair, Codebook};
use visbeam_core::crops::{crop_count, label_image, CropGrid};
use visbeam_core::detector::{bitmap_topk, HeatMap};
use visbeam_core::labeler::{best_pair, quality, Quality, QualityTable};
use visbeam_core::metrics::{grow_rect, iou, latency_report, Rect};
use visbeam_core::scene::{mean_snr_db, render_scene, Camera, Case, LinkBudget, Obstacle, SceneConfig};
use visbeam_core::stage2::{decode_class, encode_pair, stack_bitmaps};

fn loop_count(h: usize, l: usize, w: usize, s: usize) -> (usize, usize, usize) {
    let mut rows = 0;
    let mut top = 0;
    while top + w <= h {
        rows += 1;
        top += s;
    }
    let mut cols = 0;
    let mut left = 0;
    while left + w <= l {
        cols += 1;
        left += s;
    }
    (rows, cols, rows * cols)
}

fn rect() -> impl Strategy<Value = Rect> {
    (0usize..20, 0usize..20, 1usize..8, 1usize..8).prop_map(|(t, l, h, w)| Rect::new(t, l, h, w).unwrap())
}

fn case() -> impl Strategy<Value = Case> {
    (1u8..=5, 1u8..=5).prop_map(|(i, j)| Case::new(i, j).unwrap())
}

fn pair() -> impl Strategy<Value = BeamPair> {
    (0u8..13, 0u8..13).prop_map(|(t, r)| BeamPair::new(2 * t, 2 * r).unwrap())
}

proptest! {
    #[test]
    fn crop_count_matches_loop(h in 1usize..400, l in 1usize..400, w in 1usize..20, s in 1usize..9) {
        match crop_count(h, l, w, s) {
            Ok(got) => prop_assert_eq!(got, loop_count(h, l, w, s)),
            Err(_) => prop_assert!(w > h || w > l),
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in rect(), b in rect()) {
        let x = iou(&a, &b);
        prop_assert_eq!(x, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn quality_decreases_with_nulls(valid in prop::collection::vec(0.1f64..40.0, 1..20), nulls in 0usize..20) {
        let mut s = valid.clone();
        s.extend(std::iter::repeat_n(f64::NAN, nulls));
        let q0: Quality = quality(&s).unwrap();
        s.push(f64::NAN);
        let q1 = quality(&s).unwrap();
        prop_assert!(q1.q < q0.q);
        prop_assert_eq!(q1.nulls, nulls + 1);
        prop_assert_eq!(q1.valid, valid.len());
    }

    #[test]
    fn best_pair_invariant_under_increasing_map(values in prop::collection::vec(-30.0f64..30.0, 169), k in 0.1f64..5.0, c in -10.0f64..10.0) {
        let c33 = Case::new(3, 3).unwrap();
        let pairs = Codebook::azimuth().pairs();
        let mut a = QualityTable::default();
        let mut b = QualityTable::default();
        for (p, v) in pairs.iter().zip(&values) {
            a.insert(c33, *p, Quality { q: *v, valid: 1, nulls: 0 });
            b.insert(c33, *p, Quality { q: k * v + c, valid: 1, nulls: 0 });
        }
        prop_assert_eq!(best_pair(&a, c33).unwrap(), best_pair(&b, c33).unwrap());
    }

    #[test]
    fn snr_is_mirror_symmetric(c in case(), p in pair(), obstacle in 0usize..3) {
        let obstacle = [Obstacle::None, Obstacle::Wood, Obstacle::Cardbox][obstacle];
        let cfg = SceneConfig::desk(Camera::One, obstacle);
        let budget = LinkBudget::default();
        let a = mean_snr_db(&cfg, &budget, c, p).unwrap();
        let b = mean_snr_db(&cfg, &budget, c.mirrored(), p.mirrored()).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn topk_is_nested(values in prop::collection::vec(0.0f64..1.0, 24), k in 1usize..23) {
        let hm = HeatMap::from_vec(4, 6, values).unwrap();
        let small = bitmap_topk(&hm, k).unwrap();
        let big = bitmap_topk(&hm, k + 1).unwrap();
        prop_assert_eq!(small.count(0), k);
        prop_assert!(small.bits().iter().zip(big.bits()).all(|(s, b)| *s <= *b));
    }

    #[test]
    fn grown_rect_holds_centroid_and_solid_blocks(top in 0usize..10, left in 0usize..10, h in 1usize..6, w in 1usize..6) {
        let cells: Vec<(usize, usize)> = (top..top + h).flat_map(|a| (left..left + w).map(move |b| (a, b))).collect();
        let r = grow_rect(&cells, 20, 20).unwrap();
        prop_assert_eq!(r, Rect::new(top, left, h, w).unwrap());
    }

    #[test]
    fn latency_identity(p in 0.01f64..100.0, d in 0.01f64..5.0, n in 1usize..400) {
        let r = latency_report(p, d, n).unwrap();
        prop_assert!((r.sweep_ms - d * n as f64).abs() < 1e-12);
        prop_assert!((r.reduction - (1.0 - p / r.sweep_ms)).abs() < 1e-12);
    }

    #[test]
    fn pair_encoding_round_trips(p in pair()) {
        let c = encode_pair(p).unwrap();
        prop_assert!(c < 169);
        prop_assert_eq!(decode_class(c).unwrap(), p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn crop_labels_ignore_light(c in case(), light in 0.4f64..1.6, cam in 1u8..=2) {
        let cfg = SceneConfig::desk(Camera::from_id(cam).unwrap(), Obstacle::Cardbox);
        let (base, boxes) = render_scene(&cfg, c, 1.0).unwrap();
        let (lit, boxes_lit) = render_scene(&cfg, c, light).unwrap();
        prop_assert_eq!(&boxes, &boxes_lit);
        let grid = CropGrid::new(150, 200, 12, 5).unwrap();
        let a = label_image(base.as_tensor(), &grid, &boxes, 0).unwrap();
        let b = label_image(lit.as_tensor(), &grid, &boxes_lit, 0).unwrap();
        prop_assert!(a.iter().map(|x| x.label).eq(b.iter().map(|x| x.label)));
    }

    #[test]
    fn stacking_keeps_each_channel(seed in 0u64..1000) {
        let maps: Vec<_> = (0..3u64)
            .map(|m| {
                let v = (0..24).map(|i| ((i as u64 * 31 + seed * 7 + m * 13) % 17) as f64 / 17.0).collect();
                bitmap_topk(&HeatMap::from_vec(4, 6, v).unwrap(), 5).unwrap()
            })
            .collect();
        let stacked = stack_bitmaps(&maps).unwrap();
        for (k, m) in maps.iter().enumerate() {
            prop_assert_eq!(&stacked.channel(k).unwrap(), m);
        }
    }
}
