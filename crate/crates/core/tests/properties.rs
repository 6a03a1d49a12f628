use mvdepth::augmentation::{flip_sample, FlipAxis};
use mvdepth::classical_depth::{extract, parabola_offset};
use mvdepth::cost_volume::{build_cost_volume, build_cost_volume_with_threads, CostVolume, Frame};
use mvdepth::dataset_io::{render_scene, SyntheticScene};
use mvdepth::depthnet::checkpoint::{decode_checkpoint, encode_checkpoint};
use mvdepth::depthnet::{build_network, WidthScale};
use mvdepth::geometry::{relative_pose, sample_inverse_depths, warp_matrix, Intrinsics, Pose};
use mvdepth::metrics::evaluate;
use mvdepth::{DepthMap, Image};
use nalgebra::{Rotation3, Vector2, Vector3};
use proptest::prelude::*;

fn small_frames(seed: u64, dx: f64) -> Vec<Frame> {
    let intr = SyntheticScene::standard_intrinsics(32, 24);
    let trajectory = vec![
        Pose::identity(),
        Pose::from_translation(Vector3::new(dx, 0.0, 0.0)),
        Pose::from_translation(Vector3::new(-dx, 0.05, 0.0)),
    ];
    let scene = SyntheticScene::desk(intr, trajectory, seed);
    (0..3).map(|i| render_scene(&scene, i).unwrap().0).collect()
}

fn random_volume(w: usize, h: usize, nd: usize, seed: u64) -> CostVolume {
    let n = w * h * nd;
    let costs = (0..n)
        .map(|i| ((i as u64 + 1).wrapping_mul(seed | 1).wrapping_mul(2654435761) % 997) as f64 / 997.0)
        .collect();
    let hyp = sample_inverse_depths(0.5, 50.0, nd).unwrap();
    CostVolume::from_parts(w, h, costs, vec![1; n], hyp).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warp_agrees_with_backproject_transform_project(
        f in 100.0f64..600.0,
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..0.5,
        tx in -0.5f64..0.5, ty in -0.5f64..0.5, tz in -0.3f64..0.3,
        depth in 0.5f64..50.0,
        u in 0.0f64..320.0, v in 0.0f64..256.0,
    ) {
        let intr = Intrinsics::new(f, f, 160.0, 128.0, 320, 256).unwrap();
        let rel = Pose::from_rotation(Rotation3::new(Vector3::new(ax, ay, az) * angle), Vector3::new(tx, ty, tz));
        let point = rel.transform_point(&intr.backproject(&Vector2::new(u, v), depth).unwrap());
        prop_assume!(point.z > 0.1);
        let chained = intr.project(&point).unwrap();
        let (x, y) = warp_matrix(&intr, &rel, depth).apply(u, v).unwrap();
        prop_assert!((x - chained.x).abs() < 1e-9 && (y - chained.y).abs() < 1e-9);
    }

    #[test]
    fn relative_pose_of_self_is_identity(
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
        tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
    ) {
        let pose = Pose::from_rotation(Rotation3::new(Vector3::new(ax, ay, az)), Vector3::new(tx, ty, tz));
        let rel = relative_pose(&pose, &pose);
        prop_assert!((rel.rotation() - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!(rel.translation().amax() < 1e-12);
    }

    #[test]
    fn hypotheses_are_strictly_increasing_and_uniform(
        d_min in 0.05f64..5.0, span in 0.1f64..100.0, n in 2usize..200,
    ) {
        let h = sample_inverse_depths(d_min, d_min + span, n).unwrap();
        let inv = h.inverse_depths();
        prop_assert_eq!(inv.len(), n);
        for w in inv.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!((w[1] - w[0] - h.step()).abs() <= 1e-9 * h.step().max(1.0));
        }
        prop_assert_eq!(inv[0], 1.0 / (d_min + span));
        prop_assert_eq!(inv[n - 1], 1.0 / d_min);
    }

    #[test]
    fn parabola_offset_stays_within_half_a_bin(
        a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0,
    ) {
        let o = parabola_offset(a, b, c);
        prop_assert!((-0.5..=0.5).contains(&o));
    }

    #[test]
    fn flip_is_an_involution_and_commutes_with_extraction(
        w in 1usize..7, h in 1usize..7, nd in 2usize..6, seed in any::<u64>(), vertical in any::<bool>(),
    ) {
        let vol = random_volume(w, h, nd, seed);
        let img = Image::from_fn(w, h, 1, |x, y, _| (x * 31 + y * 7) as f64);
        let gt = DepthMap::from_fn(w, h, |x, y| ((x + y) % 3 != 0).then_some(1.0 + x as f64));
        let axis = if vertical { FlipAxis::Vertical } else { FlipAxis::Horizontal };
        let (fv, fi, fg) = flip_sample(&vol, &img, &gt, axis).unwrap();
        let (bv, bi, bg) = flip_sample(&fv, &fi, &fg, axis).unwrap();
        prop_assert_eq!(bv, vol.clone());
        prop_assert_eq!(bi, img.clone());
        prop_assert_eq!(bg, gt);
        let (_, _, flipped) = flip_sample(&vol, &img, &extract(&vol), axis).unwrap();
        prop_assert_eq!(extract(&fv), flipped);
    }

    #[test]
    fn metrics_of_a_perfect_prediction_are_zero(
        w in 1usize..9, h in 1usize..9, seed in any::<u64>(),
    ) {
        let gt = DepthMap::from_fn(w, h, |x, y| {
            Some(0.5 + ((seed ^ (x * 13 + y * 7) as u64) % 100) as f64 / 10.0)
        });
        let r = evaluate(&gt, &gt).unwrap();
        prop_assert_eq!(r.l1_rel, 0.0);
        prop_assert_eq!(r.l1_inv, 0.0);
        prop_assert_eq!(r.sc_inv, 0.0);
        prop_assert_eq!(r.correct_pct, 100.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn volume_ignores_measurement_order_and_worker_count(seed in 0u64..1000, dx in 0.05f64..0.2) {
        let frames = small_frames(seed, dx);
        let hyp = sample_inverse_depths(0.5, 10.0, 12).unwrap();
        let forward = build_cost_volume(&frames[0], &frames[1..], &hyp).unwrap();
        let reversed: Vec<Frame> = frames[1..].iter().rev().cloned().collect();
        let backward = build_cost_volume_with_threads(&frames[0], &reversed, &hyp, 3).unwrap();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn duplicate_measurements_add_nothing(seed in 0u64..1000) {
        let frames = small_frames(seed, 0.1);
        let hyp = sample_inverse_depths(0.5, 10.0, 8).unwrap();
        let once = build_cost_volume(&frames[0], &frames[1..2], &hyp).unwrap();
        let twice = build_cost_volume(&frames[0], &[frames[1].clone(), frames[1].clone()], &hyp).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn checkpoint_roundtrip_is_stable(nd in 2usize..8, den in 8u32..33, seed in any::<u64>()) {
        let mut net = build_network(nd, WidthScale::new(1, den).unwrap(), 2.0).unwrap();
        net.initialize(seed);
        let bytes = encode_checkpoint(&net).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        prop_assert_eq!(back.parameter_count(), net.parameter_count());
    }
}
