use feta_eval::biometry::{mape, measure, BiometryRecord, LandmarkSet, MeasurementKind};
use feta_eval::domain_shift::{fit_ensemble, shapley, ForestConfig, Model};
use feta_eval::metrics::{dice, euler_characteristic, hd95, volume_similarity};
use feta_eval::nifti::{encode_volume, parse_single_file};
use feta_eval::ranking::{rank_scores, ScoreMatrix};
use feta_eval::{Affine, Direction, LabelVolume, Mask, Point3};
use proptest::prelude::*;

fn mask_strategy(max: usize) -> impl Strategy<Value = Mask> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(x, y, z)| {
        proptest::collection::vec(any::<bool>(), x * y * z)
            .prop_map(move |bits| Mask::from_vec([x, y, z], bits).unwrap())
    })
}

fn pair_strategy(max: usize) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(x, y, z)| {
        let n = x * y * z;
        (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n)).prop_map(
            move |(a, b)| (Mask::from_vec([x, y, z], a).unwrap(), Mask::from_vec([x, y, z], b).unwrap()),
        )
    })
}

/// Copies `m` into a larger empty grid at `offset`.
fn embed(m: &Mask, dims: [usize; 3], offset: [usize; 3]) -> Mask {
    let mut out = Mask::empty(dims);
    for [i, j, k] in m.iter_set() {
        out.set(i + offset[0], j + offset[1], k + offset[2], true);
    }
    out
}

fn spacing() -> impl Strategy<Value = [f64; 3]> {
    [0.2f64..3.0, 0.2f64..3.0, 0.2f64..3.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dice_bounded_by_vs_and_symmetric((a, b) in pair_strategy(8)) {
        let d = dice(&a, &b).unwrap();
        let v = volume_similarity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d <= v + 1e-15);
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(v, volume_similarity(&b, &a).unwrap());
        prop_assert_eq!(hd95(&a, &b, [1.0; 3]).unwrap(), hd95(&b, &a, [1.0; 3]).unwrap());
    }

    #[test]
    fn metrics_are_translation_invariant((a, b) in pair_strategy(6), shift in [-3isize..=3, -3isize..=3, -3isize..=3], s in spacing()) {
        let dims = [14; 3];
        let (a, b) = (embed(&a, dims, [4; 3]), embed(&b, dims, [4; 3]));
        let (ta, tb) = (a.translated(shift), b.translated(shift));
        prop_assert_eq!(dice(&a, &b).unwrap(), dice(&ta, &tb).unwrap());
        prop_assert_eq!(volume_similarity(&a, &b).unwrap(), volume_similarity(&ta, &tb).unwrap());
        prop_assert_eq!(euler_characteristic(&a), euler_characteristic(&ta));
        let (h, th) = (hd95(&a, &b, s).unwrap(), hd95(&ta, &tb, s).unwrap());
        match (h, th) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn hd95_scales_with_spacing((a, b) in pair_strategy(8), s in spacing(), c in 0.1f64..10.0) {
        let h = hd95(&a, &b, s).unwrap();
        let hc = hd95(&a, &b, s.map(|v| v * c)).unwrap();
        match (h, hc) {
            (Some(x), Some(y)) => prop_assert!((x * c - y).abs() <= 1e-9 * y.max(1.0)),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn euler_adds_over_separated_parts(a in mask_strategy(6), b in mask_strategy(6)) {
        // a gap of one empty voxel layer keeps the two complexes disjoint
        let dims = [14, 6, 6];
        let ea = embed(&a, dims, [0, 0, 0]);
        let eb = embed(&b, dims, [7, 0, 0]);
        let both = ea.union(&eb).unwrap();
        prop_assert_eq!(euler_characteristic(&both), euler_characteristic(&a) + euler_characteristic(&b));
    }

    #[test]
    fn nifti_round_trip(dims in [1usize..12, 1usize..12, 1usize..12], seed in any::<u64>(), scale in [1u8..8, 1u8..8, 1u8..8], shift in [-50i32..50, -50i32..50, -50i32..50]) {
        let n = dims.iter().product::<usize>();
        let data: Vec<u8> = (0..n as u64).map(|i| (seed.wrapping_mul(i + 1) >> 7) as u8 % 8).collect();
        let affine = Affine::from_scale_translation(scale.map(|s| s as f64 * 0.25), shift.map(|t| t as f64));
        let v = LabelVolume::new(dims, data, affine).unwrap();
        let (back, _) = parse_single_file(&encode_volume(&v).unwrap()).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn fractional_ranks_sum_and_monotone_invariance(raw in proptest::collection::vec(0u8..6, 2..20), a in 0.1f64..5.0, b in -10.0f64..10.0) {
        let scores: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
        let n = scores.len() as f64;
        for dir in [Direction::HigherBetter, Direction::LowerBetter] {
            let r = rank_scores(&scores, dir);
            prop_assert_eq!(r.iter().sum::<f64>(), n * (n + 1.0) / 2.0);
            let transformed: Vec<f64> = scores.iter().map(|s| a * s.powi(3) + b).collect();
            prop_assert_eq!(&r, &rank_scores(&transformed, dir));
            let flipped = match dir { Direction::HigherBetter => Direction::LowerBetter, _ => Direction::HigherBetter };
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert_eq!(&r, &rank_scores(&neg, flipped));
        }
    }

    #[test]
    fn a_worse_team_leaves_the_order_alone(raw in proptest::collection::vec(proptest::collection::vec(0u8..10, 4), 2..8)) {
        let columns: Vec<(String, Direction)> = ["dice", "hd95", "vs", "ed"]
            .iter()
            .zip([Direction::HigherBetter, Direction::LowerBetter, Direction::HigherBetter, Direction::LowerBetter])
            .map(|(n, d)| (n.to_string(), d))
            .collect();
        let scores: Vec<Vec<Option<f64>>> = raw.iter().map(|r| r.iter().map(|&v| Some(v as f64)).collect()).collect();
        let teams: Vec<String> = (0..scores.len()).map(|i| format!("t{i}")).collect();
        let before = ScoreMatrix::new(teams.clone(), columns.clone(), scores.clone()).unwrap().rank();

        let mut with = scores.clone();
        with.push(vec![Some(-1.0), Some(100.0), Some(-1.0), Some(100.0)]);
        let mut more = teams.clone();
        more.push("last".into());
        let after = ScoreMatrix::new(more, columns, with).unwrap().rank();
        prop_assert_eq!(&after.final_rank[..teams.len()], &before.final_rank[..]);
        prop_assert_eq!(after.final_rank[teams.len()], teams.len() + 1);
    }

    #[test]
    fn mape_is_scale_invariant(values in proptest::collection::vec((1.0f64..80.0, 0.5f64..1.5), 1..30), c in 0.01f64..100.0) {
        let mk = |f: &dyn Fn(f64, f64) -> f64| -> Vec<BiometryRecord> {
            values.iter().enumerate().map(|(i, &(y, r))| BiometryRecord::new(format!("c{i}"), MeasurementKind::Tcd, Some(f(y, r)))).collect()
        };
        let m1 = mape(&mk(&|y, r| y * r), &mk(&|y, _| y)).unwrap().value;
        let m2 = mape(&mk(&|y, r| c * y * r), &mk(&|y, _| c * y)).unwrap().value;
        prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
    }

    #[test]
    fn caliper_length_is_rigid_invariant(p in [-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0], q in [-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0], angles in [0.0f64..6.3, 0.0f64..6.3, 0.0f64..6.3], t in [-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0]) {
        prop_assume!((0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>() > 1e-6);
        let (a, b, c) = (angles[0], angles[1], angles[2]);
        let rot = |v: [f64; 3]| -> Point3 {
            let (x, y, z) = (v[0], v[1], v[2]);
            let (x, y) = (a.cos() * x - a.sin() * y, a.sin() * x + a.cos() * y);
            let (y, z) = (b.cos() * y - b.sin() * z, b.sin() * y + b.cos() * z);
            let (z, x) = (c.cos() * z - c.sin() * x, c.sin() * z + c.cos() * x);
            Point3::new(x + t[0], y + t[1], z + t[2])
        };
        let mut before = LandmarkSet::new("c");
        before.insert(MeasurementKind::Bbip, Point3::new(p[0], p[1], p[2]), Point3::new(q[0], q[1], q[2])).unwrap();
        let mut after = LandmarkSet::new("c");
        after.insert(MeasurementKind::Bbip, rot(p), rot(q)).unwrap();
        let (l0, l1) = (measure(&before, MeasurementKind::Bbip).unwrap(), measure(&after, MeasurementKind::Bbip).unwrap());
        prop_assert!((l0 - l1).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shapley_efficiency_on_fitted_forests(seed in any::<u64>(), depth in 1usize..5) {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![4.0 * next(), 18.0 + 20.0 * next(), (2.0 * next()).floor()]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0].sin() + 0.1 * r[1] * r[2] + next()).collect();
        let cfg = ForestConfig { n_trees: 10, max_depth: depth, min_leaf: 3, seed };
        let forest = fit_ensemble(&x, &y, &cfg).unwrap();
        let background = x[..30].to_vec();
        for p in &x[30..40] {
            let a = shapley(&forest, &background, p).unwrap();
            prop_assert!((a.total() - forest.predict(p)).abs() < 1e-9);
        }
    }
}
