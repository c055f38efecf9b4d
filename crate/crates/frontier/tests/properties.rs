//! Property tests for the structural invariants: envelope shape,
//! error-blend arithmetic, serialization, and proposal admissibility.

mod common;

use frontier::estimators::propose_partitions;
use frontier::estimators::CapNlsParams;
use frontier::model::{Hyperplane, Partition, PiecewiseLinearModel};
use frontier::selection::{full_set_error, r2_fs, r2_pred};
use frontier::simlab::derive_seed;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_model() -> impl Strategy<Value = PiecewiseLinearModel> {
    (1usize..=4, 1usize..=3).prop_flat_map(|(k, d)| {
        let plane = (
            -1.0f64..1.0,
            prop::collection::vec(0.0f64..2.0, d),
        )
            .prop_map(|(intercept, slopes)| Hyperplane { intercept, slopes });
        prop::collection::vec(plane, k).prop_map(move |hyperplanes| {
            let n = 2 * k;
            let assignment: Vec<usize> = (0..n).map(|i| i % k).collect();
            PiecewiseLinearModel {
                hyperplanes,
                partition: Partition::new(assignment, k, 1).unwrap(),
                learning_mse: 0.0,
                feasibility_tolerance: 1e-6,
            }
        })
    })
}

fn arb_point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, d)
}

proptest! {
    /// The min-envelope is nondecreasing in every coordinate and midpoint
    /// concave: both follow from nonnegative slopes plus the pointwise
    /// minimum, and both must survive any numerical shortcut in predict.
    #[test]
    fn envelope_is_monotone_and_concave(
        (model, x, y) in arb_model().prop_flat_map(|m| {
            let d = m.d();
            (Just(m), arb_point(d), arb_point(d))
        })
    ) {
        let fx = model.predict_one(&x).unwrap();
        let fy = model.predict_one(&y).unwrap();
        // coordinatewise dominance
        let upper: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect();
        let f_up = model.predict_one(&upper).unwrap();
        prop_assert!(f_up >= fx.min(fy) - 1e-12);
        prop_assert!(f_up >= fx - 1e-12 || f_up >= fy - 1e-12);
        let dominated: Vec<f64> = x.iter().map(|a| a * 0.5).collect();
        prop_assert!(model.predict_one(&dominated).unwrap() <= fx + 1e-12);
        // midpoint concavity
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let f_mid = model.predict_one(&mid).unwrap();
        prop_assert!(f_mid >= 0.5 * (fx + fy) - 1e-12);
    }

    /// The full-set error is the exact population blend of its two parts.
    #[test]
    fn full_set_error_is_the_population_blend(
        mse_rlt in 0.0f64..10.0,
        mse_learn in 0.0f64..10.0,
        optimism in 0.0f64..1.0,
        n in 2usize..500,
        frac in 0.01f64..=1.0,
    ) {
        let n_l = ((frac * n as f64).floor() as usize).clamp(1, n);
        let got = full_set_error(mse_rlt, mse_learn, optimism, n_l, n);
        let want = ((n - n_l) as f64 * mse_rlt + n_l as f64 * (mse_learn + optimism)) / n as f64;
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        // census leaves only the in-sample part
        let census = full_set_error(mse_rlt, mse_learn, optimism, n, n);
        prop_assert!((census - (mse_learn + optimism)).abs() <= 1e-15 * (mse_learn + optimism).max(1.0));
    }

    /// R-squared estimates are always clipped into [0, 1].
    #[test]
    fn r2_always_in_unit_interval(err in 0.0f64..100.0, var in 0.001f64..10.0) {
        let a = r2_fs(err, var).unwrap();
        let b = r2_pred(err, var).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
    }

    /// Serializing a model and reading it back preserves its predictions.
    #[test]
    fn model_json_roundtrip(
        (model, x) in arb_model().prop_flat_map(|m| {
            let d = m.d();
            (Just(m), arb_point(d))
        })
    ) {
        let json = model.to_json();
        let back = PiecewiseLinearModel::from_json(&json).unwrap();
        prop_assert_eq!(back.k(), model.k());
        prop_assert_eq!(back.partition.assignment.clone(), model.partition.assignment.clone());
        let a = model.predict_one(&x).unwrap();
        let b = back.predict_one(&x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    /// Every proposed split keeps both children at or above the size floor
    /// and only reassigns observations of the split region.
    #[test]
    fn proposals_respect_child_size_floor(seed in 0u64..1000, n in 12usize..30, d in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = common::random_dataset(n, d, &mut rng);
        let params = CapNlsParams { rng_seed: seed, ..CapNlsParams::default_for(d) };
        let current = Partition::single_region(n);
        let candidates = propose_partitions(&current, &data, &params, &mut rng);
        let min_child = params.min_child_size();
        for c in &candidates {
            prop_assert_eq!(c.partition.k, current.k + 1);
            let sizes = c.partition.region_sizes();
            prop_assert!(sizes[c.region] >= min_child, "parent child {}", sizes[c.region]);
            prop_assert!(sizes[current.k] >= min_child, "new child {}", sizes[current.k]);
            for (i, (&a, &b)) in current.assignment.iter().zip(&c.partition.assignment).enumerate() {
                prop_assert!(a == b || (a == c.region && b == current.k), "obs {i} moved {a}->{b}");
            }
        }
    }

    /// Seed derivation is a pure function and separates nearby streams.
    #[test]
    fn derived_seeds_are_stable_and_distinct(base in any::<u64>(), a in 0u64..64, b in 0u64..64) {
        prop_assert_eq!(derive_seed(base, &[a, b]), derive_seed(base, &[a, b]));
        if a != b {
            prop_assert_ne!(derive_seed(base, &[a]), derive_seed(base, &[b]));
        }
    }
}
