use proptest::prelude::*;

use richards_ms::fine_solver::stopping_criterion;
use richards_ms::grids::{all_neighborhoods, build_grids, canonical_patch_embedding, extract_from_patch};
use richards_ms::metrics::{aggregate, rel_l2_vector};
use richards_ms::msfem_offline::partition_of_unity;
use richards_ms::random_fields::{conductivity, rescale_log_field};
use richards_ms::surrogate::FeatureBounds;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conductivity_is_positive_and_bounded(
        kappa in prop::collection::vec(10.0f64..2000.0, 1..40),
        seed_p in prop::collection::vec(-1e6f64..1e6, 40),
    ) {
        let p = &seed_p[..kappa.len()];
        let c = conductivity(&kappa, p).unwrap();
        for (ci, ki) in c.iter().zip(&kappa) {
            prop_assert!(*ci > 0.0 && ci <= ki && *ci <= 2000.0);
        }
    }

    #[test]
    fn rescaled_field_hits_the_range(ups in prop::collection::vec(-5.0f64..5.0, 2..60)) {
        let k = rescale_log_field(&ups, (10.0, 2000.0));
        let lo = k.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(k.iter().all(|v| (10.0..=2000.0).contains(v)));
        let spread = ups.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - ups.iter().copied().fold(f64::INFINITY, f64::min);
        if spread >= 1e-14 {
            prop_assert!((lo - 10.0).abs() < 1e-9 && (hi - 2000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 5), 1..12)) {
        let b = FeatureBounds::fit(rows.iter().map(Vec::as_slice)).unwrap();
        for r in &rows {
            let z = b.normalize(r);
            prop_assert!(z.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
            for (x, y) in r.iter().zip(b.denormalize(&z)) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn stopping_rule_is_scale_invariant(
        a in prop::collection::vec(-1.0f64..1.0, 1..20),
        d in prop::collection::vec(-1e-3f64..1e-3, 20),
        scale in 1e-3f64..1e3,
    ) {
        let b: Vec<f64> = a.iter().zip(&d).map(|(x, e)| x + e).collect();
        let s1 = stopping_criterion(&b, &a, 1e-6);
        let sa: Vec<f64> = a.iter().map(|x| x * scale).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * scale).collect();
        let s2 = stopping_criterion(&sb, &sa, 1e-6);
        prop_assert_eq!(s1.degenerate, s2.degenerate);
        if !s1.degenerate {
            prop_assert!((s1.rel_change - s2.rel_change).abs() <= 1e-12 * s1.rel_change.max(1.0));
        }
    }

    #[test]
    fn relative_error_is_symmetric_in_scale(t in prop::collection::vec(0.1f64..10.0, 1..20), s in 0.1f64..10.0) {
        let p: Vec<f64> = t.iter().map(|v| v * s).collect();
        prop_assert!((rel_l2_vector(&p, &t).value - (s - 1.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_orders_mean_between_extremes(v in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let r = aggregate(&v, Some(0)).unwrap();
        prop_assert!(r.min <= r.mean && r.mean <= r.max);
        prop_assert_eq!(r.highlight, Some(v[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn partition_of_unity_sums_to_one(coarse in 1usize..4, k in 2usize..5) {
        let (fine, cg) = build_grids(coarse * k, coarse).unwrap();
        let pou = partition_of_unity(&fine, &cg).unwrap();
        for i in 0..fine.n_nodes() {
            let s: f64 = pou.functions.iter().map(|c| c[i]).sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn patch_embedding_inverts(coarse in 1usize..4, k in 2usize..4, fill in -10.0f64..10.0) {
        let (fine, cg) = build_grids(coarse * k, coarse).unwrap();
        for nb in all_neighborhoods(&cg, &fine) {
            let vals: Vec<f64> = (0..nb.n_local()).map(|l| fill + l as f64).collect();
            let patch = canonical_patch_embedding(&nb, &vals).unwrap();
            prop_assert_eq!(patch.len(), (2 * k + 1) * (2 * k + 1));
            prop_assert_eq!(extract_from_patch(&nb, &patch).unwrap(), vals);
        }
    }
}
