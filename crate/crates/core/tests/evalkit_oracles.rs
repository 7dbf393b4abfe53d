mod common;

use common::metric_oracles::{check_mann_whitney_exact, check_spearman_permutations, check_spearman_ties, check_u_sum_large};
use common::properties::{leakage_case, majority_vote_case, mean_logit_case};
use ntt_core::evalkit::spearman_rank;
use proptest::prelude::*;

#[test]
fn spearman_matches_sum_of_squared_rank_differences() {
    check_spearman_permutations(3).unwrap();
}

#[test]
fn spearman_ties_use_average_ranks() {
    check_spearman_ties().unwrap();
}

#[test]
fn mann_whitney_exact_p_equals_enumeration() {
    // 45 (n1, n2) splits, tied and untied, three draws each
    assert_eq!(check_mann_whitney_exact(11).unwrap(), 270);
}

#[test]
fn u_statistics_sum_to_product() {
    check_u_sum_large(12).unwrap();
}

#[test]
fn leakage_guard_over_random_policies() {
    let built = (0..200).map(|s| leakage_case(s).unwrap()).filter(|b| *b).count();
    assert!(built >= 100, "only {built} of 200 policies produced a manifest");
    println!("{built} of 200 policies produced a manifest");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn leakage_guard_holds(seed in any::<u64>()) {
        prop_assert!(leakage_case(seed).is_ok(), "{:?}", leakage_case(seed));
    }

    #[test]
    fn majority_vote_survives_monotone_transforms(seed in any::<u64>()) {
        prop_assert!(majority_vote_case(seed).is_ok(), "{:?}", majority_vote_case(seed));
    }

    #[test]
    fn mean_logit_metrics_survive_affine_shifts(seed in any::<u64>()) {
        prop_assert!(mean_logit_case(seed).is_ok(), "{:?}", mean_logit_case(seed));
    }

    #[test]
    fn spearman_invariant_under_monotone_maps(xs in proptest::collection::vec(-50.0f64..50.0, 3..25), k in 0.1f64..3.0) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (i as f64 * 0.37).sin() + x * 0.1).collect();
        let warped: Vec<f64> = xs.iter().map(|x| (k * x).exp()).collect();
        match (spearman_rank(&xs, &ys), spearman_rank(&warped, &ys)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }
}
