use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use realexp::coalition::{estimate_similarity, Coalition, ValueFunction};
use realexp::forest::{self, tree_gain_importance, EnsembleForest, ForestParams};
use realexp::perturbation::{
    analytic_variance, build_design, empirical_variance, exp_weight, generate_masks, masked_count, similarity, Mask,
    MaskPolicy, PerturbationSet,
};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

#[test]
fn fixed_count_masks_exactly_floor_alpha_n() {
    let masks = generate_masks(10, 3, 0.3, MaskPolicy::FixedCount, 1).unwrap();
    assert!(masks.iter().all(|m| m.masked_count() == 3));
    let masks = generate_masks(7, 200, 0.3, MaskPolicy::FixedCount, 2).unwrap();
    assert!(masks.iter().all(|m| m.masked_count() == 2));
    assert_eq!(masked_count(224 / 7 * 7, 0.3), 67);
}

#[test]
fn bernoulli_mean_within_three_standard_errors() {
    let masks = generate_masks(20, 10_000, 0.3, MaskPolicy::Bernoulli, 5).unwrap();
    let total = 20.0 * 10_000.0;
    let masked: usize = masks.iter().map(Mask::masked_count).sum();
    let mean = masked as f64 / total;
    let se = (0.3 * 0.7 / total).sqrt();
    assert!((mean - 0.3).abs() < 3.0 * se, "mean {mean}");
}

#[test]
fn mc_rate_keeps_the_marginal() {
    let masks = generate_masks(20, 20_000, 0.2, MaskPolicy::MonteCarloRate { sigma_q2: 0.03 }, 6).unwrap();
    let mean = masks.iter().map(Mask::masked_count).sum::<usize>() as f64 / (20.0 * 20_000.0);
    assert!((mean - 0.2).abs() < 0.005, "mean {mean}");
    assert!(generate_masks(20, 10, 0.2, MaskPolicy::MonteCarloRate { sigma_q2: 0.2 }, 6).is_err());
}

#[test]
fn invalid_ratios() {
    assert!(generate_masks(10, 5, 0.31, MaskPolicy::Bernoulli, 0).is_err());
    assert!(generate_masks(10, 5, 0.0, MaskPolicy::Bernoulli, 0).is_err());
    assert!(generate_masks(3, 5, 0.3, MaskPolicy::FixedCount, 0).is_err());
}

#[test]
fn masks_are_seed_reproducible() {
    for policy in [MaskPolicy::FixedCount, MaskPolicy::Bernoulli, MaskPolicy::MonteCarloRate { sigma_q2: 0.05 }] {
        let a = generate_masks(12, 50, 0.25, policy, 77).unwrap();
        assert_eq!(a, generate_masks(12, 50, 0.25, policy, 77).unwrap());
        assert_ne!(a, generate_masks(12, 50, 0.25, policy, 78).unwrap());
    }
}

#[test]
fn independent_mask_columns_have_small_similarity() {
    let masks = generate_masks(6, 20_000, 0.3, MaskPolicy::Bernoulli, 3).unwrap();
    // a vanishing lambda leaves the raw indicators, which are independent
    let s = estimate_similarity(&build_design(masks.clone(), None, 1e-9).unwrap()).unwrap();
    let bound = 4.0 / (20_000f64).sqrt();
    for i in 0..6 {
        for j in (i + 1)..6 {
            assert!(s.get(i, j) < bound, "s[{i}][{j}] = {}", s.get(i, j));
        }
    }
    // the per-row weight depends on the masked count, which couples the weighted columns
    let weighted = estimate_similarity(&build_design(masks, None, 1.0).unwrap()).unwrap();
    assert!(weighted.get(0, 1) > s.get(0, 1));
}

#[test]
fn duplicated_mask_columns_have_unit_similarity() {
    let masks: Vec<Mask> = generate_masks(4, 300, 0.25, MaskPolicy::Bernoulli, 4)
        .unwrap()
        .into_iter()
        .map(|m| {
            let mut kept = m.as_slice().to_vec();
            kept[3] = kept[1];
            Mask::new(kept)
        })
        .collect();
    let s = estimate_similarity(&build_design(masks, None, 0.25).unwrap()).unwrap();
    assert_eq!(s.get(1, 3), 1.0);
}

#[test]
fn fixed_policy_variance_matches_closed_form() {
    let c = [0.5, 1.5, 1.0, 2.0, 0.25, 0.75, 1.25, 1.75, 0.9, 1.1];
    let r = empirical_variance(&c, 2.0, 10, 0.3, 0.0, 40_000, 12).unwrap();
    let a = analytic_variance(&c, 2.0, 10, 0.3, 0.0).unwrap();
    assert!((r.empirical_fixed.unwrap() / a.analytic_fixed - 1.0).abs() < 0.05);
    assert!((r.empirical_random.unwrap() / a.analytic_random - 1.0).abs() < 0.05);
}

#[test]
fn design_json_round_trip() {
    let masks = generate_masks(5, 20, 0.2, MaskPolicy::FixedCount, 9).unwrap();
    let scores: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
    let design = build_design(masks, Some(scores), 0.25).unwrap().with_seed(9);
    let back = PerturbationSet::from_json(&design.to_json()).unwrap();
    assert_eq!(back, design);
}

#[test]
fn hand_traced_forest_table() {
    let forest = EnsembleForest::load(format!("{FIXTURES}/hand_forest.json")).unwrap();
    let ones = [1.0; 3];
    // coalition bits -> (tree 1 + tree 2) / 2, traced by hand
    let table = [0.5, 2.0, 1.0, 2.0, 2.0, 4.5, 2.5, 4.5];
    for (bits, want) in table.iter().enumerate() {
        let got = forest.coalition_value(&ones, Coalition::from_bits(bits as u64)).unwrap();
        assert_eq!(got, *want, "coalition {bits}");
    }
    let game = forest.game(&ones).unwrap();
    assert_eq!(game.value(Coalition::full(3)), forest.predict(&ones).unwrap());
    assert!(forest.coalition_value(&ones, Coalition::from_bits(8)).is_err());
}

#[test]
fn forest_json_round_trip_and_errors() {
    let forest = EnsembleForest::load(format!("{FIXTURES}/hand_forest.json")).unwrap();
    assert_eq!(EnsembleForest::from_json(&forest.to_json()).unwrap(), forest);
    let bad = forest.to_json().replace("\"n\":3", "\"n\":2");
    assert!(EnsembleForest::from_json(&bad).is_err());
}

/// Ten blocks, only the first two matter. A fixed masked count keeps the row
/// weight constant, so no column carries information about another.
fn two_feature_design(w0: f64, w1: f64, seed: u64) -> PerturbationSet {
    let masks = generate_masks(10, 3000, 0.3, MaskPolicy::FixedCount, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = masks
        .iter()
        .map(|m| {
            let x = m.indicator();
            w0 * x[0] + w1 * x[1] + 0.01 * rng.random_range(-1.0..1.0)
        })
        .collect();
    build_design(masks, Some(scores), 0.25).unwrap()
}

/// Expected gain ratio of feature 0 to feature 1 for `w0 x0 + w1 x1` when
/// exactly `m` of `n` blocks are masked. Masking one block makes every other
/// one less likely to be masked, so the root split on x0 separates means that
/// differ by `w0 - w1 / (n - 1)`, and x1 splits below it see conditional rates.
fn fixed_count_gain_ratio(w0: f64, w1: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    let p = m / n;
    let gap = w0 - w1 / (n - 1.0);
    let var_masked = (m - 1.0) / (n - 1.0) * (1.0 - (m - 1.0) / (n - 1.0));
    let var_kept = m / (n - 1.0) * (1.0 - m / (n - 1.0));
    p * (1.0 - p) * gap * gap / (w1 * w1 * (p * var_masked + (1.0 - p) * var_kept))
}

#[test]
fn gain_importance_tracks_variance_share() {
    let params = ForestParams { trees: 20, max_depth: 2, min_leaf: 2, seed: 1 };
    for (w0, seed) in [(3f64.sqrt(), 21), (3.0, 22)] {
        let (forest, _) = forest::fit(&two_feature_design(w0, 1.0, seed), params).unwrap();
        let phi = tree_gain_importance(&forest).phi;
        let ratio = phi[0] / phi[1];
        let expected = fixed_count_gain_ratio(w0, 1.0, 10, 3);
        assert!((ratio / expected - 1.0).abs() < 0.1, "ratio {ratio}, expected {expected}");
        assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // without the count coupling the ratio is the plain variance share w0^2 / w1^2
    assert!((fixed_count_gain_ratio(3f64.sqrt(), 1.0, 1_000_000, 300_000) - 3.0).abs() < 1e-4);
}

#[test]
fn linear_surrogate_fidelity() {
    let w = [1.2, -0.7, 2.5, 0.3, -1.8, 0.9, 1.6, -0.4, 0.8, 2.1];
    let masks = generate_masks(10, 500, 0.3, MaskPolicy::FixedCount, 31).unwrap();
    let scores = masks.iter().map(|m| m.indicator().iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
    let design = build_design(masks, Some(scores), 0.25).unwrap();
    let (_, report) = forest::fit(&design, ForestParams { trees: 50, ..ForestParams::default() }).unwrap();
    assert!(report.r2_train >= 0.95, "r2 {}", report.r2_train);
    assert!(!report.r2_degenerate);
    assert_eq!(report.per_tree_depth.len(), 50);
}

#[test]
fn fidelity_does_not_drop_with_more_trees() {
    let w = [1.0, 2.0, 3.0, 0.5, 1.5, 2.5];
    let mut previous = Vec::new();
    for trees in [1, 5, 25] {
        let mut per_seed = Vec::new();
        for seed in 0..5 {
            let masks = generate_masks(6, 300, 0.3, MaskPolicy::Bernoulli, 100 + seed).unwrap();
            let scores = masks.iter().map(|m| m.indicator().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().sin()).collect();
            let design = build_design(masks, Some(scores), 0.25).unwrap();
            let (train, test) = design.split_at(240);
            let (f, _) = forest::fit(&train, ForestParams { trees, max_depth: 6, min_leaf: 2, seed }).unwrap();
            let pred: Vec<f64> = test.design_rows().iter().map(|x| f.predict(x).unwrap()).collect();
            per_seed.push(realexp::evaluation::r_squared(test.scores().unwrap(), &pred).unwrap().value);
        }
        let mean = per_seed.iter().sum::<f64>() / 5.0;
        previous.push(mean);
    }
    assert!(previous[0] <= previous[1] + 1e-9 && previous[1] <= previous[2] + 0.02, "{previous:?}");
}

#[test]
fn forest_fit_is_thread_count_independent() {
    let masks = generate_masks(8, 200, 0.25, MaskPolicy::FixedCount, 41).unwrap();
    let scores = masks.iter().map(|m| m.indicator().iter().enumerate().map(|(j, x)| j as f64 * x).sum()).collect();
    let design = build_design(masks, Some(scores), 0.25).unwrap();
    let fit_in = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| forest::fit(&design, ForestParams { trees: 16, ..ForestParams::default() }).unwrap().0.to_json())
    };
    assert_eq!(fit_in(1), fit_in(4));
}

proptest! {
    #[test]
    fn similarity_is_kept_fraction(kept in prop::collection::vec(any::<bool>(), 1..40)) {
        let mask = Mask::new(kept.clone());
        let s = similarity(&mask);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, kept.iter().filter(|&&k| k).count() as f64 / kept.len() as f64);
    }

    #[test]
    fn weight_increases_with_similarity(a in 0.0f64..=1.0, b in 0.0f64..=1.0, lambda in 0.01f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(exp_weight(lo, lambda).unwrap() <= exp_weight(hi, lambda).unwrap());
        prop_assert_eq!(exp_weight(1.0, lambda).unwrap(), 1.0);
    }

    #[test]
    fn design_rows_are_weighted_indicators(seed in 0u64..1000, n in 4usize..16) {
        let masks = generate_masks(n, 8, 0.25, MaskPolicy::FixedCount, seed).unwrap();
        let design = build_design(masks.clone(), None, 0.25).unwrap();
        for (k, m) in masks.iter().enumerate() {
            let row = design.design_row(k);
            for j in 0..n {
                let want = if m.is_kept(j) { design.weights()[k] } else { 0.0 };
                prop_assert_eq!(row[j], want);
            }
        }
    }
}
