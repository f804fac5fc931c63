mod common;

use common::*;
use hmm_influence::reference::{
    chain_marginals, enumeration_log_evidence, enumeration_marginals,
    enumeration_marginals_without, enumeration_path_kld, kld_influence_naive,
    symbol_sum_loo_marginal, windowed_influence_naive,
};
use hmm_influence::{
    forward_backward, forward_star, kld_influence, loo_marginal, theorem_kld, windowed_influence,
    EmissionModel, HmmModel, ObservationSequence,
};
use ndarray::array;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn log_evidence_matches_enumeration_two_states() {
    let mut rng = rng(1);
    for _ in 0..20 {
        let model = random_discrete_model(&mut rng, 2, 3);
        let obs = random_symbols(&mut rng, 4, 3);
        let fb = forward_backward(&model, &obs).unwrap();
        let oracle = enumeration_log_evidence(&model, &obs).unwrap();
        assert!((fb.log_evidence - oracle).abs() <= 1e-12);
    }
}

#[test]
fn marginals_match_enumeration() {
    let mut rng = rng(2);
    for trial in 0..60 {
        let m = 1 + trial % 3;
        let n = 1 + trial % 8;
        let (model, obs) = if trial % 2 == 0 {
            (random_discrete_model(&mut rng, m, 4), random_symbols(&mut rng, n, 4))
        } else {
            (random_gaussian_model(&mut rng, m), random_reals(&mut rng, n))
        };
        let fb = forward_backward(&model, &obs).unwrap();
        let oracle_ev = enumeration_log_evidence(&model, &obs).unwrap();
        assert!((fb.log_evidence - oracle_ev).abs() <= 1e-10);
        let post = fb.posterior_marginals();
        let oracle = enumeration_marginals(&model, &obs).unwrap();
        for (a, b) in post.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
        for i in 0..n {
            assert!((fb.log_evidence_at(i) - fb.log_evidence).abs() <= 1e-9);
        }
    }
}

fn uninformative() -> (HmmModel, ObservationSequence) {
    let model = HmmModel::new(
        vec![0.7, 0.2, 0.1],
        array![[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]],
        EmissionModel::Discrete {
            table: array![[0.2, 0.8], [0.2, 0.8], [0.2, 0.8]],
        },
    )
    .unwrap();
    let obs = ObservationSequence::symbols(vec![0, 1, 1, 0, 1, 0, 0]).unwrap();
    (model, obs)
}

#[test]
fn uninformative_emissions_give_chain_marginals_and_zero_influence() {
    let (model, obs) = uninformative();
    let fb = forward_backward(&model, &obs).unwrap();
    let chain = chain_marginals(&model, obs.len());
    let star = forward_star(&model, &fb);
    for (a, b) in fb.posterior_marginals().iter().zip(chain.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    for j in 0..obs.len() {
        let p = loo_marginal(&star, &fb, j).unwrap();
        for s in 0..3 {
            assert!((p[s] - chain[[j, s]]).abs() < 1e-12);
        }
    }
    let fast = kld_influence(&model, &obs).unwrap();
    let naive = kld_influence_naive(&model, &obs).unwrap();
    for j in 0..obs.len() {
        assert!(fast.k[j].abs() <= 1e-12);
        assert!(naive.k[j].abs() <= 1e-12);
    }
    for h in 1..=obs.len() {
        let w = windowed_influence(&model, &obs, h).unwrap();
        assert!(w.k.iter().all(|k| k.abs() <= 1e-12));
    }
}

#[test]
fn star_forward_gives_leave_one_out_marginal() {
    let mut rng = rng(3);
    for _ in 0..20 {
        let model = random_discrete_model(&mut rng, 3, 3);
        let obs = random_symbols(&mut rng, 6, 3);
        let fb = forward_backward(&model, &obs).unwrap();
        let star = forward_star(&model, &fb);
        for j in 0..6 {
            let p = loo_marginal(&star, &fb, j).unwrap();
            let oracle = enumeration_marginals_without(&model, &obs, j..j + 1).unwrap();
            let by_symbol = symbol_sum_loo_marginal(&model, &obs, j).unwrap();
            for s in 0..3 {
                assert!((p[s] - oracle[[j, s]]).abs() <= 1e-12);
                assert!((p[s] - by_symbol[s]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn loo_marginal_matches_naive_rerun() {
    let mut rng = rng(4);
    for _ in 0..20 {
        let model = random_gaussian_model(&mut rng, 4);
        let obs = random_reals(&mut rng, 40);
        let fast = kld_influence(&model, &obs).unwrap();
        let naive = kld_influence_naive(&model, &obs).unwrap();
        for (a, b) in fast.loo_marginals.iter().zip(naive.loo_marginals.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn influence_equals_full_path_kld() {
    let mut rng = rng(5);
    for _ in 0..30 {
        let model = random_discrete_model(&mut rng, 2, 3);
        let obs = random_symbols(&mut rng, 5, 3);
        let prof = kld_influence(&model, &obs).unwrap();
        for j in 0..5 {
            let oracle = enumeration_path_kld(&model, &obs, j..j + 1).unwrap();
            assert!((prof.k[j] - oracle).abs() <= 1e-10, "{} vs {oracle}", prof.k[j]);
        }
    }
}

#[test]
fn naive_and_fast_agree_on_random_models() {
    let mut rng = rng(6);
    for trial in 0..200 {
        let m = 1 + trial % 5;
        let n = rng.random_range(1..=200);
        let (model, obs) = if trial % 2 == 0 {
            (random_gaussian_model(&mut rng, m), random_reals(&mut rng, n))
        } else {
            (random_discrete_model(&mut rng, m, 4), random_symbols(&mut rng, n, 4))
        };
        let fast = kld_influence(&model, &obs).unwrap();
        let naive = kld_influence_naive(&model, &obs).unwrap();
        let diff = max_abs_diff(&fast.k, &naive.k);
        assert!(diff <= 1e-10, "trial {trial}: n={n} m={m} diff {diff}");
    }
}

#[test]
fn single_observation_closed_form() {
    let mut rng = rng(7);
    let model = random_gaussian_model(&mut rng, 3);
    let obs = ObservationSequence::reals(vec![0.4]).unwrap();
    let fb = forward_backward(&model, &obs).unwrap();
    let post = fb.posterior_marginals();
    let expected: f64 = (0..3)
        .map(|s| model.initial[s] * (model.initial[s] / post[[0, s]]).ln())
        .sum();
    let fast = kld_influence(&model, &obs).unwrap();
    let naive = kld_influence_naive(&model, &obs).unwrap();
    assert!((fast.k[0] - expected).abs() < 1e-14);
    assert!((naive.k[0] - expected).abs() < 1e-14);
}

#[test]
fn whole_sequence_window_is_prior_vs_posterior() {
    let mut rng = rng(8);
    for n in 1..=6 {
        let model = random_discrete_model(&mut rng, 2, 3);
        let obs = random_symbols(&mut rng, n, 3);
        let w = windowed_influence(&model, &obs, n).unwrap();
        let oracle = enumeration_path_kld(&model, &obs, 0..n).unwrap();
        assert_eq!(w.k.len(), 1);
        assert!((w.k[0] - oracle).abs() <= 1e-10);
    }
}

#[test]
fn pair_windows_match_enumeration() {
    let mut rng = rng(9);
    for _ in 0..10 {
        let model = random_discrete_model(&mut rng, 3, 4);
        let obs = random_symbols(&mut rng, 7, 4);
        let w = windowed_influence(&model, &obs, 2).unwrap();
        for j in 0..6 {
            let oracle = enumeration_path_kld(&model, &obs, j..j + 2).unwrap();
            assert!((w.k[j] - oracle).abs() <= 1e-10);
        }
    }
}

#[test]
fn windowed_fast_matches_windowed_naive() {
    let mut rng = rng(10);
    for h in 1..=5 {
        let model = random_gaussian_model(&mut rng, 3);
        let obs = random_reals(&mut rng, 80);
        let fast = windowed_influence(&model, &obs, h).unwrap();
        let naive = windowed_influence_naive(&model, &obs, h).unwrap();
        assert!(max_abs_diff(&fast.k, &naive.k) <= 1e-10);
        assert_eq!(fast.start_labels[0], "1");
        assert_eq!(fast.end_labels[0], h.to_string());
    }
}

#[test]
fn unit_window_is_bitwise_the_profile() {
    let mut rng = rng(11);
    let model = random_gaussian_model(&mut rng, 4);
    let obs = random_reals(&mut rng, 150);
    let prof = kld_influence(&model, &obs).unwrap();
    let w = windowed_influence(&model, &obs, 1).unwrap();
    assert_eq!(prof.k, w.k);
}

#[test]
fn zero_transition_entries_are_handled() {
    // left-to-right chain: α has structural zeros
    let model = HmmModel::new(
        vec![1.0, 0.0, 0.0],
        array![[0.8, 0.2, 0.0], [0.0, 0.7, 0.3], [0.0, 0.0, 1.0]],
        EmissionModel::GaussianHomoscedastic {
            means: vec![0.0, 1.0, 2.0],
            sigma: 0.4,
        },
    )
    .unwrap();
    let obs = ObservationSequence::reals(vec![0.1, -0.2, 0.9, 1.1, 0.8, 2.2, 1.9]).unwrap();
    let fast = kld_influence(&model, &obs).unwrap();
    let naive = kld_influence_naive(&model, &obs).unwrap();
    assert!(fast.k.iter().all(|k| k.is_finite() && *k >= -1e-12));
    assert!(max_abs_diff(&fast.k, &naive.k) <= 1e-10);
    for h in 1..=3 {
        let a = windowed_influence(&model, &obs, h).unwrap();
        let b = windowed_influence_naive(&model, &obs, h).unwrap();
        assert!(max_abs_diff(&a.k, &b.k) <= 1e-10);
    }
}

#[test]
fn discrete_infinite_influence() {
    // observing symbol 1 is only possible from state 1, which the LOO
    // prediction never reaches: p_loo(1)=0 but the reverse case gives +inf
    let model = HmmModel::new(
        vec![0.5, 0.5],
        array![[0.5, 0.5], [0.5, 0.5]],
        EmissionModel::Discrete {
            table: array![[1.0, 0.0], [0.5, 0.5]],
        },
    )
    .unwrap();
    let obs = ObservationSequence::symbols(vec![1, 0, 1]).unwrap();
    let prof = kld_influence(&model, &obs).unwrap();
    // removing x=1 re-admits state 0, which the full posterior excludes
    assert_eq!(prof.k[0], f64::INFINITY);
    assert!(prof.k[1].is_finite());
    let naive = kld_influence_naive(&model, &obs).unwrap();
    assert_eq!(naive.k[0], f64::INFINITY);
    assert!(prof.k.iter().all(|k| !k.is_nan()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theorem_formula_is_scale_free(
        seed in any::<u64>(),
        n in 2usize..40,
        m in 1usize..5,
        scales in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0), 40),
    ) {
        let mut rng = rng(seed);
        let model = random_gaussian_model(&mut rng, m);
        let obs = random_reals(&mut rng, n);
        let fb = forward_backward(&model, &obs).unwrap();
        let star = forward_star(&model, &fb);
        let prof = kld_influence(&model, &obs).unwrap();
        for j in 0..n {
            let (a, b, c) = scales[j];
            let fs: Vec<f64> = star.fstar.row(j).iter().map(|v| v * a.exp()).collect();
            let f: Vec<f64> = fb.fwd.row(j).iter().map(|v| v * b.exp()).collect();
            let bw: Vec<f64> = fb.bwd.row(j).iter().map(|v| v * c.exp()).collect();
            let k = theorem_kld(&fs, &f, &bw);
            prop_assert!((k - prof.k[j]).abs() <= 1e-10, "j={} {} vs {}", j, k, prof.k[j]);
        }
    }

    #[test]
    fn influence_is_nonnegative(seed in any::<u64>(), n in 1usize..60, m in 1usize..6) {
        let mut rng = rng(seed);
        let model = random_gaussian_model(&mut rng, m);
        let obs = random_reals(&mut rng, n);
        let prof = kld_influence(&model, &obs).unwrap();
        prop_assert!(prof.k.iter().all(|&k| k >= -1e-12));
        for row in prof.loo_marginals.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
        for row in prof.marginals.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }
}
