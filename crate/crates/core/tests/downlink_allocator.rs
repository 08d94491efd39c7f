mod common;

use common::oracles::kl_logspace;
use mapf_airsim::downlink::{assign_priorities, kl_gap, select_dl};
use mapf_airsim::policy::{ActionLogits, LegalityMask};
use mapf_airsim::rng::{Domain, Streams};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn kl_uniform_against_boosted_matches_reference() {
    // ln(e^10 + 4) − 2 − ln 5, evaluated at 60 digits
    let want = 6.390_743_670_797_716_606_341_762_127_734_5;
    let got = kl_gap(&ActionLogits::ZERO, &ActionLogits([10.0, 0.0, 0.0, 0.0, 0.0]), &LegalityMask([true; 5]));
    assert!((got - want).abs() < 1e-9, "{got}");
}

#[test]
fn kl_matches_logspace_oracle_on_random_pairs() {
    let streams = Streams::new(5);
    for case in 0..100u64 {
        let mut rng = streams.stream(Domain::SchedulerMc, case, 9, 0);
        let a: [f64; 5] = std::array::from_fn(|_| rng.random_range(-6.0..6.0));
        let b: [f64; 5] = std::array::from_fn(|_| rng.random_range(-6.0..6.0));
        let mut mask: [bool; 5] = std::array::from_fn(|_| rng.random_bool(0.7));
        mask[0] = true;
        let got = kl_gap(&ActionLogits(a), &ActionLogits(b), &LegalityMask(mask));
        let want = kl_logspace(&a, &b, &mask);
        assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn dominant_score_ranks_first_at_plackett_luce_rate() {
    let scores = [50.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let streams = Streams::new(3);
    let draws = 10_000;
    let first = (0..draws).filter(|&e| assign_priorities(&scores, 1e-3, &streams, e)[0] == 0).count();
    let p = 50.0 / 55.0;
    let f = first as f64 / draws as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((f - p).abs() < 3.0 * sigma, "{f} vs {p}");
}

#[test]
fn second_place_follows_successive_sampling() {
    // P(agent 1 second) = Σ_j≠1 P(j first)·w1/(W − w_j)
    let scores = [4.0, 3.0, 2.0, 1.0];
    let w: f64 = scores.iter().sum();
    let want: f64 = [0usize, 2, 3].iter().map(|&j| scores[j] / w * scores[1] / (w - scores[j])).sum();
    let streams = Streams::new(4);
    let draws = 20_000;
    let hits = (0..draws).filter(|&e| assign_priorities(&scores, 1e-3, &streams, e)[1] == 1).count();
    let f = hits as f64 / draws as f64;
    let sigma = (want * (1.0 - want) / draws as f64).sqrt();
    assert!((f - want).abs() < 3.5 * sigma, "{f} vs {want}");
}

proptest! {
    #[test]
    fn kl_is_non_negative(a in prop::array::uniform5(-20.0f64..20.0), b in prop::array::uniform5(-20.0f64..20.0)) {
        let d = kl_gap(&ActionLogits(a), &ActionLogits(b), &LegalityMask([true; 5]));
        prop_assert!(d >= 0.0);
        prop_assert_eq!(kl_gap(&ActionLogits(a), &ActionLogits(a), &LegalityMask([true; 5])), 0.0);
    }

    #[test]
    fn selection_is_top_scores_by_id(scores in prop::collection::vec(0.0f64..5.0, 0..20), c in 0usize..8) {
        let picked = select_dl(&scores, c);
        prop_assert!(picked.len() <= c);
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
        for &i in &picked {
            prop_assert!(scores[i] > 0.0);
            // nobody left out beats a picked agent
            for j in 0..scores.len() {
                if !picked.contains(&j) {
                    prop_assert!(scores[j] < scores[i] || (scores[j] == scores[i] && j > i) || scores[j] <= 0.0);
                }
            }
        }
    }
}
