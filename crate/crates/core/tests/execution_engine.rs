mod common;

use common::{check_safe, load_map};
use mapf_airsim::execution::{sample_proposal, step, Action, TransitionKernel, WorldState};
use mapf_airsim::map::{Cell, GridMap};
use mapf_airsim::rng::{Domain, Streams};
use mapf_airsim::tasks::random_starts;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn kernel_frequencies_match_epsilon() {
    let k = TransitionKernel::new(0.05, 0.05, 0.0).unwrap();
    let here = Cell::new(5, 5);
    let n = 200_000;
    let mut counts = [0usize; 5];
    let streams = Streams::new(11);
    let mut rng = streams.stream(Domain::Kernel, 0, 0, 0);
    for _ in 0..n {
        let c = sample_proposal(here, Action::Up, &k, &mut rng);
        let a = Action::between(here, c).unwrap_or(Action::Stay);
        counts[a.index()] += 1;
    }
    // forward, stay, left, right, back
    let want = [(Action::Up, 0.90), (Action::Stay, 0.05), (Action::Left, 0.025), (Action::Right, 0.025), (Action::Down, 0.0)];
    for (a, p) in want {
        let f = counts[a.index()] as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * sigma + 1e-12, "{a:?}: {f} vs {p}");
    }
}

fn random_actions(n: usize, rng: &mut impl Rng) -> Vec<Action> {
    (0..n).map(|_| Action::from_index(rng.random_range(0..5))).collect()
}

#[test]
fn dense_random_walk_stays_safe() {
    let map = load_map("random-32-32-20");
    let streams = Streams::new(3);
    let mut state = WorldState::new(random_starts(&map, 64, &streams).unwrap(), vec![Cell::new(0, 0); 64]);
    let k = TransitionKernel::new(0.05, 0.05, 0.0).unwrap();
    let mut rng = streams.stream(Domain::Decision, 0, 0, 0);
    for _ in 0..2_000 {
        let actions = random_actions(64, &mut rng);
        let (next, _) = step(&map, &state, &actions, &k, &streams).unwrap();
        check_safe(&map, &state.positions, &next.positions).unwrap();
        state = next;
    }
}

#[test]
fn rejects_wrong_action_count() {
    let map = GridMap::open(3, 3);
    let state = WorldState::new(vec![Cell::new(0, 0)], vec![Cell::new(2, 2)]);
    assert!(step(&map, &state, &[], &TransitionKernel::DETERMINISTIC, &Streams::new(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_steps_are_safe(seed in any::<u64>(), n in 1usize..30, eps in 0.0f64..0.3) {
        let map = GridMap::from_rows(&["......", ".@..@.", "......", "..@...", "......", "......"]).unwrap();
        let streams = Streams::new(seed);
        let starts = random_starts(&map, n, &streams).unwrap();
        let mut state = WorldState::new(starts, vec![Cell::new(0, 0); n]);
        let k = TransitionKernel::new(eps, eps, eps / 2.0).unwrap();
        let mut rng = streams.stream(Domain::Decision, 1, 0, 0);
        for _ in 0..20 {
            let actions = random_actions(n, &mut rng);
            let (next, out) = step(&map, &state, &actions, &k, &streams).unwrap();
            prop_assert!(check_safe(&map, &state.positions, &next.positions).is_ok());
            prop_assert_eq!(next.t, state.t + 1);
            for i in 0..n {
                // an agent only fails to move when it moved nowhere
                if out.transition_failure[i] {
                    prop_assert_eq!(next.positions[i], state.positions[i]);
                }
            }
            state = next;
        }
    }

    #[test]
    fn stepping_is_reproducible(seed in any::<u64>()) {
        let map = GridMap::open(6, 6);
        let streams = Streams::new(seed);
        let starts = random_starts(&map, 12, &streams).unwrap();
        let state = WorldState::new(starts, vec![Cell::new(0, 0); 12]);
        let k = TransitionKernel::new(0.1, 0.1, 0.05).unwrap();
        let mut rng = streams.stream(Domain::Decision, 0, 0, 0);
        let actions = random_actions(12, &mut rng);
        let a = step(&map, &state, &actions, &k, &streams).unwrap();
        let b = step(&map, &state, &actions, &k, &streams).unwrap();
        prop_assert_eq!(a, b);
    }
}
