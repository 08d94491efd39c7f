use std::collections::{HashMap, HashSet, VecDeque};

use mapf_airsim::execution::Action;
use mapf_airsim::map::{Cell, GridMap};
use mapf_airsim::policy::local::{LocalParams, LocalPolicy};
use mapf_airsim::policy::planner::{intents_conflict_free, windowed_central_plan, PlanContext, PlannerParams, Rect, Region};
use mapf_airsim::rng::Streams;
use rand::Rng;

pub fn random_grid(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> GridMap {
    let free = (0..w * h).map(|_| rng.random::<f64>() >= density).collect();
    GridMap::new(w, h, free).unwrap()
}

/// Corridor with one passing bay above cell (3, 1).
pub fn corridor() -> GridMap {
    GridMap::from_rows(&["@@@.@@@", "......."]).unwrap()
}

/// Shortest joint makespan to reach both goals, moving in lock step with
/// no shared cell and no exchange. `None` when no joint plan exists.
pub fn joint_oracle(map: &GridMap, starts: [Cell; 2], goals: [Cell; 2]) -> Option<u32> {
    let moves = |c: Cell| -> Vec<Cell> { Action::ALL.iter().map(|a| a.apply(c)).filter(|&n| map.is_free(n)).collect() };
    let mut seen = HashSet::from([starts]);
    let mut q = VecDeque::from([(starts, 0u32)]);
    while let Some((s, d)) = q.pop_front() {
        if s == goals {
            return Some(d);
        }
        for a in moves(s[0]) {
            for b in moves(s[1]) {
                if a == b || (a == s[1] && b == s[0]) {
                    continue;
                }
                if seen.insert([a, b]) {
                    q.push_back(([a, b], d + 1));
                }
            }
        }
    }
    None
}

pub struct Closed {
    pub conflict_free: bool,
    pub reached: Option<u64>,
}

/// Drives both agents with the planner alone on a noiseless grid.
pub fn closed_loop(map: &GridMap, starts: [Cell; 2], goals: [Cell; 2], steps: u64) -> Closed {
    let mut pos = starts.to_vec();
    let mut policy = LocalPolicy::new(LocalParams::default(), map, &pos, &goals);
    let priorities = [0u32, 1];
    let known = [true, true];
    let params = PlannerParams::default();
    let streams = Streams::new(1);
    let region = Region { boxes: vec![Rect::around(map, Cell::new(map.width() as i32 / 2, 0), 9)], agents: vec![0, 1] };
    for t in 0..steps {
        if pos == goals {
            return Closed { conflict_free: true, reached: Some(t) };
        }
        for i in 0..2 {
            policy.logits(i, pos[i]);
        }
        let ctx = PlanContext { map, positions: &pos, priorities: &priorities, known: &known, policy: &policy, beliefs: None };
        let out = windowed_central_plan(&ctx, &region, &params, &streams, t);
        let moves: Vec<(usize, Cell)> = out.actions.iter().map(|&(i, a)| (i, a.apply(pos[i]))).collect();
        if !intents_conflict_free(&pos, &moves) {
            return Closed { conflict_free: false, reached: None };
        }
        let by_agent: HashMap<usize, Cell> = moves.into_iter().collect();
        pos = vec![by_agent[&0], by_agent[&1]];
    }
    Closed { conflict_free: true, reached: (pos == goals).then_some(steps) }
}

/// The 9×9 instance: a width-1 corridor along row 4 with a pocket at (4, 3).
pub fn pocket_corridor() -> GridMap {
    let mut rows = vec!["@@@@@@@@@"; 9];
    rows[3] = "@@@@.@@@@";
    rows[4] = ".........";
    GridMap::from_rows(&rows).unwrap()
}


/// Every start/goal pair on the corridor fixture that the joint oracle
/// proves feasible. Returns (feasible, reached) or the first failure.
pub fn corridor_exhaustive() -> Result<(usize, usize), String> {
    let map = corridor();
    let free = map.free_cells().to_vec();
    let (mut feasible, mut solved) = (0, 0);
    for &s0 in &free {
        for &s1 in &free {
            for &g0 in &free {
                for &g1 in &free {
                    if s0 == s1 || g0 == g1 {
                        continue;
                    }
                    let Some(opt) = joint_oracle(&map, [s0, s1], [g0, g1]) else { continue };
                    feasible += 1;
                    let run = closed_loop(&map, [s0, s1], [g0, g1], 40);
                    if !run.conflict_free {
                        return Err(format!("conflicting intents for {s0:?},{s1:?} -> {g0:?},{g1:?}"));
                    }
                    if let Some(t) = run.reached {
                        if t < opt as u64 {
                            return Err(format!("planner beat the joint optimum for {s0:?},{s1:?} -> {g0:?},{g1:?}"));
                        }
                        solved += 1;
                    }
                }
            }
        }
    }
    Ok((feasible, solved))
}
