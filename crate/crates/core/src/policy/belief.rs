//! Short-horizon occupancy beliefs propagated through the transition kernel.

use std::collections::BTreeMap;

use rustc_hash::FxHashSet;

use super::local::{model_distribution, ActionModel};
use crate::execution::{Action, TransitionKernel};
use crate::map::{Cell, GridMap};

/// Occupancy distribution as sorted `(cell, mass)` pairs.
pub type Occupancy = Vec<(Cell, f64)>;

/// Per-agent beliefs for horizon steps `1..=horizon`. Agents that were not
/// propagated hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    horizon: usize,
    beliefs: Vec<Option<Vec<Occupancy>>>,
}

impl BeliefMap {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn agents(&self) -> usize {
        self.beliefs.len()
    }

    /// Belief of `agent` at horizon step `h` (1-based).
    pub fn get(&self, agent: usize, h: usize) -> Option<&Occupancy> {
        self.beliefs.get(agent)?.as_ref()?.get(h.checked_sub(1)?)
    }

    pub fn has(&self, agent: usize) -> bool {
        self.beliefs.get(agent).is_some_and(|b| b.is_some())
    }
}

/// Propagates one agent's occupancy for `n_b` steps. Other agents are
/// static obstacles for the bounce rule.
pub fn belief_for_agent<M: ActionModel + ?Sized>(
    map: &GridMap,
    positions: &[Cell],
    agent: usize,
    model: &M,
    k: &TransitionKernel,
    n_b: usize,
) -> Vec<Occupancy> {
    propagate(map, &occupancy(map, positions), positions[agent], agent, model, k, n_b)
}

/// Occupied flags indexed by map cell.
fn occupancy(map: &GridMap, positions: &[Cell]) -> Vec<bool> {
    let mut occ = vec![false; map.len()];
    for &c in positions {
        if let Some(i) = map.index(c) {
            occ[i] = true;
        }
    }
    occ
}

fn propagate<M: ActionModel + ?Sized>(
    map: &GridMap,
    occupied: &[bool],
    me: Cell,
    agent: usize,
    model: &M,
    k: &TransitionKernel,
    n_b: usize,
) -> Vec<Occupancy> {
    // a peer's cell bounces the move; the agent's own start cell does not
    let blocked = |t: Cell| t != me && map.index(t).is_some_and(|i| occupied[i]);
    let mut cur: BTreeMap<Cell, f64> = BTreeMap::from([(me, 1.0)]);
    let mut out = Vec::with_capacity(n_b);
    for _ in 0..n_b {
        let mut next: BTreeMap<Cell, f64> = BTreeMap::new();
        for (&c, &mass) in &cur {
            let pi = model_distribution(model, map, agent, c);
            for a in Action::ALL {
                let pa = pi[a.index()];
                if pa == 0.0 {
                    continue;
                }
                for (b, p) in k.outcomes(a) {
                    if p == 0.0 {
                        continue;
                    }
                    let t = b.apply(c);
                    let t = if map.is_free(t) && !blocked(t) { t } else { c };
                    *next.entry(t).or_insert(0.0) += mass * pa * p;
                }
            }
        }
        let z: f64 = next.values().sum();
        for v in next.values_mut() {
            *v /= z;
        }
        out.push(next.iter().map(|(&c, &m)| (c, m)).collect());
        cur = next;
    }
    out
}

/// Beliefs for the listed agents.
pub fn belief_map<M: ActionModel + ?Sized>(
    map: &GridMap,
    positions: &[Cell],
    agents: &[usize],
    model: &M,
    k: &TransitionKernel,
    n_b: usize,
) -> BeliefMap {
    assert!(n_b >= 1, "belief horizon must be at least one step");
    let occupied = occupancy(map, positions);
    let mut beliefs = vec![None; positions.len()];
    for &i in agents {
        beliefs[i] = Some(propagate(map, &occupied, positions[i], i, model, k, n_b));
    }
    BeliefMap { horizon: n_b, beliefs }
}

/// Cells that agent `me` must treat as blocked at each horizon step: those
/// where some higher-priority agent (lower rank) carries more than `theta`
/// mass. Lower-priority agents are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedView {
    pub blocked: Vec<FxHashSet<Cell>>,
}

impl BlockedView {
    pub fn is_blocked(&self, h: usize, c: Cell) -> bool {
        h >= 1 && self.blocked.get(h - 1).is_some_and(|s| s.contains(&c))
    }

    pub fn is_clear(&self) -> bool {
        self.blocked.iter().all(|s| s.is_empty())
    }
}

pub fn priority_masked_belief(b: &BeliefMap, priorities: &[u32], me: usize, theta: f64, exclude: &[usize]) -> BlockedView {
    let mut blocked = vec![FxHashSet::default(); b.horizon];
    for j in 0..b.agents() {
        if j == me || priorities[j] >= priorities[me] || exclude.contains(&j) {
            continue;
        }
        for (h, set) in blocked.iter_mut().enumerate() {
            if let Some(occ) = b.get(j, h + 1) {
                set.extend(occ.iter().filter(|&&(_, m)| m > theta).map(|&(c, _)| c));
            }
        }
    }
    BlockedView { blocked }
}
