//! Action-producing controllers: legality masking, the A*-guided local
//! policy, belief maps, the windowed central planner and the hybrid rule.

pub mod astar;
pub mod belief;
pub mod local;
pub mod planner;

use rand::Rng;

use crate::execution::Action;
use crate::map::{Cell, GridMap};
use crate::rng::{Domain, Streams};

/// Five real scores indexed by [`Action::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionLogits(pub [f64; 5]);

impl ActionLogits {
    pub const ZERO: ActionLogits = ActionLogits([0.0; 5]);

    pub fn get(&self, a: Action) -> f64 {
        self.0[a.index()]
    }

    /// `self + other`, elementwise.
    pub fn plus(&self, other: &ActionLogits) -> ActionLogits {
        let mut out = self.0;
        for (o, d) in out.iter_mut().zip(other.0) {
            *o += d;
        }
        ActionLogits(out)
    }

    /// A one-hot residual of weight `w` on `a`.
    pub fn bump(a: Action, w: f64) -> ActionLogits {
        let mut v = [0.0; 5];
        v[a.index()] = w;
        ActionLogits(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LegalityMask(pub [bool; 5]);

impl LegalityMask {
    pub const STAY_ONLY: LegalityMask = LegalityMask([true, false, false, false, false]);

    pub fn allows(&self, a: Action) -> bool {
        self.0[a.index()]
    }
}

/// A move is legal iff its target is in bounds and free. At the goal only
/// stay is legal.
pub fn legality_mask(map: &GridMap, pos: Cell, at_goal: bool) -> LegalityMask {
    if at_goal {
        return LegalityMask::STAY_ONLY;
    }
    let mut m = [true; 5];
    for a in &Action::ALL[1..] {
        m[a.index()] = map.is_free(a.apply(pos));
    }
    LegalityMask(m)
}

/// Softmax restricted to legal actions. Illegal entries are exactly zero.
pub fn masked_distribution(l: &ActionLogits, m: &LegalityMask) -> [f64; 5] {
    let max = (0..5).filter(|&i| m.0[i]).map(|i| l.0[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; 5];
    if max == f64::NEG_INFINITY {
        p[Action::Stay.index()] = 1.0;
        return p;
    }
    let mut z = 0.0;
    for i in 0..5 {
        if m.0[i] {
            p[i] = (l.0[i] - max).exp();
            z += p[i];
        }
    }
    for v in &mut p {
        *v /= z;
    }
    p
}

/// Highest legal logit; ties go to the earlier action in `Action::ALL`.
pub fn masked_argmax(l: &ActionLogits, m: &LegalityMask) -> Action {
    let mut best = Action::Stay;
    let mut best_v = f64::NEG_INFINITY;
    for a in Action::ALL {
        if m.allows(a) && l.get(a) > best_v {
            best = a;
            best_v = l.get(a);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionMode {
    #[default]
    Argmax,
    Sample,
}

/// Turns logits into an action. Sampling draws from the decision substream
/// keyed by `(t, agent)`.
pub fn decide(l: &ActionLogits, m: &LegalityMask, mode: DecisionMode, streams: &Streams, t: u64, agent: usize) -> Action {
    match mode {
        DecisionMode::Argmax => masked_argmax(l, m),
        DecisionMode::Sample => {
            let p = masked_distribution(l, m);
            let mut rng = streams.stream(Domain::Decision, t, agent as u64, 0);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for a in Action::ALL {
                acc += p[a.index()];
                if u < acc && m.allows(a) {
                    return a;
                }
            }
            masked_argmax(l, m)
        }
    }
}

/// Applies the cloud residual when a downlink packet arrived, then decides.
pub fn hybrid_decide(
    local: &ActionLogits,
    residual: Option<&ActionLogits>,
    mask: &LegalityMask,
    mode: DecisionMode,
    streams: &Streams,
    t: u64,
    agent: usize,
) -> Action {
    match residual {
        Some(d) => decide(&local.plus(d), mask, mode, streams, t, agent),
        None => decide(local, mask, mode, streams, t, agent),
    }
}

/// Egocentric field of view with three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub fov: usize,
    /// 1.0 where the cell is an obstacle or off the map.
    pub obstacles: Vec<f64>,
    /// 1.0 where another agent stands.
    pub agents: Vec<f64>,
    /// Normalised guide distance, 1.0 where unknown.
    pub guide: Vec<f64>,
    pub goal_vector: (i32, i32),
    pub position: (f64, f64),
}

impl Observation {
    pub fn peer_count(&self) -> usize {
        self.agents.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Builds agent `agent`'s observation. `guide` maps cells to goal distance.
pub fn observe(
    map: &GridMap,
    positions: &[Cell],
    agent: usize,
    goal: Cell,
    guide: impl Fn(Cell) -> Option<u32>,
    fov: usize,
) -> Observation {
    assert!(fov % 2 == 1, "field of view must be odd");
    let r = (fov / 2) as i32;
    let me = positions[agent];
    let mut obstacles = vec![0.0; fov * fov];
    let mut agents = vec![0.0; fov * fov];
    let mut g = vec![1.0; fov * fov];
    let scale = (map.width() + map.height()).max(1) as f64;
    for dy in -r..=r {
        for dx in -r..=r {
            let c = me.offset(dx, dy);
            let k = (dy + r) as usize * fov + (dx + r) as usize;
            if !map.is_free(c) {
                obstacles[k] = 1.0;
            } else if let Some(d) = guide(c) {
                g[k] = (d as f64 / scale).min(1.0);
            }
        }
    }
    for (j, &p) in positions.iter().enumerate() {
        if j != agent && me.chebyshev(p) <= r as u32 {
            let k = (p.y - me.y + r) as usize * fov + (p.x - me.x + r) as usize;
            agents[k] = 1.0;
        }
    }
    Observation {
        fov,
        obstacles,
        agents,
        guide: g,
        goal_vector: (goal.x - me.x, goal.y - me.y),
        position: (
            me.x as f64 / map.width().max(1) as f64,
            me.y as f64 / map.height().max(1) as f64,
        ),
    }
}

/// Agents other than `agent` inside its Chebyshev box of the given size.
pub fn peers_in_fov(positions: &[Cell], agent: usize, fov: usize) -> Vec<usize> {
    let r = (fov / 2) as u32;
    let me = positions[agent];
    (0..positions.len()).filter(|&j| j != agent && me.chebyshev(positions[j]) <= r).collect()
}
