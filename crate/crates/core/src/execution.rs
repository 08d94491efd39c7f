//! Stochastic action execution and the attempt–arbitration safety layer.
//!
//! A step samples one proposal per agent from the transition kernel, then
//! arbitrates: wall and off-grid proposals bounce back, position swaps fail
//! for both agents, each contested cell admits one uniformly random winner,
//! and moves into cells whose occupant ends up staying are blocked until a
//! fixed point is reached.

use rustc_hash::FxHashMap;

use rand::Rng;
use thiserror::Error;

use crate::map::{Cell, GridMap};
use crate::rng::{Domain, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn apply(self, c: Cell) -> Cell {
        let (dx, dy) = self.delta();
        c.offset(dx, dy)
    }

    /// The action moving `from` to the 4-adjacent (or equal) cell `to`.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        Self::ALL.into_iter().find(|a| a.apply(from) == to)
    }

    pub fn reverse(self) -> Action {
        match self {
            Action::Stay => Action::Stay,
            Action::Up => Action::Down,
            Action::Down => Action::Up,
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }

    /// The two orthogonal actions, in fixed order.
    pub fn sides(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
            Action::Stay => [Action::Stay, Action::Stay],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

/// Execution noise `(eps_stay, eps_side, eps_back)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    pub eps_stay: f64,
    pub eps_side: f64,
    pub eps_back: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),
    #[error("agent {agent}: proposal {proposal} is not adjacent to {position}")]
    NonAdjacentProposal { agent: usize, position: Cell, proposal: Cell },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid world state: {0}")]
    InvalidState(String),
}

impl TransitionKernel {
    pub const DETERMINISTIC: TransitionKernel = TransitionKernel { eps_stay: 0.0, eps_side: 0.0, eps_back: 0.0 };

    pub fn new(eps_stay: f64, eps_side: f64, eps_back: f64) -> Result<Self, ExecError> {
        let k = Self { eps_stay, eps_side, eps_back };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        let parts = [self.eps_stay, self.eps_side, self.eps_back];
        if parts.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(ExecError::InvalidKernel("each epsilon must lie in [0, 1]".into()));
        }
        if parts.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(ExecError::InvalidKernel("epsilons must sum to at most 1".into()));
        }
        Ok(())
    }

    pub fn forward_prob(&self) -> f64 {
        (1.0 - self.eps_stay - self.eps_side - self.eps_back).max(0.0)
    }

    /// Outcome probabilities for a move `a`, as `(action realised, prob)`
    /// pairs in the order forward, stay, side, side, back.
    pub fn outcomes(&self, a: Action) -> [(Action, f64); 5] {
        if a == Action::Stay {
            return [(Action::Stay, 1.0), (Action::Stay, 0.0), (Action::Stay, 0.0), (Action::Stay, 0.0), (Action::Stay, 0.0)];
        }
        let [s1, s2] = a.sides();
        [
            (a, self.forward_prob()),
            (Action::Stay, self.eps_stay),
            (s1, self.eps_side / 2.0),
            (s2, self.eps_side / 2.0),
            (a.reverse(), self.eps_back),
        ]
    }

    /// Maps one uniform draw in [0, 1) to the realised action.
    pub fn realise(&self, a: Action, u: f64) -> Action {
        if a == Action::Stay {
            return Action::Stay;
        }
        let mut acc = 0.0;
        let outcomes = self.outcomes(a);
        for &(b, p) in &outcomes {
            acc += p;
            if u < acc {
                return b;
            }
        }
        // Rounding slack lands on the forward move.
        a
    }
}

/// Samples the proposed next cell. Exactly one draw is consumed, also for
/// `stay`, so per-agent streams stay aligned regardless of the action.
pub fn sample_proposal<R: Rng + ?Sized>(pos: Cell, a: Action, k: &TransitionKernel, rng: &mut R) -> Cell {
    let u: f64 = rng.random();
    k.realise(a, u).apply(pos)
}

/// Off-grid or obstacle proposals resolve to the current cell.
pub fn bounce_to_stay(map: &GridMap, pos: Cell, proposed: Cell) -> Cell {
    if map.is_free(proposed) {
        proposed
    } else {
        pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaitCause {
    None,
    Goal,
    Intent,
    Wall,
    Vertex,
    Edge,
}

impl WaitCause {
    pub fn name(self) -> &'static str {
        match self {
            WaitCause::None => "none",
            WaitCause::Goal => "goal",
            WaitCause::Intent => "intent",
            WaitCause::Wall => "wall",
            WaitCause::Vertex => "vertex",
            WaitCause::Edge => "edge",
        }
    }
}

/// Event kinds tracked per agent and step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Vertex = 0,
    Edge = 1,
    Wall = 2,
    Wait = 3,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [EventKind::Vertex, EventKind::Edge, EventKind::Wall, EventKind::Wait];
}

/// Bit set over [`EventKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct EventSet(u8);

impl EventSet {
    pub fn insert(&mut self, e: EventKind) {
        self.0 |= 1 << e as u8;
    }

    pub fn contains(self, e: EventKind) -> bool {
        self.0 & (1 << e as u8) != 0
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Attempt counts recorded before arbitration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConflictCounts {
    /// Cells targeted by two or more movers.
    pub vertex: u32,
    /// Pairs attempting to exchange cells.
    pub edge: u32,
    /// Proposals off the grid or onto obstacles.
    pub wall: u32,
    /// Moves into an agent that ends up staying.
    pub intent: u32,
}

impl std::ops::AddAssign for ConflictCounts {
    fn add_assign(&mut self, o: Self) {
        self.vertex += o.vertex;
        self.edge += o.edge;
        self.wall += o.wall;
        self.intent += o.intent;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub positions: Vec<Cell>,
    pub goals: Vec<Cell>,
    /// Rank per agent, 0 = highest priority.
    pub priorities: Vec<u32>,
    pub tasks_completed: Vec<u32>,
    pub t: u64,
}

impl WorldState {
    pub fn new(positions: Vec<Cell>, goals: Vec<Cell>) -> Self {
        let n = positions.len();
        Self {
            positions,
            goals,
            priorities: (0..n as u32).collect(),
            tasks_completed: vec![0; n],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn at_goal(&self, i: usize) -> bool {
        self.positions[i] == self.goals[i]
    }

    /// Checks single occupancy and that every agent stands on a free cell.
    pub fn validate(&self, map: &GridMap) -> Result<(), ExecError> {
        if self.goals.len() != self.positions.len()
            || self.priorities.len() != self.positions.len()
            || self.tasks_completed.len() != self.positions.len()
        {
            return Err(ExecError::InvalidState("per-agent vectors differ in length".into()));
        }
        let mut seen = FxHashMap::with_capacity_and_hasher(self.len(), Default::default());
        for (i, &p) in self.positions.iter().enumerate() {
            if !map.is_free(p) {
                return Err(ExecError::InvalidState(format!("agent {i} at {p} is not on a free cell")));
            }
            if let Some(j) = seen.insert(p, i) {
                return Err(ExecError::InvalidState(format!("agents {j} and {i} share cell {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Sampled proposal per agent, before bouncing.
    pub proposed: Vec<Cell>,
    pub executed: Vec<Cell>,
    pub wait_cause: Vec<WaitCause>,
    pub transition_failure: Vec<bool>,
    pub events: Vec<EventSet>,
    pub pre_arbitration_conflicts: ConflictCounts,
}

impl StepOutcome {
    pub fn moved(&self, i: usize, prev: Cell) -> bool {
        self.executed[i] != prev
    }
}

/// Resolves proposals into executed positions.
///
/// `proposals[i]` must equal the agent's position or one of its four
/// neighbor coordinates (possibly off-grid or an obstacle). Vertex
/// conflicts are decided by the arbitration substream keyed by
/// `(state.t, contested cell)`; the winner is drawn among contenders
/// ordered by their source cell, so the result does not depend on agent
/// numbering.
pub fn arbitrate(
    map: &GridMap,
    state: &WorldState,
    proposals: &[Cell],
    streams: &Streams,
) -> Result<StepOutcome, ExecError> {
    let n = state.len();
    if proposals.len() != n {
        return Err(ExecError::LengthMismatch { expected: n, got: proposals.len() });
    }
    for (i, (&p, &q)) in state.positions.iter().zip(proposals).enumerate() {
        if p != q && crate::map::manhattan(p, q) != 1 {
            return Err(ExecError::NonAdjacentProposal { agent: i, position: p, proposal: q });
        }
    }

    let pos = &state.positions;
    let mut wait = vec![WaitCause::None; n];
    let mut fail = vec![false; n];
    let mut events = vec![EventSet::default(); n];
    let mut counts = ConflictCounts::default();
    let mut target: Vec<Cell> = pos.clone();

    // 1. walls and the grid boundary
    for i in 0..n {
        if proposals[i] == pos[i] {
            if state.at_goal(i) {
                wait[i] = WaitCause::Goal;
            }
            continue;
        }
        let t = bounce_to_stay(map, pos[i], proposals[i]);
        if t == pos[i] {
            wait[i] = WaitCause::Wall;
            fail[i] = true;
            events[i].insert(EventKind::Wall);
            counts.wall += 1;
        } else {
            target[i] = t;
        }
    }

    let occupant: FxHashMap<Cell, usize> = pos.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    // 2. swaps
    for i in 0..n {
        if target[i] == pos[i] {
            continue;
        }
        if let Some(&j) = occupant.get(&target[i]) {
            if j > i && target[j] == pos[i] {
                counts.edge += 1;
                for k in [i, j] {
                    wait[k] = WaitCause::Edge;
                    fail[k] = true;
                    events[k].insert(EventKind::Edge);
                }
            }
        }
    }
    for i in 0..n {
        if wait[i] == WaitCause::Edge {
            target[i] = pos[i];
        }
    }

    // 3. contested cells
    let mut contenders: FxHashMap<Cell, Vec<usize>> = FxHashMap::default();
    for i in 0..n {
        if target[i] != pos[i] {
            contenders.entry(target[i]).or_default().push(i);
        }
    }
    let mut contested: Vec<(Cell, Vec<usize>)> = contenders.into_iter().filter(|(_, v)| v.len() > 1).collect();
    contested.sort_by_key(|(c, _)| *c);
    for (cell, mut group) in contested {
        counts.vertex += 1;
        group.sort_by_key(|&i| pos[i]);
        let cell_key = map.index(cell).expect("free target") as u64;
        let mut rng = streams.stream(Domain::Arbitration, state.t, cell_key, 0);
        let winner = group[rng.random_range(0..group.len())];
        for &i in &group {
            if i != winner {
                wait[i] = WaitCause::Vertex;
                fail[i] = true;
                events[i].insert(EventKind::Vertex);
                target[i] = pos[i];
            }
        }
    }

    // 4. moves into stayers, to a fixed point
    let mut iterations = 0;
    loop {
        let mut changed = false;
        for i in 0..n {
            if target[i] == pos[i] {
                continue;
            }
            if let Some(&j) = occupant.get(&target[i]) {
                if target[j] == pos[j] {
                    target[i] = pos[i];
                    wait[i] = WaitCause::Intent;
                    counts.intent += 1;
                    changed = true;
                }
            }
        }
        iterations += 1;
        if !changed {
            break;
        }
        debug_assert!(iterations <= n + 1);
    }

    for i in 0..n {
        if target[i] == pos[i] && wait[i] != WaitCause::Goal {
            events[i].insert(EventKind::Wait);
        }
    }

    Ok(StepOutcome {
        proposed: proposals.to_vec(),
        executed: target,
        wait_cause: wait,
        transition_failure: fail,
        events,
        pre_arbitration_conflicts: counts,
    })
}

/// Samples proposals from the per-agent kernel substreams
/// `(t, agent)` and arbitrates them.
pub fn sample_proposals(state: &WorldState, actions: &[Action], k: &TransitionKernel, streams: &Streams) -> Vec<Cell> {
    state
        .positions
        .iter()
        .zip(actions)
        .enumerate()
        .map(|(i, (&p, &a))| {
            let mut rng = streams.stream(Domain::Kernel, state.t, i as u64, 0);
            sample_proposal(p, a, k, &mut rng)
        })
        .collect()
}

/// One full execution step. Returns the next state (with `t` advanced) and
/// the outcome.
pub fn step(
    map: &GridMap,
    state: &WorldState,
    actions: &[Action],
    k: &TransitionKernel,
    streams: &Streams,
) -> Result<(WorldState, StepOutcome), ExecError> {
    if actions.len() != state.len() {
        return Err(ExecError::LengthMismatch { expected: state.len(), got: actions.len() });
    }
    let proposals = sample_proposals(state, actions, k, streams);
    let outcome = arbitrate(map, state, &proposals, streams)?;
    let mut next = state.clone();
    next.positions.clone_from(&outcome.executed);
    next.t += 1;
    Ok((next, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    fn world(pos: &[(i32, i32)]) -> WorldState {
        let p: Vec<Cell> = pos.iter().map(|&(x, y)| Cell::new(x, y)).collect();
        let g = vec![Cell::new(-9, -9); p.len()];
        WorldState::new(p, g)
    }

    #[test]
    fn stay_is_deterministic() {
        let k = TransitionKernel::new(0.3, 0.3, 0.3).unwrap();
        let mut rng = Streams::new(0).stream(Domain::Kernel, 0, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_proposal(Cell::new(2, 2), Action::Stay, &k, &mut rng), Cell::new(2, 2));
        }
    }

    #[test]
    fn noiseless_kernel_moves_forward() {
        let mut rng = Streams::new(0).stream(Domain::Kernel, 0, 0, 0);
        for _ in 0..100 {
            assert_eq!(
                sample_proposal(Cell::new(2, 2), Action::Up, &TransitionKernel::DETERMINISTIC, &mut rng),
                Cell::new(2, 1)
            );
        }
    }

    #[test]
    fn kernel_validation() {
        assert!(TransitionKernel::new(0.5, 0.5, 0.1).is_err());
        assert!(TransitionKernel::new(-0.1, 0.0, 0.0).is_err());
        assert!(TransitionKernel::new(0.05, 0.05, 0.0).is_ok());
    }

    #[test]
    fn bounce_rules() {
        let m = GridMap::from_rows(&["..@"]).unwrap();
        let p = Cell::new(1, 0);
        assert_eq!(bounce_to_stay(&m, p, Cell::new(1, -1)), p);
        assert_eq!(bounce_to_stay(&m, p, Cell::new(2, 0)), p);
        assert_eq!(bounce_to_stay(&m, p, Cell::new(0, 0)), Cell::new(0, 0));
    }

    #[test]
    fn swap_fails_for_both() {
        let m = GridMap::open(4, 4);
        let w = world(&[(1, 1), (1, 2)]);
        let o = arbitrate(&m, &w, &[Cell::new(1, 2), Cell::new(1, 1)], &Streams::new(1)).unwrap();
        assert_eq!(o.executed, w.positions);
        assert_eq!(o.wait_cause, vec![WaitCause::Edge, WaitCause::Edge]);
        assert_eq!(o.transition_failure, vec![true, true]);
        assert_eq!(o.pre_arbitration_conflicts.edge, 1);
    }

    #[test]
    fn vertex_conflict_single_winner() {
        let m = GridMap::open(5, 3);
        let w = world(&[(1, 1), (3, 1)]);
        let mut wins = [0usize; 2];
        for seed in 0..200 {
            let o = arbitrate(&m, &w, &[Cell::new(2, 1), Cell::new(2, 1)], &Streams::new(seed)).unwrap();
            let at: Vec<usize> = (0..2).filter(|&i| o.executed[i] == Cell::new(2, 1)).collect();
            assert_eq!(at.len(), 1);
            let loser = 1 - at[0];
            assert_eq!(o.executed[loser], w.positions[loser]);
            assert_eq!(o.wait_cause[loser], WaitCause::Vertex);
            assert!(o.transition_failure[loser]);
            assert_eq!(o.wait_cause[at[0]], WaitCause::None);
            wins[at[0]] += 1;
        }
        assert!(wins[0] > 60 && wins[1] > 60, "{wins:?}");
    }

    #[test]
    fn move_into_stayer_is_blocked() {
        let m = GridMap::open(4, 4);
        let w = world(&[(1, 1), (2, 1)]);
        let o = arbitrate(&m, &w, &[Cell::new(2, 1), Cell::new(2, 1)], &Streams::new(1)).unwrap();
        assert_eq!(o.executed, w.positions);
        assert_eq!(o.wait_cause[0], WaitCause::Intent);
        assert!(!o.transition_failure[0]);
        assert!(o.events[0].contains(EventKind::Wait));
        assert_eq!(o.wait_cause[1], WaitCause::None);
    }

    #[test]
    fn blocking_cascades_down_a_chain() {
        let m = GridMap::open(6, 1);
        // 0 -> 1 -> 2 -> 3 -> wall
        let w = world(&[(1, 0), (2, 0), (3, 0), (5, 0)]);
        let props = [Cell::new(2, 0), Cell::new(3, 0), Cell::new(4, 0), Cell::new(6, 0)];
        let o = arbitrate(&m, &w, &props, &Streams::new(0)).unwrap();
        assert_eq!(o.executed[2], Cell::new(4, 0));
        assert_eq!(o.executed[1], Cell::new(3, 0));
        assert_eq!(o.executed[0], Cell::new(2, 0));
        assert_eq!(o.wait_cause[3], WaitCause::Wall);

        let props = [Cell::new(2, 0), Cell::new(3, 0), Cell::new(3, 0), Cell::new(5, 0)];
        let o = arbitrate(&m, &w, &props, &Streams::new(0)).unwrap();
        assert_eq!(o.executed, w.positions);
        assert_eq!(o.wait_cause, vec![WaitCause::Intent, WaitCause::Intent, WaitCause::None, WaitCause::None]);
    }

    #[test]
    fn rotation_cycle_executes() {
        let m = GridMap::open(2, 2);
        let w = world(&[(0, 0), (1, 0), (1, 1), (0, 1)]);
        let props = [Cell::new(1, 0), Cell::new(1, 1), Cell::new(0, 1), Cell::new(0, 0)];
        let o = arbitrate(&m, &w, &props, &Streams::new(0)).unwrap();
        assert_eq!(o.executed, props.to_vec());
    }

    #[test]
    fn goal_stay_cause() {
        let m = GridMap::open(3, 3);
        let mut w = world(&[(1, 1), (0, 0)]);
        w.goals[0] = Cell::new(1, 1);
        let o = arbitrate(&m, &w, &[Cell::new(1, 1), Cell::new(0, 0)], &Streams::new(0)).unwrap();
        assert_eq!(o.wait_cause, vec![WaitCause::Goal, WaitCause::None]);
        assert!(!o.events[0].contains(EventKind::Wait));
        assert!(o.events[1].contains(EventKind::Wait));
    }

    #[test]
    fn non_adjacent_proposal_rejected() {
        let m = GridMap::open(4, 4);
        let w = world(&[(0, 0)]);
        assert!(matches!(
            arbitrate(&m, &w, &[Cell::new(2, 0)], &Streams::new(0)),
            Err(ExecError::NonAdjacentProposal { agent: 0, .. })
        ));
    }

    #[test]
    fn all_stay_step_is_identity() {
        let m = GridMap::open(4, 4);
        let w = world(&[(0, 0), (3, 3)]);
        let k = TransitionKernel::new(0.05, 0.05, 0.0).unwrap();
        let (next, o) = step(&m, &w, &[Action::Stay, Action::Stay], &k, &Streams::new(4)).unwrap();
        assert_eq!(next.positions, w.positions);
        assert_eq!(o.pre_arbitration_conflicts, ConflictCounts::default());
        assert!(o.transition_failure.iter().all(|f| !f));
        assert_eq!(next.t, 1);
    }

    #[test]
    fn single_agent_deterministic_move() {
        let m = GridMap::open(4, 4);
        let w = world(&[(1, 1)]);
        let (next, o) = step(&m, &w, &[Action::Right], &TransitionKernel::DETERMINISTIC, &Streams::new(4)).unwrap();
        assert_eq!(next.positions[0], Cell::new(2, 1));
        assert_eq!(o.wait_cause[0], WaitCause::None);
        assert!(o.events[0].is_empty());
    }

    #[test]
    fn arbitration_is_relabel_equivariant() {
        let m = GridMap::open(5, 5);
        let w = world(&[(1, 1), (3, 1), (2, 2), (2, 3), (0, 0)]);
        let props = [Cell::new(2, 1), Cell::new(2, 1), Cell::new(2, 1), Cell::new(2, 2), Cell::new(1, 0)];
        let perm = [3usize, 0, 4, 1, 2];
        let mut w2 = w.clone();
        let mut props2 = props;
        for (new, &old) in perm.iter().enumerate() {
            w2.positions[new] = w.positions[old];
            props2[new] = props[old];
        }
        for seed in 0..20 {
            let s = Streams::new(seed);
            let a = arbitrate(&m, &w, &props, &s).unwrap();
            let b = arbitrate(&m, &w2, &props2, &s).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                assert_eq!(a.executed[old], b.executed[new]);
                assert_eq!(a.wait_cause[old], b.wait_cause[new]);
            }
        }
    }
}
