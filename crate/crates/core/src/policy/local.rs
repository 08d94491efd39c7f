//! A*-guided local policy.
//!
//! Each agent follows the A* path computed when its goal was assigned. An
//! agent pushed off its path by execution noise descends the goal's
//! distance field instead and adopts the descent path. The same rule gives
//! the policy at any hypothetical cell, which belief maps and rollouts need.

use rustc_hash::FxHashMap;

use super::astar::{astar, DistanceField};
use super::{legality_mask, masked_argmax, masked_distribution, ActionLogits, LegalityMask};
use crate::execution::Action;
use crate::map::{Cell, GridMap};

/// A policy that can be queried at arbitrary cells.
pub trait ActionModel {
    fn goal(&self, agent: usize) -> Cell;
    fn logits_at(&self, agent: usize, cell: Cell) -> ActionLogits;

    fn mask(&self, map: &GridMap, agent: usize, cell: Cell) -> LegalityMask {
        legality_mask(map, cell, cell == self.goal(agent))
    }
}

/// Masked action distribution of `model` for `agent` standing on `cell`.
pub fn model_distribution<M: ActionModel + ?Sized>(model: &M, map: &GridMap, agent: usize, cell: Cell) -> [f64; 5] {
    let mask = model.mask(map, agent, cell);
    masked_distribution(&model.logits_at(agent, cell), &mask)
}

pub fn model_argmax<M: ActionModel + ?Sized>(model: &M, map: &GridMap, agent: usize, cell: Cell) -> Action {
    let mask = model.mask(map, agent, cell);
    masked_argmax(&model.logits_at(agent, cell), &mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalParams {
    /// Logit on the path step. ln 36 gives the step probability 0.9 when
    /// all five actions are legal.
    pub w_path: f64,
    /// Logit on stay when the goal cannot be reached.
    pub w_stuck: f64,
}

impl Default for LocalParams {
    fn default() -> Self {
        Self { w_path: 36f64.ln(), w_stuck: 10.0 }
    }
}

#[derive(Debug, Clone)]
struct Guide {
    goal: Cell,
    path: Vec<Cell>,
    on_path: FxHashMap<Cell, usize>,
    field: DistanceField,
    /// Set once the agent has left the A* path. A descent path is followed
    /// by descending the field from any cell, so it is never stored.
    descent_from: Option<Cell>,
}

#[derive(Debug, Clone)]
pub struct LocalPolicy {
    params: LocalParams,
    guides: Vec<Guide>,
}

impl LocalPolicy {
    pub fn new(params: LocalParams, map: &GridMap, positions: &[Cell], goals: &[Cell]) -> Self {
        let mut p = Self { params, guides: Vec::with_capacity(goals.len()) };
        for (&pos, &goal) in positions.iter().zip(goals) {
            p.guides.push(Self::make_guide(map, pos, goal));
        }
        p
    }

    fn make_guide(map: &GridMap, pos: Cell, goal: Cell) -> Guide {
        let field = DistanceField::new(map, goal);
        let path = astar(map, pos, goal).unwrap_or_else(|_| vec![pos]);
        let on_path = path.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Guide { goal, path, on_path, field, descent_from: None }
    }

    pub fn params(&self) -> &LocalParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.guides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guides.is_empty()
    }

    /// Replans `agent` for a new goal.
    pub fn set_goal(&mut self, map: &GridMap, agent: usize, pos: Cell, goal: Cell) {
        self.guides[agent] = Self::make_guide(map, pos, goal);
    }

    pub fn field(&self, agent: usize) -> &DistanceField {
        &self.guides[agent].field
    }

    /// The path being followed: the A* path, or once the agent has left
    /// it, the descent path from the last synced cell.
    pub fn path(&self, agent: usize) -> Vec<Cell> {
        let g = &self.guides[agent];
        match g.descent_from {
            Some(c) => g.field.path_from(c).unwrap_or_else(|| vec![c]),
            None => g.path.clone(),
        }
    }

    /// Switches to descending the field when `pos` has left the A* path.
    pub fn sync(&mut self, agent: usize, pos: Cell) {
        let g = &mut self.guides[agent];
        if g.descent_from.is_some() {
            g.descent_from = Some(pos);
        } else if !g.on_path.contains_key(&pos) && g.field.get(pos).is_some() {
            g.descent_from = Some(pos);
        }
    }

    /// Logits at the agent's actual cell, repairing the path first.
    pub fn logits(&mut self, agent: usize, pos: Cell) -> ActionLogits {
        self.sync(agent, pos);
        self.logits_at(agent, pos)
    }

    /// The step this policy would take from `cell`, if any.
    pub fn guide_action(&self, agent: usize, cell: Cell) -> Option<Action> {
        let g = &self.guides[agent];
        if cell == g.goal {
            return None;
        }
        if g.descent_from.is_some() {
            return g.field.descend(cell);
        }
        if let Some(&j) = g.on_path.get(&cell) {
            if let Some(&next) = g.path.get(j + 1) {
                return Action::between(cell, next);
            }
        }
        g.field.descend(cell)
    }
}

impl ActionModel for LocalPolicy {
    fn goal(&self, agent: usize) -> Cell {
        self.guides[agent].goal
    }

    fn logits_at(&self, agent: usize, cell: Cell) -> ActionLogits {
        if cell == self.guides[agent].goal {
            return ActionLogits::ZERO;
        }
        match self.guide_action(agent, cell) {
            Some(a) => ActionLogits::bump(a, self.params.w_path),
            None => ActionLogits::bump(Action::Stay, self.params.w_stuck),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::LegalityMask;

    #[test]
    fn path_step_probability_is_point_nine() {
        let p = masked_distribution(&ActionLogits::bump(Action::Up, LocalParams::default().w_path), &LegalityMask([true; 5]));
        assert!((p[Action::Up.index()] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn follows_astar_path() {
        let m = GridMap::from_rows(&[".....", ".@@@.", "....."]).unwrap();
        let start = Cell::new(2, 0);
        let goal = Cell::new(2, 2);
        let mut pol = LocalPolicy::new(LocalParams::default(), &m, &[start], &[goal]);
        let path = astar(&m, start, goal).unwrap();
        let mut pos = start;
        for w in path.windows(2) {
            let a = masked_argmax(&pol.logits(0, pos), &legality_mask(&m, pos, false));
            assert_eq!(a.apply(pos), w[1]);
            pos = w[1];
        }
        assert_eq!(pos, goal);
    }

    #[test]
    fn displaced_agent_takes_shortest_step() {
        let m = GridMap::open(6, 6);
        let mut pol = LocalPolicy::new(LocalParams::default(), &m, &[Cell::new(0, 0)], &[Cell::new(5, 5)]);
        let off = Cell::new(4, 0);
        let a = masked_argmax(&pol.logits(0, off), &legality_mask(&m, off, false));
        let f = DistanceField::new(&m, Cell::new(5, 5));
        assert_eq!(f.get(a.apply(off)), Some(f.get(off).unwrap() - 1));
        assert_eq!(pol.path(0)[0], off);
    }

    #[test]
    fn unreachable_goal_forces_stay() {
        let m = GridMap::from_rows(&["..@.."]).unwrap();
        let mut pol = LocalPolicy::new(LocalParams::default(), &m, &[Cell::new(0, 0)], &[Cell::new(4, 0)]);
        let a = masked_argmax(&pol.logits(0, Cell::new(0, 0)), &legality_mask(&m, Cell::new(0, 0), false));
        assert_eq!(a, Action::Stay);
    }
}
