//! Lifelong goal streams, per-step rewards and completion accounting.

use rustc_hash::FxHashSet;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::execution::{EventKind, StepOutcome};
use crate::map::{manhattan, Cell, GridMap, Scenario};
use crate::rng::{Domain, Streams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("no free cell available for agent {0}")]
    NoFreeCell(usize),
    #[error("scenario has {entries} entries but {agents} agents were requested")]
    ScenarioTooShort { entries: usize, agents: usize },
    #[error("map has {free} free cells but {agents} agents were requested")]
    TooManyAgents { free: usize, agents: usize },
    #[error("invalid reward parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub r_goal: f64,
    pub c_step: f64,
    pub c_fail: f64,
    pub c_wait: f64,
    pub alpha_d: f64,
    pub c_comm: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { r_goal: 100.0, c_step: 0.1, c_fail: 10.0, c_wait: 1.0, alpha_d: 1.0, c_comm: 0.5 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), TaskError> {
        let all = [self.r_goal, self.c_step, self.c_fail, self.c_wait, self.alpha_d, self.c_comm];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TaskError::InvalidParams("all reward weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Where goals come from.
#[derive(Debug, Clone)]
pub enum GoalSource {
    /// Agent `i` takes entries `i, i + N, i + 2N, ...` (cyclically).
    Scenario(Scenario),
    /// Uniform over free cells.
    Random,
}

/// Per-episode goal generator.
#[derive(Debug, Clone)]
pub struct GoalStream {
    source: GoalSource,
    agents: usize,
    /// Number of goals handed out (or skipped) per agent.
    issued: Vec<u64>,
}

impl GoalStream {
    pub fn new(source: GoalSource, agents: usize) -> Result<Self, TaskError> {
        if let GoalSource::Scenario(s) = &source {
            if s.len() < agents {
                return Err(TaskError::ScenarioTooShort { entries: s.len(), agents });
            }
        }
        Ok(Self { source, agents, issued: vec![0; agents] })
    }

    pub fn source(&self) -> &GoalSource {
        &self.source
    }

    /// Initial positions: scenario starts, or distinct uniformly drawn free
    /// cells.
    pub fn starts(&self, map: &GridMap, streams: &Streams) -> Result<Vec<Cell>, TaskError> {
        match &self.source {
            GoalSource::Scenario(s) => {
                let starts: Vec<Cell> = s.entries[..self.agents].iter().map(|e| e.start).collect();
                Ok(starts)
            }
            GoalSource::Random => random_starts(map, self.agents, streams),
        }
    }

    /// Next goal for `agent`, distinct from `current`. In random mode cells
    /// held as goals by other agents are avoided when possible.
    pub fn assign_next_goal(
        &mut self,
        agent: usize,
        current: Cell,
        other_goals: &[Cell],
        map: &GridMap,
        streams: &Streams,
    ) -> Result<Cell, TaskError> {
        match &self.source {
            GoalSource::Scenario(s) => {
                let len = s.len() as u64;
                for _ in 0..len {
                    let k = self.issued[agent];
                    self.issued[agent] += 1;
                    let idx = (agent as u64 + k * self.agents as u64) % len;
                    let g = s.entries[idx as usize].goal;
                    if g != current {
                        return Ok(g);
                    }
                }
                Err(TaskError::NoFreeCell(agent))
            }
            GoalSource::Random => {
                let k = self.issued[agent];
                self.issued[agent] += 1;
                let mut rng = streams.stream(Domain::Tasks, agent as u64, k, 0);
                let taken: FxHashSet<Cell> = other_goals.iter().copied().collect();
                let pick = |exclude_taken: bool| -> Vec<Cell> {
                    map.free_cells()
                        .iter()
                        .copied()
                        .filter(|&c| c != current && !(exclude_taken && taken.contains(&c)))
                        .collect()
                };
                let mut cands = pick(true);
                if cands.is_empty() {
                    cands = pick(false);
                }
                if cands.is_empty() {
                    return Err(TaskError::NoFreeCell(agent));
                }
                Ok(cands[rng.random_range(0..cands.len())])
            }
        }
    }
}

/// `n` distinct free cells, uniform without replacement.
pub fn random_starts(map: &GridMap, n: usize, streams: &Streams) -> Result<Vec<Cell>, TaskError> {
    let free = map.free_cells();
    if free.len() < n {
        return Err(TaskError::TooManyAgents { free: free.len(), agents: n });
    }
    let mut rng = streams.stream(Domain::Starts, 0, 0, 0);
    Ok(sample(&mut rng, free.len(), n).into_iter().map(|i| free[i]).collect())
}

/// Per-agent rewards for one step.
///
/// `prev_dist` and `next_dist` are Manhattan distances to the goal held
/// during the step. A goal counts as reached when `next_dist` is zero and
/// `prev_dist` is not.
pub fn reward(outcome: &StepOutcome, prev_dist: &[u32], next_dist: &[u32], comm_ok: &[bool], p: &RewardParams) -> Vec<f64> {
    (0..outcome.executed.len())
        .map(|i| {
            let reached = next_dist[i] == 0 && prev_dist[i] != 0;
            let waited = outcome.events[i].contains(EventKind::Wait);
            let delta = prev_dist[i] as f64 - next_dist[i] as f64;
            let mut r = -p.c_step + p.alpha_d * delta;
            if reached {
                r += p.r_goal;
            }
            if outcome.transition_failure[i] {
                r -= p.c_fail;
            }
            if waited {
                r -= p.c_wait;
            }
            if !comm_ok[i] {
                r -= p.c_comm;
            }
            r
        })
        .collect()
}

pub fn distances(positions: &[Cell], goals: &[Cell]) -> Vec<u32> {
    positions.iter().zip(goals).map(|(&p, &g)| manhattan(p, g)).collect()
}

/// Completion timestamps (step indices, 1-based) per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLog {
    pub horizon: u64,
    completions: Vec<Vec<u64>>,
}

impl TaskLog {
    pub fn new(agents: usize, horizon: u64) -> Self {
        Self { horizon, completions: vec![Vec::new(); agents] }
    }

    /// Records a completion. Timestamps must increase per agent.
    pub fn record(&mut self, agent: usize, t: u64) {
        let v = &mut self.completions[agent];
        assert!(v.last().is_none_or(|&last| last < t), "completion timestamps must increase");
        v.push(t);
    }

    pub fn completions(&self, agent: usize) -> &[u64] {
        &self.completions[agent]
    }

    pub fn agents(&self) -> usize {
        self.completions.len()
    }
}

pub fn tnct(log: &TaskLog) -> u64 {
    log.completions.iter().map(|v| v.iter().filter(|&&t| t <= log.horizon).count() as u64).sum()
}

pub fn throughput(log: &TaskLog) -> f64 {
    if log.horizon == 0 {
        return 0.0;
    }
    tnct(log) as f64 / log.horizon as f64
}
