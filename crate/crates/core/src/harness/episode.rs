//! One episode: local decisions, communication, cloud planning, execution
//! and task bookkeeping, repeated for `H` steps.

use std::path::Path;
use std::time::{Duration, Instant};

use super::config::{Controller, ExperimentConfig};
use super::metrics::MetricsRecord;
use super::HarnessError;
use crate::downlink::{assign_priorities, counterfactual_relief, dl_bit_length, dl_rate, dl_score, kl_gap, select_dl};
use crate::execution::{step, Action, EventKind, StepOutcome, WaitCause, WorldState};
use crate::map::{manhattan, parse_map, parse_scenario, Cell, GridMap, Scenario};
use crate::policy::belief::belief_map;
use crate::policy::local::LocalPolicy;
use crate::policy::planner::{conflict_windows, windowed_central_plan, PlanContext};
use crate::policy::{decide, hybrid_decide, legality_mask, peers_in_fov, ActionLogits, LegalityMask};
use crate::radio::{blocklength, build_radio_map_with, sample_packet, RadioMap};
use crate::rng::{Domain, Streams};
use crate::tasks::{distances, reward, tnct, throughput, GoalSource, GoalStream, TaskLog};
use crate::uplink::{
    allocate_ul, greedy_select, identify_risk_centers, nominal_success, ul_bit_length, visibility, ConflictHistory,
};

/// Map and scenario loaded once and shared by many runs.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub map: GridMap,
    pub scenario: Option<Scenario>,
}

impl Environment {
    pub fn load(map_path: &Path, scenario: Option<&Path>) -> Result<Self, HarnessError> {
        let read = |p: &Path| std::fs::read(p).map_err(|source| HarnessError::Io { path: p.to_path_buf(), source });
        let map = parse_map(&read(map_path)?)?;
        let scenario = match scenario {
            Some(p) => Some(parse_scenario(&read(p)?, &map)?),
            None => None,
        };
        let name = map_path.file_name().map_or_else(|| map_path.display().to_string(), |s| s.to_string_lossy().into_owned());
        Ok(Self { name, map, scenario })
    }

    pub fn from_map(name: impl Into<String>, map: GridMap) -> Self {
        Self { name: name.into(), map, scenario: None }
    }
}

/// Extra outputs beyond the metrics row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub trajectory: bool,
    pub trace: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub planner_calls: u64,
    pub planner_fallbacks: u64,
    pub planner_restarts: u64,
    pub planner_exhausted: u64,
    /// Agents inside conflict windows whose state reached the server.
    pub window_agents: u64,
    /// Of those, agents that ended up on the local branch anyway.
    pub window_agents_local: u64,
    pub ul_sent: u64,
    pub ul_ok: u64,
    pub dl_sent: u64,
    pub dl_ok: u64,
    pub overrides: u64,
    pub mean_reward: f64,
    pub t_total_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub t: u64,
    pub agent: usize,
    pub cell: Cell,
    pub kind: EventKind,
    pub cause: WaitCause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlLogRow {
    pub t: u64,
    pub agent: usize,
    pub bits: u64,
    pub rbs: u32,
    pub rate: f64,
    pub p_loss: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlLogRow {
    pub t: u64,
    pub agent: usize,
    pub score: f64,
    pub bits: u64,
    pub rbs: u32,
    pub rate: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub record: MetricsRecord,
    pub diagnostics: Diagnostics,
    /// Positions at `t = 0..=H` when requested.
    pub trajectory: Vec<Vec<Cell>>,
    pub events: Vec<TraceEvent>,
    pub ul_log: Vec<UlLogRow>,
    pub dl_log: Vec<DlLogRow>,
}

/// The `k` agents with the strongest uplink SNR at their cells, ties to
/// the lower id. Returned in id order.
pub fn topk_snr(radio: &RadioMap, positions: &[Cell], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..positions.len()).collect();
    idx.sort_by(|&a, &b| radio.ul_db(positions[b]).total_cmp(&radio.ul_db(positions[a])).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Free cell nearest the map centre, ties to the first in row-major order.
pub fn default_ap(map: &GridMap) -> Option<Cell> {
    let centre = Cell::new(map.width() as i32 / 2, map.height() as i32 / 2);
    map.free_cells().iter().copied().min_by_key(|&c| (manhattan(c, centre), c.y, c.x))
}

/// Loads the configured map and runs one episode.
pub fn run_episode(config: &ExperimentConfig, seed: u64) -> Result<MetricsRecord, HarnessError> {
    let env = Environment::load(&config.map, config.scenario.as_deref())?;
    Ok(run_episode_in(&env, config, seed, EpisodeOptions::default())?.record)
}

struct Clock {
    on: bool,
    total: Duration,
}

impl Clock {
    fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        if !self.on {
            return f();
        }
        let s = Instant::now();
        let out = f();
        self.total += s.elapsed();
        out
    }

    fn mean_ms(&self, steps: u64) -> Option<f64> {
        self.on.then(|| self.total.as_secs_f64() * 1e3 / steps as f64)
    }
}

/// What the server decided for one step.
#[derive(Default)]
struct CloudStep {
    /// Planner action per agent, for agents inside a window.
    planned: Vec<Option<Action>>,
}

struct Episode<'a> {
    env: &'a Environment,
    cfg: &'a ExperimentConfig,
    opts: EpisodeOptions,
    streams: Streams,
    radio: RadioMap,
    state: WorldState,
    policy: LocalPolicy,
    goals: GoalStream,
    history: ConflictHistory,
    log: TaskLog,
    last_scores: Vec<f64>,
    slots: usize,
    diag: Diagnostics,
    result_events: Vec<TraceEvent>,
    ul_log: Vec<UlLogRow>,
    dl_log: Vec<DlLogRow>,
}

/// Runs one episode on a loaded environment.
pub fn run_episode_in(
    env: &Environment,
    config: &ExperimentConfig,
    seed: u64,
    opts: EpisodeOptions,
) -> Result<EpisodeResult, HarnessError> {
    config.validate()?;
    let map = &env.map;
    if config.agents > map.free_cell_count() {
        return Err(HarnessError::Config(super::ConfigError::Invalid(format!(
            "{} agents do not fit on {} free cells",
            config.agents,
            map.free_cell_count()
        ))));
    }
    let streams = Streams::new(seed);
    let ap = match config.ap {
        Some(c) if map.is_free(c) => c,
        Some(c) => {
            return Err(HarnessError::Config(super::ConfigError::Invalid(format!("AP cell ({}, {}) is not free", c.x, c.y))))
        }
        None => default_ap(map).expect("map has a free cell"),
    };
    let frozen = config.link.frozen_shadowing.then_some(&streams);
    let radio = build_radio_map_with(map, ap, &config.link, frozen);

    let source = match &env.scenario {
        Some(s) => GoalSource::Scenario(s.clone()),
        None => GoalSource::Random,
    };
    let mut goals = GoalStream::new(source, config.agents)?;
    let starts = goals.starts(map, &streams)?;
    let mut first_goals: Vec<Cell> = Vec::with_capacity(config.agents);
    for (i, &s) in starts.iter().enumerate() {
        let g = goals.assign_next_goal(i, s, &first_goals, map, &streams)?;
        first_goals.push(g);
    }
    let policy = LocalPolicy::new(config.policy.local, map, &starts, &first_goals);
    let mut state = WorldState::new(starts, first_goals);
    state.validate(map)?;
    let last_scores = vec![0.0; config.agents];
    state.priorities = assign_priorities(&last_scores, config.sched.eps_s, &streams, 0);

    let slots = match config.controller {
        Controller::Local => 0,
        _ => config.channel_slots(),
    };
    let ep = Episode {
        env,
        cfg: config,
        opts,
        streams,
        radio,
        state,
        policy,
        goals,
        history: ConflictHistory::new(config.sched.risk_decay),
        log: TaskLog::new(config.agents, config.horizon),
        last_scores,
        slots,
        diag: Diagnostics::default(),
        result_events: Vec::new(),
        ul_log: Vec::new(),
        dl_log: Vec::new(),
    };
    ep.run()
}

impl Episode<'_> {
    fn n(&self) -> usize {
        self.state.len()
    }

    fn run(mut self) -> Result<EpisodeResult, HarnessError> {
        let cfg = self.cfg;
        let on = cfg.record_timings;
        let (mut local_clock, mut cloud_clock, mut comm_clock) =
            (Clock { on, total: Duration::ZERO }, Clock { on, total: Duration::ZERO }, Clock { on, total: Duration::ZERO });
        let started = Instant::now();
        let mut trajectory = Vec::new();
        if self.opts.trajectory {
            trajectory.push(self.state.positions.clone());
        }
        let mut counts = (0u64, 0u64, 0u64, 0u64);
        let mut reward_sum = 0.0;

        for _ in 0..cfg.horizon {
            let t = self.state.t;
            let (logits, masks, local_actions) = local_clock.time(|| self.local_phase());

            let mut comm_ok = vec![true; self.n()];
            let actions = if self.slots == 0 {
                local_actions
            } else {
                match cfg.controller {
                    Controller::Local => unreachable!("local controller has no channel slots"),
                    Controller::Hybrid => self.hybrid_step(
                        &logits,
                        &masks,
                        &local_actions,
                        &mut comm_ok,
                        &mut cloud_clock,
                        &mut comm_clock,
                    )?,
                    Controller::CentralBaseline => {
                        self.baseline_step(&local_actions, &mut comm_ok, &mut cloud_clock, &mut comm_clock)?
                    }
                }
            };

            let prev = self.state.positions.clone();
            let (next, outcome) = step(&self.env.map, &self.state, &actions, &cfg.kernel, &self.streams)?;
            counts.0 += outcome.pre_arbitration_conflicts.vertex as u64;
            counts.1 += outcome.pre_arbitration_conflicts.edge as u64;
            counts.2 += outcome.pre_arbitration_conflicts.wall as u64;
            counts.3 += outcome.events.iter().filter(|e| e.contains(EventKind::Wait)).count() as u64;
            if self.opts.trace {
                self.trace_events(t, &prev, &outcome);
            }

            let prev_d = distances(&prev, &next.goals);
            let next_d = distances(&next.positions, &next.goals);
            reward_sum += reward(&outcome, &prev_d, &next_d, &comm_ok, &cfg.reward).iter().sum::<f64>();
            self.state = next;
            self.tasks_phase(&prev, &outcome)?;
            if self.opts.trajectory {
                trajectory.push(self.state.positions.clone());
            }
        }

        let h = cfg.horizon;
        self.diag.mean_reward = reward_sum / (h as f64 * self.n() as f64);
        self.diag.t_total_ms = on.then(|| started.elapsed().as_secs_f64() * 1e3);
        let rate = |ok: u64, sent: u64| (sent > 0).then(|| ok as f64 / sent as f64);
        let record = MetricsRecord {
            map: self.env.name.clone(),
            agents: cfg.agents,
            channel_ratio: cfg.channel_ratio,
            controller: cfg.controller,
            seed: self.streams.root(),
            tnct: tnct(&self.log),
            throughput: throughput(&self.log),
            vertex_conflicts: counts.0,
            edge_conflicts: counts.1,
            wall_hits: counts.2,
            waits: counts.3,
            ul_success_rate: rate(self.diag.ul_ok, self.diag.ul_sent),
            dl_success_rate: rate(self.diag.dl_ok, self.diag.dl_sent),
            t_local_ms: local_clock.mean_ms(h),
            t_cloud_ms: cloud_clock.mean_ms(h),
            t_comm_ms: comm_clock.mean_ms(h),
        };
        Ok(EpisodeResult {
            record,
            diagnostics: self.diag,
            trajectory,
            events: self.result_events,
            ul_log: self.ul_log,
            dl_log: self.dl_log,
        })
    }

    fn local_phase(&mut self) -> (Vec<ActionLogits>, Vec<LegalityMask>, Vec<Action>) {
        let n = self.n();
        let map = &self.env.map;
        let t = self.state.t;
        let mut logits = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let pos = self.state.positions[i];
            let l = self.policy.logits(i, pos);
            let m = legality_mask(map, pos, pos == self.state.goals[i]);
            actions.push(decide(&l, &m, self.cfg.policy.decision, &self.streams, t, i));
            logits.push(l);
            masks.push(m);
        }
        (logits, masks, actions)
    }

    fn packet(&self, snr_db: f64, rate: f64, n: u64, t: u64, agent: usize, link: u64) -> bool {
        if self.cfg.force_success {
            return true;
        }
        let mut rng = self.streams.stream(Domain::Channel, t, agent as u64, link);
        sample_packet(snr_db, rate, n, self.cfg.link.shadow_sigma_db, &mut rng)
    }

    /// Sends uplink packets for `senders` over `c_ul` RBs. Returns which
    /// agents got through.
    fn uplink(&mut self, senders: &[usize], c_ul: u32) -> Result<Vec<bool>, HarnessError> {
        let cfg = self.cfg;
        let t = self.state.t;
        let pos = &self.state.positions;
        let list: Vec<(usize, u64, f64)> = senders
            .iter()
            .map(|&i| {
                let peers = peers_in_fov(pos, i, cfg.sched.fov).len();
                (i, ul_bit_length(peers, &cfg.sched.ul_payload), self.radio.ul_db(pos[i]))
            })
            .collect();
        let plan = allocate_ul(&list, c_ul, &cfg.link, cfg.sched.target_per)?;
        let mut ok = vec![false; self.n()];
        for g in &plan.grants {
            let n = blocklength(g.rbs, &cfg.link);
            let s = self.packet(self.radio.ul_db(pos[g.agent]), g.rate, n, t, g.agent, 0);
            ok[g.agent] = s;
            self.diag.ul_sent += 1;
            self.diag.ul_ok += s as u64;
            if self.opts.trace {
                self.ul_log.push(UlLogRow { t, agent: g.agent, bits: g.bits, rbs: g.rbs, rate: g.rate, p_loss: g.p_loss, success: s });
            }
        }
        Ok(ok)
    }

    fn dl_bits(&self, agent: usize) -> u64 {
        let peers = peers_in_fov(&self.state.positions, agent, self.cfg.sched.fov).len();
        dl_bit_length(peers, self.cfg.sched.dl_b0, self.cfg.sched.dl_b1)
    }

    /// One-RB downlink packet to `agent`.
    fn downlink(&mut self, agent: usize, score: f64) -> bool {
        let t = self.state.t;
        let bits = self.dl_bits(agent);
        let n = blocklength(1, &self.cfg.link);
        let rate = dl_rate(bits, n);
        let s = self.packet(self.radio.dl_db(self.state.positions[agent]), rate, n, t, agent, 1);
        self.diag.dl_sent += 1;
        self.diag.dl_ok += s as u64;
        if self.opts.trace {
            self.dl_log.push(DlLogRow { t, agent, score, bits, rbs: 1, rate, success: s });
        }
        s
    }

    /// Beliefs, conflict windows and windowed planning for the agents the
    /// server heard from.
    fn cloud_plan(&mut self, known: &[bool]) -> CloudStep {
        let n = self.n();
        let mut out = CloudStep { planned: vec![None; n] };
        let ids: Vec<usize> = (0..n).filter(|&i| known[i]).collect();
        if ids.len() < 2 {
            return out;
        }
        let cfg = self.cfg;
        let map = &self.env.map;
        let beliefs = belief_map(map, &self.state.positions, &ids, &self.policy, &cfg.kernel, cfg.policy.belief_horizon);
        let ctx = PlanContext {
            map,
            positions: &self.state.positions,
            priorities: &self.state.priorities,
            known,
            policy: &self.policy,
            beliefs: Some(&beliefs),
        };
        for region in conflict_windows(&ctx, &cfg.planner) {
            if region.agents.is_empty() {
                continue;
            }
            let plan = windowed_central_plan(&ctx, &region, &cfg.planner, &self.streams, self.state.t);
            self.diag.planner_calls += 1;
            self.diag.planner_fallbacks += plan.fallback as u64;
            self.diag.planner_restarts += plan.restarts as u64;
            self.diag.planner_exhausted += plan.exhausted as u64;
            for (i, a) in plan.actions {
                out.planned[i] = Some(a);
            }
        }
        out
    }

    fn hybrid_step(
        &mut self,
        logits: &[ActionLogits],
        masks: &[LegalityMask],
        local_actions: &[Action],
        comm_ok: &mut [bool],
        cloud_clock: &mut Clock,
        comm_clock: &mut Clock,
    ) -> Result<Vec<Action>, HarnessError> {
        let cfg = self.cfg;
        let n = self.n();
        let k = self.slots;
        let t = self.state.t;

        // Uplink: cover the risk centres with the most reliable agents.
        let heard = comm_clock.time(|| -> Result<Vec<bool>, HarnessError> {
            let map = &self.env.map;
            let pos = &self.state.positions;
            let centers = identify_risk_centers(map, &self.history, cfg.sched.risk_structural);
            let nn = visibility(pos, &centers, cfg.sched.fov);
            let p: Vec<f64> = (0..n)
                .map(|i| {
                    if cfg.force_success {
                        return 1.0;
                    }
                    let peers = peers_in_fov(pos, i, cfg.sched.fov).len();
                    nominal_success(self.radio.ul_db(pos[i]), ul_bit_length(peers, &cfg.sched.ul_payload), &cfg.link)
                })
                .collect();
            let all: Vec<usize> = (0..n).collect();
            let senders = greedy_select(&centers, &nn, &all, &p, k);
            let ok = self.uplink(&senders, k as u32)?;
            for &i in &senders {
                comm_ok[i] &= ok[i];
            }
            Ok(ok)
        })?;

        // Cloud: plan, then score the agents whose plan departs from the
        // local choice.
        let (cloud, scores) = cloud_clock.time(|| {
            let cloud = self.cloud_plan(&heard);
            let mut scores = vec![0.0; n];
            let map = &self.env.map;
            for i in 0..n {
                let Some(a) = cloud.planned[i] else { continue };
                self.diag.window_agents += 1;
                if a == local_actions[i] {
                    continue;
                }
                let p_dl = if cfg.force_success {
                    1.0
                } else {
                    nominal_success(self.radio.dl_db(self.state.positions[i]), self.dl_bits(i), &cfg.link)
                };
                let (rho, sigma) =
                    counterfactual_relief(map, &self.state, i, &self.policy, a, &cfg.kernel, &cfg.sched.mc, &self.streams);
                let refined = logits[i].plus(&ActionLogits::bump(a, cfg.policy.w_cloud));
                let kl = kl_gap(&logits[i], &refined, &masks[i]);
                scores[i] = dl_score(self.state.priorities[i], p_dl, &rho, &sigma, &cfg.sched.omega, kl);
                self.last_scores[i] = scores[i];
            }
            (cloud, scores)
        });

        // Downlink to the best-scoring agents.
        let residual = comm_clock.time(|| {
            let mut residual: Vec<Option<ActionLogits>> = vec![None; n];
            for i in select_dl(&scores, k) {
                let a = cloud.planned[i].expect("scored agents have a plan");
                if self.downlink(i, scores[i]) {
                    residual[i] = Some(ActionLogits::bump(a, cfg.policy.w_cloud));
                } else {
                    comm_ok[i] = false;
                }
            }
            residual
        });

        let mut actions = local_actions.to_vec();
        for i in 0..n {
            if let Some(r) = &residual[i] {
                actions[i] = hybrid_decide(&logits[i], Some(r), &masks[i], cfg.policy.decision, &self.streams, t, i);
                self.diag.overrides += (actions[i] != local_actions[i]) as u64;
            }
        }
        Ok(actions)
    }

    fn baseline_step(
        &mut self,
        local_actions: &[Action],
        comm_ok: &mut [bool],
        cloud_clock: &mut Clock,
        comm_clock: &mut Clock,
    ) -> Result<Vec<Action>, HarnessError> {
        let n = self.n();
        let k = self.slots;
        let heard = comm_clock.time(|| -> Result<Vec<bool>, HarnessError> {
            let connected = topk_snr(&self.radio, &self.state.positions, k);
            let ok = self.uplink(&connected, k as u32)?;
            for &i in &connected {
                comm_ok[i] &= ok[i];
            }
            Ok(ok)
        })?;
        let cloud = cloud_clock.time(|| self.cloud_plan(&heard));
        comm_clock.time(|| {
            let mut actions = local_actions.to_vec();
            for i in 0..n {
                let Some(a) = cloud.planned[i] else { continue };
                self.diag.window_agents += 1;
                if self.downlink(i, 0.0) {
                    actions[i] = a;
                    self.diag.overrides += (a != local_actions[i]) as u64;
                } else {
                    comm_ok[i] = false;
                    self.diag.window_agents_local += 1;
                }
            }
            Ok(actions)
        })
    }

    fn trace_events(&mut self, t: u64, prev: &[Cell], o: &StepOutcome) {
        for i in 0..prev.len() {
            for kind in EventKind::ALL {
                if o.events[i].contains(kind) {
                    self.result_events.push(TraceEvent { t, agent: i, cell: prev[i], kind, cause: o.wait_cause[i] });
                }
            }
        }
    }

    /// Completions, goal reassignment, conflict history and priorities.
    fn tasks_phase(&mut self, prev: &[Cell], outcome: &StepOutcome) -> Result<(), HarnessError> {
        let map = &self.env.map;
        let t = self.state.t;
        for i in 0..self.n() {
            let pos = self.state.positions[i];
            if pos != self.state.goals[i] || prev[i] == pos {
                continue;
            }
            self.log.record(i, t);
            self.state.tasks_completed[i] += 1;
            let others: Vec<Cell> = (0..self.n()).filter(|&j| j != i).map(|j| self.state.goals[j]).collect();
            let g = self.goals.assign_next_goal(i, pos, &others, map, &self.streams)?;
            self.state.goals[i] = g;
            self.policy.set_goal(map, i, pos, g);
        }
        self.history.observe(prev, outcome);
        let period = self.cfg.sched.priority_period;
        if t % period == 0 {
            self.state.priorities = assign_priorities(&self.last_scores, self.cfg.sched.eps_s, &self.streams, t / period);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::build_radio_map;

    #[test]
    fn topk_examples() {
        let m = GridMap::open(3, 1);
        let mut r = build_radio_map(&m, Cell::new(0, 0), &Default::default());
        r.snr_ul_db = vec![5.0, 10.0, 7.0];
        let pos = [Cell::new(0, 0), Cell::new(1, 0), Cell::new(2, 0)];
        assert_eq!(topk_snr(&r, &pos, 0), Vec::<usize>::new());
        assert_eq!(topk_snr(&r, &pos, 1), vec![1]);
        assert_eq!(topk_snr(&r, &pos, 3), vec![0, 1, 2]);
        r.snr_ul_db = vec![7.0, 7.0, 7.0];
        assert_eq!(topk_snr(&r, &pos, 2), vec![0, 1]);
    }

    #[test]
    fn ap_snaps_to_free_cell() {
        let m = GridMap::from_rows(&["...", ".@.", "..."]).unwrap();
        assert_eq!(default_ap(&m), Some(Cell::new(1, 0)));
    }
}
