//! Experiment configuration and the flat `key = value` config format.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::downlink::McParams;
use crate::execution::TransitionKernel;
use crate::map::Cell;
use crate::policy::local::LocalParams;
use crate::policy::planner::PlannerParams;
use crate::policy::DecisionMode;
use crate::radio::LinkBudgetParams;
use crate::tasks::RewardParams;
use crate::uplink::UlPayload;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("`{key}`: invalid value `{value}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Controller {
    Local,
    Hybrid,
    CentralBaseline,
}

impl Controller {
    pub fn name(self) -> &'static str {
        match self {
            Controller::Local => "local",
            Controller::Hybrid => "hybrid",
            Controller::CentralBaseline => "central_baseline",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Controller {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "local" => Ok(Controller::Local),
            "hybrid" => Ok(Controller::Hybrid),
            "central-baseline" | "central_baseline" => Ok(Controller::CentralBaseline),
            _ => Err(format!("unknown controller `{s}` (expected local, hybrid or central-baseline)")),
        }
    }
}

/// Uplink and downlink scheduler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedParams {
    pub fov: usize,
    pub risk_structural: f64,
    pub risk_decay: f64,
    pub target_per: f64,
    pub ul_payload: UlPayload,
    pub dl_b0: u64,
    pub dl_b1: u64,
    pub mc: McParams,
    pub omega: [f64; 4],
    pub eps_s: f64,
    pub priority_period: u64,
}

impl Default for SchedParams {
    fn default() -> Self {
        Self {
            fov: 7,
            risk_structural: 1.0,
            risk_decay: 0.9,
            target_per: 0.1,
            ul_payload: UlPayload::default(),
            dl_b0: 64,
            dl_b1: 8,
            mc: McParams::default(),
            omega: [1.0, 1.0, 0.5, 0.25],
            eps_s: 1e-3,
            priority_period: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub local: LocalParams,
    pub w_cloud: f64,
    pub belief_horizon: usize,
    pub decision: DecisionMode,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self { local: LocalParams::default(), w_cloud: 10.0, belief_horizon: 4, decision: DecisionMode::Argmax }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub map: PathBuf,
    pub scenario: Option<PathBuf>,
    pub agents: usize,
    pub horizon: u64,
    pub channel_ratio: f64,
    pub controller: Controller,
    pub kernel: TransitionKernel,
    pub link: LinkBudgetParams,
    /// Access point cell; the free cell nearest the map centre when unset.
    pub ap: Option<Cell>,
    pub total_bandwidth_hz: f64,
    /// Every packet succeeds. A test hook.
    pub force_success: bool,
    pub reward: RewardParams,
    pub sched: SchedParams,
    pub policy: PolicyParams,
    pub planner: PlannerParams,
    /// Measure wall-clock phase times. When off, timing columns are empty
    /// and output is byte-reproducible.
    pub record_timings: bool,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            map: PathBuf::new(),
            scenario: None,
            agents: 32,
            horizon: 128,
            channel_ratio: 0.0,
            controller: Controller::Local,
            kernel: TransitionKernel { eps_stay: 0.05, eps_side: 0.05, eps_back: 0.0 },
            link: LinkBudgetParams::default(),
            ap: None,
            total_bandwidth_hz: 1e8,
            force_success: false,
            reward: RewardParams::default(),
            sched: SchedParams::default(),
            policy: PolicyParams::default(),
            planner: PlannerParams::default(),
            record_timings: true,
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig {
    /// Total RBs available per step.
    pub fn total_rbs(&self) -> u32 {
        (self.total_bandwidth_hz / self.link.rb_bandwidth_hz).floor() as u32
    }

    /// `round(r_ch · N)`: connected agents for the baseline, and both the UL
    /// RB budget and the DL grant budget for the hybrid controller.
    pub fn channel_slots(&self) -> usize {
        (self.channel_ratio * self.agents as f64).round() as usize
    }

    /// Checks everything that does not need the map.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        if !(0.0..=1.0).contains(&self.channel_ratio) {
            return bad(format!("channel ratio must lie in [0, 1], got {}", self.channel_ratio));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.agents < 1 {
            return bad("at least one agent is required".into());
        }
        self.kernel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.link.validate().map_err(ConfigError::Invalid)?;
        self.reward.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.sched.fov % 2 == 0 {
            return bad("sched.fov must be odd".into());
        }
        if self.planner.window % 2 == 0 {
            return bad("planner.window must be odd".into());
        }
        if self.policy.belief_horizon < 1 {
            return bad("policy.belief_horizon must be at least 1".into());
        }
        let mc = &self.sched.mc;
        if mc.horizon < 1 || mc.rollouts < 1 || !(mc.xi > 0.0 && mc.xi <= 1.0) {
            return bad("Monte-Carlo horizon and rollouts must be positive and xi in (0, 1]".into());
        }
        if self.sched.priority_period < 1 {
            return bad("sched.priority_period must be at least 1".into());
        }
        let slots = self.channel_slots() as u32;
        if self.controller == Controller::Hybrid && 2 * slots > self.total_rbs() {
            return bad(format!("{} UL plus {} DL RBs exceed the {} available", slots, slots, self.total_rbs()));
        }
        Ok(())
    }
}

/// Grid of runs for `sweep`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSpec {
    pub maps: Vec<PathBuf>,
    pub agents: Vec<usize>,
    pub channel_ratios: Vec<f64>,
    pub controllers: Vec<Controller>,
    pub seeds: Vec<u64>,
}

/// A parsed config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub base: ExperimentConfig,
    pub sweep: SweepSpec,
}

fn invalid(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::InvalidValue { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| invalid(key, v, e))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, v, "expected true or false")),
    }
}

/// Seeds as a comma list whose items may be ranges `a..b` (end exclusive).
pub fn parse_seeds(key: &str, v: &str) -> Result<Vec<u64>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (num(key, a.trim())?, num(key, b.trim())?);
                if b <= a {
                    return Err(invalid(key, v, "empty seed range"));
                }
                out.extend(a..b);
            }
            None => out.push(num(key, item)?),
        }
    }
    Ok(out)
}

pub fn parse_cell(key: &str, v: &str) -> Result<Cell, ConfigError> {
    let (x, y) = v.split_once(',').ok_or_else(|| invalid(key, v, "expected X,Y"))?;
    Ok(Cell::new(num(key, x.trim())?, num(key, y.trim())?))
}

fn resolve(base_dir: Option<&Path>, v: &str) -> PathBuf {
    let p = PathBuf::from(v);
    match base_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p,
    }
}

/// Parses config text. Relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ConfigFile, ConfigError> {
    let mut f = ConfigFile::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or(ConfigError::Malformed { line })?;
        let (key, v) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Malformed { line });
        }
        apply(&mut f, key, v, base_dir).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
            other => other,
        })?;
    }
    Ok(f)
}

fn apply(f: &mut ConfigFile, key: &str, v: &str, base_dir: Option<&Path>) -> Result<(), ConfigError> {
    let c = &mut f.base;
    match key {
        "map" => c.map = resolve(base_dir, v),
        "scenario" => c.scenario = Some(resolve(base_dir, v)),
        "agents" => c.agents = num(key, v)?,
        "horizon" => c.horizon = num(key, v)?,
        "channel_ratio" => c.channel_ratio = num(key, v)?,
        "controller" => c.controller = v.parse().map_err(|e: String| invalid(key, v, e))?,
        "seeds" | "seed" => c.seeds = parse_seeds(key, v)?,
        "ap" => c.ap = Some(parse_cell(key, v)?),

        "kernel.eps_stay" => c.kernel.eps_stay = num(key, v)?,
        "kernel.eps_side" => c.kernel.eps_side = num(key, v)?,
        "kernel.eps_back" => c.kernel.eps_back = num(key, v)?,

        "link.f0_hz" => c.link.f0_hz = num(key, v)?,
        "link.rb_bandwidth_hz" => c.link.rb_bandwidth_hz = num(key, v)?,
        "link.t_pkt_s" => c.link.t_pkt_s = num(key, v)?,
        "link.eta" => c.link.eta = num(key, v)?,
        "link.p_tx_ul_dbm" => c.link.p_tx_ul_dbm = num(key, v)?,
        "link.p_tx_dl_dbm" => c.link.p_tx_dl_dbm = num(key, v)?,
        "link.noise_figure_db" => c.link.noise_figure_db = num(key, v)?,
        "link.shadow_sigma_db" => c.link.shadow_sigma_db = num(key, v)?,
        "link.cell_size_m" => c.link.cell_size_m = num(key, v)?,
        "link.frozen_shadowing" => c.link.frozen_shadowing = boolean(key, v)?,
        "link.los_d" => c.link.los.d = num(key, v)?,
        "link.los_b" => c.link.los.b = num(key, v)?,
        "link.los_f" => c.link.los.f = num(key, v)?,
        "link.nlos_d" => c.link.nlos.d = num(key, v)?,
        "link.nlos_b" => c.link.nlos.b = num(key, v)?,
        "link.nlos_f" => c.link.nlos.f = num(key, v)?,

        "comm.total_bandwidth_hz" => c.total_bandwidth_hz = num(key, v)?,
        "channel.force_success" => c.force_success = boolean(key, v)?,

        "reward.r_goal" => c.reward.r_goal = num(key, v)?,
        "reward.c_step" => c.reward.c_step = num(key, v)?,
        "reward.c_fail" => c.reward.c_fail = num(key, v)?,
        "reward.c_wait" => c.reward.c_wait = num(key, v)?,
        "reward.alpha_d" => c.reward.alpha_d = num(key, v)?,
        "reward.c_comm" => c.reward.c_comm = num(key, v)?,

        "sched.fov" => c.sched.fov = num(key, v)?,
        "sched.risk_structural" => c.sched.risk_structural = num(key, v)?,
        "sched.risk_decay" => c.sched.risk_decay = num(key, v)?,
        "sched.target_per" => c.sched.target_per = num(key, v)?,
        "sched.ul_header_bits" => c.sched.ul_payload.header_bits = num(key, v)?,
        "sched.ul_coord_bits" => c.sched.ul_payload.coord_bits = num(key, v)?,
        "sched.hidden_size" => c.sched.ul_payload.hidden_size = num(key, v)?,
        "sched.bits_per_element" => c.sched.ul_payload.bits_per_element = num(key, v)?,
        "sched.dl_b0" => c.sched.dl_b0 = num(key, v)?,
        "sched.dl_b1" => c.sched.dl_b1 = num(key, v)?,
        "sched.mc_horizon" => c.sched.mc.horizon = num(key, v)?,
        "sched.mc_rollouts" => c.sched.mc.rollouts = num(key, v)?,
        "sched.mc_xi" => c.sched.mc.xi = num(key, v)?,
        "sched.mc_max_peers" => c.sched.mc.max_peers = num(key, v)?,
        "sched.mc_peer_radius" => c.sched.mc.peer_radius = num(key, v)?,
        "sched.omega" => {
            let w: Vec<f64> = list(key, v)?;
            c.sched.omega = w.try_into().map_err(|_| invalid(key, v, "expected four weights"))?;
        }
        "sched.eps_s" => c.sched.eps_s = num(key, v)?,
        "sched.priority_period" => c.sched.priority_period = num(key, v)?,

        "policy.w_path" => c.policy.local.w_path = num(key, v)?,
        "policy.w_stuck" => c.policy.local.w_stuck = num(key, v)?,
        "policy.w_cloud" => c.policy.w_cloud = num(key, v)?,
        "policy.belief_horizon" => c.policy.belief_horizon = num(key, v)?,
        "policy.decision" => {
            c.policy.decision = match v {
                "argmax" => DecisionMode::Argmax,
                "sample" => DecisionMode::Sample,
                _ => return Err(invalid(key, v, "expected argmax or sample")),
            }
        }

        "planner.window" => c.planner.window = num(key, v)?,
        "planner.proximity" => c.planner.proximity = num(key, v)?,
        "planner.horizon" => c.planner.horizon = num(key, v)?,
        "planner.tau_ms" => c.planner.tau = Duration::from_secs_f64(num::<f64>(key, v)? / 1e3),
        "planner.max_restarts" => c.planner.max_restarts = num(key, v)?,
        "planner.max_expansions" => c.planner.max_expansions = num(key, v)?,
        "planner.theta_b" => c.planner.theta_b = num(key, v)?,
        "planner.truncation_penalty" => c.planner.truncation_penalty = num(key, v)?,

        "harness.record_timings" => c.record_timings = boolean(key, v)?,

        "sweep.maps" => {
            f.sweep.maps = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| resolve(base_dir, s)).collect()
        }
        "sweep.agents" => f.sweep.agents = list(key, v)?,
        "sweep.channel_ratios" => f.sweep.channel_ratios = list(key, v)?,
        "sweep.controllers" => {
            f.sweep.controllers =
                v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| s.parse().map_err(|e: String| invalid(key, s, e))).collect::<Result<_, _>>()?
        }
        "sweep.seeds" => f.sweep.seeds = parse_seeds(key, v)?,
        _ => return Err(ConfigError::UnknownKey { line: 0, key: key.into() }),
    }
    Ok(())
}
