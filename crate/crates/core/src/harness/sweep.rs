//! Cartesian sweeps over (map, N, r_ch, controller, seed).

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{ConfigFile, Controller, ExperimentConfig};
use super::episode::{run_episode_in, EpisodeOptions, Environment};
use super::metrics::MetricsRecord;
use super::HarnessError;

/// Environment variable capping worker threads. `0` or unset means one
/// worker per CPU.
pub const THREADS_ENV: &str = "MAPF_AIRSIM_THREADS";

/// One cell of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub map: PathBuf,
    pub agents: usize,
    pub channel_ratio: f64,
    pub controller: Controller,
    pub seed: u64,
}

impl std::fmt::Display for RunSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "map={} N={} r_ch={} controller={} seed={}",
            self.map.display(),
            self.agents,
            self.channel_ratio,
            self.controller,
            self.seed
        )
    }
}

fn or_base<T: Clone>(v: &[T], d: T) -> Vec<T> {
    if v.is_empty() {
        vec![d]
    } else {
        v.to_vec()
    }
}

/// Expands a config file into runs, in (map, N, r_ch, controller, seed)
/// order. Empty sweep lists fall back to the base value, except seeds,
/// which fall back to the base seed list and must not end up empty.
pub fn expand(file: &ConfigFile) -> Result<Vec<RunSpec>, HarnessError> {
    let b = &file.base;
    let s = &file.sweep;
    let maps: Vec<PathBuf> = or_base(&s.maps, b.map.clone());
    let agents = or_base(&s.agents, b.agents);
    let ratios = or_base(&s.channel_ratios, b.channel_ratio);
    let controllers = or_base(&s.controllers, b.controller);
    let seeds = if s.seeds.is_empty() { b.seeds.clone() } else { s.seeds.clone() };
    if seeds.is_empty() {
        return Err(HarnessError::EmptyGrid("seed list is empty".into()));
    }
    if maps.iter().any(|m| m.as_os_str().is_empty()) {
        return Err(HarnessError::EmptyGrid("no map given".into()));
    }
    let mut out = Vec::new();
    for map in &maps {
        for &n in &agents {
            for &r in &ratios {
                for &c in &controllers {
                    for &seed in &seeds {
                        out.push(RunSpec { map: map.clone(), agents: n, channel_ratio: r, controller: c, seed });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Worker count from the environment, `None` for automatic.
pub fn threads_from_env() -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(k) => Ok(Some(k)),
            Err(_) => Err(HarnessError::Threads(v)),
        },
        Err(_) => Ok(None),
    }
}

/// Runs every cell of the grid with `threads` workers (`None` = one per
/// CPU). Rows come back in grid order whatever the thread count.
pub fn sweep(file: &ConfigFile, threads: Option<usize>) -> Result<Vec<MetricsRecord>, HarnessError> {
    let runs = expand(file)?;
    let mut envs: HashMap<PathBuf, Environment> = HashMap::new();
    for r in &runs {
        if !envs.contains_key(&r.map) {
            let env = Environment::load(&r.map, file.base.scenario.as_deref())
                .map_err(|e| HarnessError::Run { run: r.to_string(), source: Box::new(e) })?;
            envs.insert(r.map.clone(), env);
        }
    }
    let job = |r: &RunSpec| -> Result<MetricsRecord, HarnessError> {
        let cfg = ExperimentConfig {
            map: r.map.clone(),
            agents: r.agents,
            channel_ratio: r.channel_ratio,
            controller: r.controller,
            seeds: vec![r.seed],
            ..file.base.clone()
        };
        run_episode_in(&envs[&r.map], &cfg, r.seed, EpisodeOptions::default())
            .map(|o| o.record)
            .map_err(|e| HarnessError::Run { run: r.to_string(), source: Box::new(e) })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Threads(e.to_string()))?;
    pool.install(|| runs.par_iter().map(job).collect())
}
