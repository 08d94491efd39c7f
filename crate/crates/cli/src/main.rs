use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mapf_airsim::harness::config::parse_cell;
use mapf_airsim::harness::{
    self, load_config, run_episode_in, sweep, threads_from_env, trace, Controller, EpisodeOptions, Environment,
    ExperimentConfig,
};
use mapf_airsim::map::{parse_map, parse_scenario};
use mapf_airsim::radio::{build_radio_map, LinkBudgetParams};

#[derive(Parser)]
#[command(name = "mapf-airsim", version, about = "Lifelong MAPF over a simulated wireless link")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run episodes for one configuration and write one CSV row per seed.
    Simulate(SimulateArgs),
    /// Run the grid described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the SNR map for an access point position.
    Radiomap {
        #[arg(long)]
        map: PathBuf,
        /// Access point cell as X,Y.
        #[arg(long)]
        ap: String,
        /// Config file supplying link.* parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and check a map and scenario pair.
    Validate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scen: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    scen: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long = "channel-ratio")]
    channel_ratio: Option<f64>,
    #[arg(long, value_parser = |s: &str| s.parse::<Controller>())]
    controller: Option<Controller>,
    /// A seed or a list such as `0..20` or `1,5,9`.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Leave the timing columns empty so output is byte-reproducible.
    #[arg(long)]
    no_timings: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-step positions, for the first seed.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Execution events, for the first seed.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long = "ul-log")]
    ul_log: Option<PathBuf>,
    #[arg(long = "dl-log")]
    dl_log: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?.base,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = a.map {
        cfg.map = m;
    }
    if a.scen.is_some() {
        cfg.scenario = a.scen;
    }
    if let Some(n) = a.agents {
        cfg.agents = n;
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(r) = a.channel_ratio {
        cfg.channel_ratio = r;
    }
    if let Some(c) = a.controller {
        cfg.controller = c;
    }
    if let Some(s) = &a.seed {
        cfg.seeds = harness::config::parse_seeds("--seed", s)?;
    }
    if a.no_timings {
        cfg.record_timings = false;
    }
    if cfg.map.as_os_str().is_empty() {
        bail!("no map given (use --map or a config file)");
    }
    if cfg.seeds.is_empty() {
        bail!("seed list is empty");
    }
    let env = Environment::load(&cfg.map, cfg.scenario.as_deref())?;
    let traced = a.events.is_some() || a.ul_log.is_some() || a.dl_log.is_some();
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        let opts = EpisodeOptions { trajectory: k == 0 && a.trajectory.is_some(), trace: k == 0 && traced };
        let res = run_episode_in(&env, &cfg, seed, opts).with_context(|| format!("seed {seed}"))?;
        if k == 0 {
            if let Some(p) = &a.trajectory {
                trace::write_trajectory(create(p)?, &res.trajectory)?;
            }
            if let Some(p) = &a.events {
                trace::write_events(create(p)?, &res.events)?;
            }
            if let Some(p) = &a.ul_log {
                trace::write_ul_log(create(p)?, &res.ul_log)?;
            }
            if let Some(p) = &a.dl_log {
                trace::write_dl_log(create(p)?, &res.dl_log)?;
            }
        }
        rows.push(res.record);
    }
    harness::write_csv(create(&a.out)?, &rows)?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Sweep { config, out } => {
            let file = load_config(&config)?;
            let rows = sweep(&file, threads_from_env()?)?;
            harness::write_csv(create(&out)?, &rows)?;
            Ok(())
        }
        Cmd::Radiomap { map, ap, config, out } => {
            let grid = parse_map(&std::fs::read(&map).with_context(|| map.display().to_string())?)?;
            let ap = parse_cell("--ap", &ap)?;
            if !grid.is_free(ap) {
                bail!("AP cell ({}, {}) is not a free cell of the map", ap.x, ap.y);
            }
            let link: LinkBudgetParams = match config {
                Some(p) => load_config(&p)?.base.link,
                None => LinkBudgetParams::default(),
            };
            link.validate().map_err(anyhow::Error::msg)?;
            let mut w = create(&out)?;
            build_radio_map(&grid, ap, &link).write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Cmd::Validate { map, scen } => {
            let grid = parse_map(&std::fs::read(&map).with_context(|| map.display().to_string())?)
                .with_context(|| format!("invalid map {}", map.display()))?;
            let mut out = io::stdout().lock();
            writeln!(out, "{}: {}x{}, {} free cells", map.display(), grid.width(), grid.height(), grid.free_cell_count())?;
            if let Some(s) = scen {
                let sc = parse_scenario(&std::fs::read(&s).with_context(|| s.display().to_string())?, &grid)
                    .with_context(|| format!("invalid scenario {}", s.display()))?;
                writeln!(out, "{}: {} entries", s.display(), sc.len())?;
            }
            Ok(())
        }
    }
}
