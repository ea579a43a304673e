use std::path::{Path, PathBuf};

use platoon_core::controllers::ControllerSpec;
use platoon_core::sim::{run, SimResult, Topology};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, opt, Range, Table};
use crate::config::{load, LoadedConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::meta::{config_hash, write_sidecar, Metadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Base scenario; every vehicle's controller and actuation are replaced.
    pub scenario: PathBuf,
    /// Actuator lag grid, s.
    pub lags: Range,
    /// Input delay grid, s.
    pub delays: Range,
    pub controllers: Vec<NamedController>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedController {
    pub name: String,
    pub controller: ControllerSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub controller: String,
    pub lag: f64,
    pub delay: f64,
    pub collided: bool,
    pub first_collision: Option<f64>,
    pub min_net_gap: f64,
}

impl Cell {
    /// `lag + delay`, rounded to 1 ns so grid sums compare exactly.
    pub fn total(&self) -> f64 {
        ((self.lag + self.delay) * 1e9).round() / 1e9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    pub controller: String,
    /// Smallest `lag + delay` among colliding cells.
    pub min_colliding_total: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<Cell>,
    pub frontiers: Vec<Frontier>,
    pub table: Table,
}

/// Smallest net (bumper to bumper) gap over all followers.
pub fn min_net_gap(r: &SimResult, ring: bool) -> f64 {
    let n = r.vehicles.len();
    let mut best = f64::INFINITY;
    for (i, v) in r.vehicles.iter().enumerate() {
        let lead = match (i, ring) {
            (0, true) => &r.vehicles[n - 1],
            (0, false) => continue,
            _ => &r.vehicles[i - 1],
        };
        for g in &v.trajectory.gap {
            if g.is_finite() {
                best = best.min(g - lead.length);
            }
        }
    }
    best
}

pub const HEADER: [&str; 7] = ["controller", "lag", "delay", "total", "collided", "first_collision_time", "min_net_gap"];

pub fn sweep(cfg: &SweepConfig, base: &ScenarioConfig, base_dir: &Path, meta: Metadata) -> Result<SweepOutcome> {
    if base.init.is_none() {
        return Err(Error::config("sweep base scenario needs an [init] table"));
    }
    let lags = cfg.lags.values()?;
    let delays = cfg.delays.values()?;
    let jobs: Vec<(usize, f64, f64)> = (0..cfg.controllers.len())
        .flat_map(|c| {
            let delays = &delays;
            lags.iter().flat_map(move |&l| delays.iter().map(move |&d| (c, l, d)))
        })
        .collect();
    let ring = matches!(base.topology, Topology::Ring { .. });
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(c, lag, delay)| {
            let mut sc = base.clone();
            for g in sc.vehicles.iter_mut() {
                g.spec.controller = cfg.controllers[c].controller.clone();
                g.spec.actuation.lag = lag;
                g.spec.actuation.delay = delay;
            }
            let r = run(&sc.to_scenario(base_dir)?)?;
            Ok(Cell {
                controller: cfg.controllers[c].name.clone(),
                lag,
                delay,
                collided: r.collided(),
                first_collision: r.collisions.first().map(|c| c.time),
                min_net_gap: min_net_gap(&r, ring),
            })
        })
        .collect::<Result<_>>()?;
    let frontiers = cfg
        .controllers
        .iter()
        .map(|c| Frontier {
            controller: c.name.clone(),
            min_colliding_total: cells
                .iter()
                .filter(|x| x.controller == c.name && x.collided)
                .map(Cell::total)
                .reduce(f64::min),
        })
        .collect::<Vec<_>>();
    let mut meta = meta;
    for f in &frontiers {
        meta.push(&format!("frontier_{}", f.controller), opt(f.min_colliding_total));
    }
    let mut table = Table::new(meta, &HEADER);
    for c in &cells {
        table.push(vec![
            c.controller.clone(),
            num(c.lag),
            num(c.delay),
            num(c.total()),
            c.collided.to_string(),
            opt(c.first_collision),
            num(c.min_net_gap),
        ]);
    }
    Ok(SweepOutcome { cells, frontiers, table })
}

pub fn run_sweep(config: &Path, out: &Path) -> Result<SweepOutcome> {
    let loaded: LoadedConfig<SweepConfig> = load(config)?;
    let base: LoadedConfig<ScenarioConfig> = load(&loaded.resolve(&loaded.config.scenario))?;
    let mut meta = Metadata::new(Some(base.config.seed), Some(&loaded.text));
    meta.push("scenario_sha256", config_hash(&base.text));
    let outcome = sweep(&loaded.config, &base.config, base.dir(), meta.clone())?;
    outcome.table.write(out)?;
    let frontiers: Vec<_> = outcome
        .frontiers
        .iter()
        .map(|f| json!({ "controller": f.controller, "min_colliding_total_delay": f.min_colliding_total }))
        .collect();
    write_sidecar(out, &json!({ "metadata": meta.to_json(), "frontiers": frontiers }))?;
    for f in &outcome.frontiers {
        match f.min_colliding_total {
            Some(t) => println!("{}: first collision at total delay {t} s", f.controller),
            None => println!("{}: no collision on the grid", f.controller),
        }
    }
    Ok(outcome)
}
