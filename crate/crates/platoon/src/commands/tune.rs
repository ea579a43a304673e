use std::path::{Path, PathBuf};
use std::time::Instant;

use platoon_core::calibration::{tune_penalties, TuningEvaluation, TuningProblem, TuningResult, RHO_U_MIN};
use platoon_core::de::DeConfig;
use platoon_core::sim::Scenario;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, Table};
use crate::config::{load, load_scenario, LoadedConfig};
use crate::error::Result;
use crate::exec::RayonExecutor;
use crate::meta::{config_hash, write_sidecar, Metadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default)]
    pub seed: u64,
    /// Training scenario file.
    pub scenario: PathBuf,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_lower")]
    pub lower: [f64; 4],
    #[serde(default = "default_upper")]
    pub upper: [f64; 4],
    #[serde(default = "default_ttc")]
    pub ttc_threshold: f64,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub normalize: bool,
    /// Weight sets evaluated alongside the optimum.
    #[serde(default)]
    pub reference: Vec<Reference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub name: String,
    /// `(ρ_s, ρ_v, ρ_u, γ)`.
    pub omega: [f64; 4],
}

fn default_population() -> usize {
    20
}

fn default_iterations() -> usize {
    50
}

fn default_lower() -> [f64; 4] {
    [0.0, 0.0, RHO_U_MIN, 0.0]
}

fn default_upper() -> [f64; 4] {
    [1.0; 4]
}

fn default_ttc() -> f64 {
    4.0
}

fn default_window() -> f64 {
    60.0
}

pub fn problem(cfg: &TuneConfig, scenario: Scenario) -> TuningProblem {
    let mut p = TuningProblem::new(scenario);
    p.lower = cfg.lower;
    p.upper = cfg.upper;
    p.de = DeConfig::default().with_size(cfg.population, cfg.iterations).with_seed(cfg.seed);
    p.ttc_threshold = cfg.ttc_threshold;
    p.window = cfg.window;
    p.normalize = cfg.normalize;
    p
}

pub const HEADER: [&str; 10] = [
    "label",
    "rho_s",
    "rho_v",
    "rho_u",
    "gamma",
    "objective",
    "mean_gamma_hat",
    "mean_tet",
    "mean_energy",
    "penalty_reason",
];

fn mean(e: &TuningEvaluation, f: impl Fn(&platoon_core::calibration::FollowerBreakdown) -> f64) -> f64 {
    if e.followers.is_empty() {
        f64::NAN
    } else {
        e.followers.iter().map(f).sum::<f64>() / e.followers.len() as f64
    }
}

fn row(label: &str, e: &TuningEvaluation) -> Vec<String> {
    let mut r = vec![label.to_string()];
    r.extend(e.omega.iter().map(|x| num(*x)));
    r.extend([
        num(e.objective),
        num(mean(e, |f| f.gamma_hat)),
        num(mean(e, |f| f.tet)),
        num(mean(e, |f| f.energy)),
        e.penalty_reason.clone().unwrap_or_default(),
    ]);
    r
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub result: TuningResult,
    pub references: Vec<(String, TuningEvaluation)>,
    pub table: Table,
    pub wall_time_s: f64,
}

pub fn tune(cfg: &TuneConfig, scenario: Scenario, meta: Metadata) -> Result<TuneOutcome> {
    let p = problem(cfg, scenario);
    let started = Instant::now();
    let result = tune_penalties(&p, &RayonExecutor)?;
    let wall_time_s = started.elapsed().as_secs_f64();
    let references: Vec<(String, TuningEvaluation)> = cfg
        .reference
        .par_iter()
        .map(|r| (r.name.clone(), p.evaluate(&r.omega)))
        .collect();
    let mut table = Table::new(meta, &HEADER);
    table.push(row("optimum", &result.breakdown));
    for (name, e) in &references {
        table.push(row(name, e));
    }
    Ok(TuneOutcome {
        result,
        references,
        table,
        wall_time_s,
    })
}

pub fn run_tune(config: &Path, out: &Path) -> Result<TuneOutcome> {
    let loaded: LoadedConfig<TuneConfig> = load(config)?;
    let cfg = &loaded.config;
    let (scen_cfg, scenario) = load_scenario(&loaded.resolve(&cfg.scenario))?;
    let mut meta = Metadata::new(Some(cfg.seed), Some(&loaded.text));
    meta.push("scenario_sha256", config_hash(&scen_cfg.text));
    let outcome = tune(cfg, scenario, meta.clone())?;
    outcome.table.write(out)?;
    write_sidecar(
        out,
        &json!({
            "metadata": meta.to_json(),
            "seed": cfg.seed,
            "bounds": { "lower": cfg.lower, "upper": cfg.upper },
            "weights": ["rho_s", "rho_v", "rho_u", "gamma"],
            "population": cfg.population,
            "iterations": cfg.iterations,
            "normalize": cfg.normalize,
            "evaluations": outcome.result.evaluations,
            "wall_time_s": outcome.wall_time_s,
            "history": outcome.result.history,
        }),
    )?;
    Ok(outcome)
}
