use std::path::Path;
use std::time::Instant;

use platoon_core::calibration::{calibrate, CalibrationProblem, CalibrationResult, ModelKind, ObservedPair, Weights};
use platoon_core::de::DeConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, DataSource, Dataset, Table};
use crate::config::{load, LoadedConfig};
use crate::error::{Error, Result};
use crate::exec::RayonExecutor;
use crate::meta::{write_sidecar, Metadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelKind,
    /// Standstill distance held fixed for CTG, m.
    pub s0: f64,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub fail_safe: bool,
    pub data: DataSource,
}

fn default_population() -> usize {
    30
}

fn default_iterations() -> usize {
    100
}

/// Leader/follower pairs of every record.
pub fn observed_pairs(data: &Dataset) -> Vec<ObservedPair> {
    match data {
        Dataset::Campaign(t) => t.pairs(),
        Dataset::Simulation { .. } => data
            .records()
            .iter()
            .flat_map(|r| {
                r.windows(2)
                    .filter(|w| w[0].trajectory.t0 == w[1].trajectory.t0 && w[0].trajectory.len() == w[1].trajectory.len())
                    .map(|w| ObservedPair {
                        leader: w[0].trajectory.clone(),
                        follower: w[1].trajectory.clone(),
                        leader_length: w[0].length,
                        follower_length: w[1].length,
                    })
                    .collect::<Vec<_>>()
            })
            .collect(),
    }
}

pub fn problem(cfg: &CalibrateConfig, pairs: Vec<ObservedPair>) -> CalibrationProblem {
    let mut p = CalibrationProblem::new(pairs, cfg.model, cfg.s0);
    if let Some(b) = &cfg.bounds {
        p.bounds = b.clone();
    }
    p.weights = cfg.weights;
    p.de = DeConfig::default().with_size(cfg.population, cfg.iterations).with_seed(cfg.seed);
    p.fail_safe = cfg.fail_safe;
    p
}

pub fn report(cfg: &CalibrateConfig, r: &CalibrationResult, pairs: usize, meta: Metadata) -> Table {
    let names = cfg.model.parameter_names();
    let mut header = vec!["model"];
    header.extend_from_slice(names);
    header.extend(["objective", "pairs", "evaluations"]);
    let mut t = Table::new(meta, &header);
    let mut row = vec![format!("{:?}", cfg.model).to_lowercase()];
    row.extend(r.best_params.iter().map(|x| num(*x)));
    row.extend([num(r.objective), pairs.to_string(), r.evaluations.to_string()]);
    t.push(row);
    t
}

pub fn run_calibrate(config: &Path, out: &Path) -> Result<Table> {
    let loaded: LoadedConfig<CalibrateConfig> = load(config)?;
    let cfg = &loaded.config;
    let data = cfg.data.load(loaded.dir())?;
    let pairs = observed_pairs(&data);
    if pairs.is_empty() {
        return Err(Error::data("no leader/follower pairs in the data"));
    }
    let n_pairs = pairs.len();
    let p = problem(cfg, pairs);
    let started = Instant::now();
    let r = calibrate(&p, &RayonExecutor)?;
    let wall = started.elapsed().as_secs_f64();
    let mut meta = Metadata::new(Some(cfg.seed), Some(&loaded.text));
    data.metadata(&mut meta);
    let table = report(cfg, &r, n_pairs, meta.clone());
    table.write(out)?;
    write_sidecar(
        out,
        &json!({
            "metadata": meta.to_json(),
            "seed": cfg.seed,
            "model": cfg.model,
            "parameters": cfg.model.parameter_names(),
            "bounds": p.bounds,
            "weights": p.weights,
            "population": p.de.population,
            "iterations": p.de.max_iter,
            "wall_time_s": wall,
            "history": r.history,
        }),
    )?;
    Ok(table)
}
