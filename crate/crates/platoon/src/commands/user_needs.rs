use std::path::{Path, PathBuf};

use platoon_core::controllers::ControllerSpec;
use platoon_core::metrics::{step_response_times, trajectory_energy, EnergyParams};
use platoon_core::model::{CtgParams, VtgParams};
use platoon_core::sim::{run, SimResult};
use platoon_core::stability::{estimate_deviation_gain, extract_deviations_recorded, OutputKind};
use platoon_core::synthesis::synthesize;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{num, opt, Table};
use crate::config::{load, LoadedConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::meta::{config_hash, Metadata};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserNeedsConfig {
    /// Nominal time gaps τ*, s.
    pub taus: Vec<f64>,
    /// CTG gains shared by the baseline and the VTG law.
    pub k1: f64,
    pub k2: f64,
    pub s0: f64,
    /// VTG weight sets `(ρ_s, ρ_v, ρ_u, γ)`.
    pub weights: Vec<[f64; 4]>,
    /// Leader speed-step scenario for rise and settling times.
    pub step_scenario: PathBuf,
    pub step: StepSpec,
    /// Leader drive cycle for γ̂ and energy.
    pub cycle_scenario: PathBuf,
    #[serde(default = "default_window")]
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub time: f64,
    pub from: f64,
    pub to: f64,
    /// Vehicle whose response is measured.
    #[serde(default = "default_follower")]
    pub vehicle: usize,
}

fn default_window() -> f64 {
    60.0
}

fn default_follower() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserNeedsRow {
    pub controller: &'static str,
    pub tau_star: f64,
    pub omega: Option<[f64; 4]>,
    pub rise_time: Option<f64>,
    pub settling_time: Option<f64>,
    pub mean_gamma_hat: Option<f64>,
    pub mean_energy: Option<f64>,
    pub note: String,
}

pub const HEADER: [&str; 11] = [
    "controller",
    "tau_star",
    "rho_s",
    "rho_v",
    "rho_u",
    "gamma",
    "rise_time",
    "settling_time",
    "mean_gamma_hat",
    "mean_energy",
    "note",
];

fn with_controller(base: &ScenarioConfig, spec: &ControllerSpec) -> ScenarioConfig {
    let mut sc = base.clone();
    for g in sc.vehicles.iter_mut() {
        g.spec.controller = spec.clone();
    }
    sc
}

fn followers(r: &SimResult) -> impl Iterator<Item = &platoon_core::sim::VehicleTrace> {
    r.vehicles
        .iter()
        .filter(|v| v.trajectory.lead_speed.iter().all(|x| x.is_finite()))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub struct Inputs<'a> {
    pub step: (&'a ScenarioConfig, &'a Path),
    pub cycle: (&'a ScenarioConfig, &'a Path),
}

fn evaluate(cfg: &UserNeedsConfig, inputs: &Inputs<'_>, tau: f64, omega: Option<[f64; 4]>) -> Result<UserNeedsRow> {
    let ctg = CtgParams {
        k1: cfg.k1,
        k2: cfg.k2,
        tau,
        s0: cfg.s0,
    };
    let spec = match omega {
        None => ControllerSpec::Ctg(ctg),
        Some(w) => ControllerSpec::Vtg(VtgParams::new(ctg, w[0], w[1], w[2], w[3])),
    };
    let mut row = UserNeedsRow {
        controller: if omega.is_some() { "vtg" } else { "ctg" },
        tau_star: tau,
        omega,
        rise_time: None,
        settling_time: None,
        mean_gamma_hat: None,
        mean_energy: None,
        note: String::new(),
    };
    if let ControllerSpec::Vtg(p) = &spec {
        if let Err(e) = synthesize(p, cfg.step.from.max(1.0)) {
            row.note = format!("infeasible: {e}");
            return Ok(row);
        }
    }

    let (base, dir) = inputs.step;
    let step = run(&with_controller(base, &spec).to_scenario(dir)?)?;
    let tr = &step
        .vehicle(cfg.step.vehicle)
        .ok_or_else(|| Error::config(format!("step scenario has no vehicle {}", cfg.step.vehicle)))?
        .trajectory;
    let k0 = ((cfg.step.time - tr.t0) / tr.dt).round().max(0.0) as usize;
    let sr = step_response_times(&tr.speed[k0.min(tr.len())..], cfg.step.from, cfg.step.to, tr.dt)?;
    row.rise_time = sr.rise_time;
    row.settling_time = sr.settling_time;

    let (base, dir) = inputs.cycle;
    let cycle = run(&with_controller(base, &spec).to_scenario(dir)?)?;
    let mut gains = Vec::new();
    let mut energy = Vec::new();
    for v in followers(&cycle) {
        let d = extract_deviations_recorded(&v.trajectory, cfg.window, OutputKind::Speed, None)?;
        if let Ok(g) = estimate_deviation_gain(&d, None) {
            gains.push(g.gamma_hat);
        }
        if let Some(e) = trajectory_energy(&v.trajectory, &EnergyParams::default()).energy_index {
            energy.push(e);
        }
    }
    row.mean_gamma_hat = mean(&gains);
    row.mean_energy = mean(&energy);
    if step.collided() || cycle.collided() {
        row.note = "collision".to_string();
    }
    Ok(row)
}

pub fn user_needs(cfg: &UserNeedsConfig, inputs: &Inputs<'_>) -> Result<Vec<UserNeedsRow>> {
    let jobs: Vec<(f64, Option<[f64; 4]>)> = cfg
        .taus
        .iter()
        .flat_map(|&t| std::iter::once((t, None)).chain(cfg.weights.iter().map(move |w| (t, Some(*w)))))
        .collect();
    jobs.par_iter().map(|&(t, w)| evaluate(cfg, inputs, t, w)).collect()
}

pub fn table(rows: &[UserNeedsRow], meta: Metadata) -> Table {
    let mut t = Table::new(meta, &HEADER);
    for r in rows {
        let mut out = vec![r.controller.to_string(), num(r.tau_star)];
        match r.omega {
            Some(w) => out.extend(w.iter().map(|x| num(*x))),
            None => out.extend(std::iter::repeat_n(String::new(), 4)),
        }
        out.extend([
            opt(r.rise_time),
            opt(r.settling_time),
            opt(r.mean_gamma_hat),
            opt(r.mean_energy),
            r.note.clone(),
        ]);
        t.push(out);
    }
    t
}

pub fn run_user_needs(config: &Path, out: &Path) -> Result<Table> {
    let loaded: LoadedConfig<UserNeedsConfig> = load(config)?;
    let cfg = &loaded.config;
    let step: LoadedConfig<ScenarioConfig> = load(&loaded.resolve(&cfg.step_scenario))?;
    let cycle: LoadedConfig<ScenarioConfig> = load(&loaded.resolve(&cfg.cycle_scenario))?;
    let rows = user_needs(
        cfg,
        &Inputs {
            step: (&step.config, step.dir()),
            cycle: (&cycle.config, cycle.dir()),
        },
    )?;
    let mut meta = Metadata::new(Some(cycle.config.seed), Some(&loaded.text));
    meta.push("step_scenario_sha256", config_hash(&step.text));
    meta.push("cycle_scenario_sha256", config_hash(&cycle.text));
    let t = table(&rows, meta);
    t.write(out)?;
    Ok(t)
}
