//! Declarative TOML scenario files.
//!
//! A scenario file mirrors [`Scenario`] with three conveniences: vehicle
//! groups carry a `count`, a recorded leader is read from a simulation CSV
//! by path, and an optional `[init]` table places the platoon at
//! equilibrium and perturbs initial speeds with the file's seed.

use std::fs;
use std::path::{Path, PathBuf};

use platoon_core::sim::{
    init_equilibrium, perturb_initial_speeds, AccelSegment, Event, Leader, LeaderProfile, RiccatiMode, Scenario,
    Topology, VehicleSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simcsv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub topology: Topology,
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub leader: Option<LeaderConfig>,
    pub vehicles: Vec<VehicleGroup>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub riccati: RiccatiMode,
    #[serde(default = "default_true")]
    pub fail_safe: bool,
    #[serde(default)]
    pub init: Option<InitConfig>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderConfig {
    pub length: f64,
    #[serde(default)]
    pub position: f64,
    pub profile: ProfileConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileConfig {
    Constant {
        speed: f64,
    },
    Piecewise {
        initial_speed: f64,
        #[serde(default)]
        segments: Vec<AccelSegment>,
    },
    /// One vehicle of a simulation CSV, resolved against the config directory.
    Recorded {
        path: PathBuf,
        #[serde(default)]
        vehicle: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleGroup {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(flatten)]
    pub spec: VehicleSpec,
}

fn default_count() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub v_eq: f64,
    /// Uniform initial-speed perturbation amplitude, m/s.
    #[serde(default)]
    pub perturb: f64,
}

/// A parsed scenario file together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig<T> {
    pub config: T,
    pub text: String,
    pub path: PathBuf,
}

impl<T> LoadedConfig<T> {
    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    /// Resolves `p` against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir().join(p)
        }
    }
}

/// Reads and parses any TOML config.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<LoadedConfig<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(e).context(format!("reading {}", path.display())))?;
    let config = toml::from_str(&text).map_err(|e| Error::config(e).context(format!("parsing {}", path.display())))?;
    Ok(LoadedConfig {
        config,
        text,
        path: path.to_path_buf(),
    })
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(Error::config)
    }

    /// Expands groups, loads recorded leaders and applies `[init]`.
    pub fn to_scenario(&self, base: &Path) -> Result<Scenario> {
        let leader = match &self.leader {
            None => None,
            Some(l) => Some(Leader {
                length: l.length,
                position: l.position,
                profile: match &l.profile {
                    ProfileConfig::Constant { speed } => LeaderProfile::Constant { speed: *speed },
                    ProfileConfig::Piecewise {
                        initial_speed,
                        segments,
                    } => LeaderProfile::Piecewise {
                        initial_speed: *initial_speed,
                        segments: segments.clone(),
                    },
                    ProfileConfig::Recorded { path, vehicle } => {
                        let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                        let sim = simcsv::read_path(&full)?;
                        let trace = sim
                            .result
                            .vehicle(*vehicle)
                            .ok_or_else(|| Error::config(format!("{} has no vehicle {vehicle}", full.display())))?;
                        LeaderProfile::Recorded(trace.trajectory.clone())
                    }
                },
            }),
        };
        let vehicles = self
            .vehicles
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.spec.clone(), g.count))
            .collect();
        let mut scenario = Scenario {
            topology: self.topology,
            dt: self.dt,
            duration: self.duration,
            leader,
            vehicles,
            events: self.events.clone(),
            riccati: self.riccati,
            fail_safe: self.fail_safe,
        };
        if let Some(init) = self.init {
            scenario = init_equilibrium(&scenario, init.v_eq).map_err(|e| Error::config(e).context("initialising equilibrium"))?;
            if init.perturb > 0.0 {
                scenario = perturb_initial_speeds(&scenario, init.perturb, self.seed);
            }
        }
        scenario.validate().map_err(Error::config)?;
        Ok(scenario)
    }
}

/// Loads a scenario file and builds its [`Scenario`].
pub fn load_scenario(path: &Path) -> Result<(LoadedConfig<ScenarioConfig>, Scenario)> {
    let loaded: LoadedConfig<ScenarioConfig> = load(path)?;
    let scenario = loaded.config.to_scenario(loaded.dir())?;
    Ok((loaded, scenario))
}
