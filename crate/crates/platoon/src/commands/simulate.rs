use std::path::Path;

use platoon_core::sim::{run, RiccatiMode, Scenario};

use crate::config::{load_scenario, LoadedConfig, ScenarioConfig};
use crate::error::Result;
use crate::meta::Metadata;
use crate::simcsv::{self, SimFile};

/// Runs a loaded scenario and attaches artifact metadata.
pub fn simulate(loaded: &LoadedConfig<ScenarioConfig>, scenario: &Scenario, exact: bool) -> Result<SimFile> {
    let mut scenario = scenario.clone();
    if exact {
        scenario.riccati = RiccatiMode::Exact;
    }
    let result = run(&scenario)?;
    let mut meta = Metadata::new(Some(loaded.config.seed), Some(&loaded.text));
    meta.push("riccati", if exact { "exact" } else { "schedule" });
    simcsv::describe(&mut meta, &scenario, &result);
    Ok(SimFile {
        controllers: simcsv::controller_table(&scenario)
            .into_iter()
            .filter(|(i, _)| result.vehicle(*i).is_some())
            .collect(),
        meta,
        result,
    })
}

pub fn run_simulate(config: &Path, out: &Path, exact: bool) -> Result<SimFile> {
    let (loaded, scenario) = load_scenario(config)?;
    let file = simulate(&loaded, &scenario, exact)?;
    simcsv::write(out, &file.meta, &file.result)?;
    if file.result.synthesis_fallbacks > 0 {
        log::warn!("{} step(s) fell back to CTG for lack of a feasible synthesis", file.result.synthesis_fallbacks);
    }
    if file.result.collided() {
        log::warn!("{} collision(s); first at t = {} s", file.result.collisions.len(), file.result.collisions[0].time);
    }
    Ok(file)
}
