use std::path::Path;

use platoon_core::metrics::{safety_report, trajectory_energy, EnergyParams};

use super::{num, opt, DataSource, Dataset, Table};
use crate::error::Result;
use crate::meta::Metadata;

pub const HEADER: [&str; 7] = ["tag", "record", "id", "min_ttc", "tet", "max_drac", "energy"];

/// Safety and energy indices per vehicle; safety fields are empty for a
/// vehicle without a predecessor.
pub fn compute(data: &Dataset, ttc_threshold: f64, energy: &EnergyParams, mut meta: Metadata) -> Result<Table> {
    meta.push("ttc_threshold_s", ttc_threshold.to_string());
    data.metadata(&mut meta);
    let mut table = Table::new(meta, &HEADER);
    for (r, record) in data.records().iter().enumerate() {
        for v in record {
            let tr = v.trajectory;
            let e = trajectory_energy(tr, energy).energy_index;
            let has_lead = tr.lead_speed.iter().any(|x| x.is_finite());
            let (min_ttc, tet, drac) = if has_lead {
                let s = safety_report(tr, ttc_threshold)?;
                (opt(s.min_ttc), num(s.time_exposed_ttc), num(s.max_drac))
            } else {
                Default::default()
            };
            table.push(vec![data.tag().to_string(), r.to_string(), v.id.to_string(), min_ttc, tet, drac, opt(e)]);
        }
    }
    Ok(table)
}

pub fn run_metrics(source: &DataSource, ttc_threshold: f64, out: &Path) -> Result<Table> {
    let data = source.load(Path::new("."))?;
    let table = compute(&data, ttc_threshold, &EnergyParams::default(), Metadata::new(None, None))?;
    table.write(out)?;
    Ok(table)
}
