use std::path::Path;

use platoon_core::stability::{
    estimate_deviation_gain, extract_deviations_recorded, NominalPolicy, OutputKind, StabilityError,
};

use super::{num, DataSource, Dataset, Table};
use crate::error::{Error, Result};
use crate::meta::Metadata;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainOptions {
    pub output: OutputKind,
    /// Window width; `⌊√N⌋` when absent.
    pub m: Option<usize>,
    /// Length of the equilibrium windows, s.
    pub window: f64,
    /// Spacing policy for gap outputs.
    pub s0: Option<f64>,
    pub tau: Option<f64>,
}

impl Default for GainOptions {
    fn default() -> Self {
        Self {
            output: OutputKind::Speed,
            m: None,
            window: 60.0,
            s0: None,
            tau: None,
        }
    }
}

pub const HEADER: [&str; 9] = [
    "tag",
    "record",
    "follower",
    "output_kind",
    "gamma_hat",
    "m",
    "n_d",
    "excited",
    "linear_assumption",
];

fn linearity(model: &str) -> &'static str {
    match model {
        "ctg" => "linear",
        "vtg" | "idm" | "qsmc" => "nonlinear",
        _ => "unknown",
    }
}

/// One row per follower with a predecessor over its whole record.
pub fn estimate(data: &Dataset, opts: &GainOptions, mut meta: Metadata) -> Result<Table> {
    let kind = match opts.output {
        OutputKind::Speed => "speed",
        OutputKind::Gap => "gap",
    };
    meta.push("window_s", opts.window.to_string());
    meta.push("m", opts.m.map_or_else(|| "floor(sqrt(n_d))".to_string(), |m| m.to_string()));
    data.metadata(&mut meta);
    let mut table = Table::new(meta, &HEADER);
    for (r, record) in data.records().iter().enumerate() {
        for (pos, v) in record.iter().enumerate() {
            let tr = v.trajectory;
            if tr.lead_speed.iter().any(|x| !x.is_finite()) || tr.len() < 3 {
                continue;
            }
            let policy = match opts.output {
                OutputKind::Speed => None,
                OutputKind::Gap => {
                    let (Some(s0), Some(tau)) = (opts.s0, opts.tau) else {
                        return Err(Error::config("gap output needs --s0 and --tau"));
                    };
                    // Predecessor length: record order for campaigns, id order for simulations.
                    let lead = if pos > 0 { &record[pos - 1] } else { record.last().expect("non-empty") };
                    Some(NominalPolicy {
                        s0,
                        leader_length: lead.length,
                        tau,
                    })
                }
            };
            let d = extract_deviations_recorded(tr, opts.window, opts.output, policy)?;
            let base = vec![data.tag().to_string(), r.to_string(), v.id.to_string(), kind.to_string()];
            let tail = |g: String, m: String, excited: bool| {
                let mut row = base.clone();
                row.extend([g, m, d.input.len().to_string(), excited.to_string(), linearity(&v.model).to_string()]);
                row
            };
            match estimate_deviation_gain(&d, opts.m) {
                Ok(g) => table.push(tail(num(g.gamma_hat), g.m.to_string(), true)),
                Err(StabilityError::NotExcited { m, .. }) => table.push(tail(String::new(), m.to_string(), false)),
                Err(e) => return Err(Error::from(e).context(format!("record {r}, follower {}", v.id))),
            }
        }
    }
    Ok(table)
}

pub fn run_estimate_gain(source: &DataSource, opts: &GainOptions, out: &Path) -> Result<Table> {
    let data = source.load(Path::new("."))?;
    let table = estimate(&data, opts, Metadata::new(None, None))?;
    table.write(out)?;
    Ok(table)
}
