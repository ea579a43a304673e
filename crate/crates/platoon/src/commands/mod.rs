//! Subcommand implementations. Each command has a pure function returning
//! its table and a `run_*` wrapper that writes artifacts.

pub mod calibrate;
pub mod gain;
pub mod metrics;
pub mod simulate;
pub mod sweep;
pub mod synthesize;
pub mod tune;
pub mod user_needs;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::campaign::{self, CampaignMapping, CampaignTable};
use crate::config::{self, LoadedConfig};
use crate::error::{Error, Result};
use crate::meta::{write_atomic, Metadata};
use crate::simcsv::{self, SimFile};

/// A CSV table with its metadata header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Metadata,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(meta: Metadata, header: &[&str]) -> Self {
        Self {
            meta,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.meta.write_header(&mut buf).map_err(Error::data)?;
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&self.header).map_err(Error::data)?;
        for r in &self.rows {
            w.write_record(r).map_err(Error::data)?;
        }
        let buf = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
        String::from_utf8(buf).map_err(Error::data)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render()?.as_bytes())
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Formats a float; non-finite values become empty fields.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Trajectory source shared by the analysis commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Simulation { simulation: PathBuf },
    Campaign { campaign: PathBuf, mapping: PathBuf },
}

/// Loaded trajectories: either one simulation or a cleaned campaign.
#[derive(Debug, Clone)]
pub enum Dataset {
    Simulation { tag: String, file: SimFile },
    Campaign(CampaignTable),
}

impl DataSource {
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match self {
            Self::Simulation { simulation } => {
                let path = resolve(simulation);
                let file = simcsv::read_path(&path)?;
                let tag = path.file_stem().map_or_else(|| "simulation".into(), |s| s.to_string_lossy().into_owned());
                Ok(Dataset::Simulation { tag, file })
            }
            Self::Campaign { campaign, mapping } => {
                let mapping: LoadedConfig<CampaignMapping> = config::load(&resolve(mapping))?;
                Ok(Dataset::Campaign(campaign::ingest(&resolve(campaign), &mapping.config)?))
            }
        }
    }
}

impl Dataset {
    pub fn tag(&self) -> &str {
        match self {
            Self::Simulation { tag, .. } => tag,
            Self::Campaign(t) => &t.tag,
        }
    }

    /// Vehicles grouped by record, front to back.
    pub fn records(&self) -> Vec<Vec<Member<'_>>> {
        match self {
            Self::Simulation { file, .. } => vec![file
                .result
                .vehicles
                .iter()
                .map(|v| Member {
                    id: v.id,
                    length: v.length,
                    trajectory: &v.trajectory,
                    model: file.controller_of(v.id).unwrap_or("unknown").to_string(),
                })
                .collect()],
            Self::Campaign(t) => t
                .records
                .iter()
                .map(|r| {
                    r.vehicles
                        .iter()
                        .enumerate()
                        .map(|(i, v)| Member {
                            id: i,
                            length: v.length,
                            trajectory: &v.trajectory,
                            model: "unknown".to_string(),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn metadata(&self, meta: &mut Metadata) {
        meta.push("source_tag", self.tag());
        match self {
            Self::Simulation { file, .. } => {
                if let Some(h) = file.meta.get("config_sha256") {
                    meta.push("source_config_sha256", h);
                }
            }
            Self::Campaign(t) => {
                meta.push("sample_rate_hz", t.sample_rate().to_string());
                meta.push("records", t.records.len().to_string());
                meta.push("interpolated_samples", t.interpolated_samples().to_string());
                if let Some(g) = t.gap_setting {
                    meta.push("gap_setting", g.as_str());
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Member<'a> {
    pub id: usize,
    pub length: f64,
    pub trajectory: &'a platoon_core::model::Trajectory,
    pub model: String,
}

/// Inclusive arithmetic grid `start, start + step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) {
            return Err(Error::config(format!("bad range {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // Rounded so that grid values print as typed.
        Ok((0..=n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}
