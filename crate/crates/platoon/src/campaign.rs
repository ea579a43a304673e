//! Ingestion of wide-format field-test CSV files.
//!
//! Column names differ between campaigns, so a TOML mapping names the time
//! column and the speed and position (or net spacing) columns of every
//! vehicle, front to back. Cleaning puts samples on a uniform grid,
//! interpolates short holes and splits the file at long ones.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use platoon_core::calibration::ObservedPair;
use platoon_core::model::Trajectory;
use platoon_core::sim::SimResult;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flag bit marking an interpolated sample.
pub const INTERPOLATED: u8 = 1 << 7;
/// Maximum tolerated deviation of a time stamp from the uniform grid, s.
pub const MAX_JITTER: f64 = 1e-3;
/// Longest hole (time between the valid samples around it) that is filled.
pub const MAX_FILL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapSetting {
    Min,
    Max,
    Human,
}

impl GapSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
            Self::Human => "human",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleColumns {
    #[serde(default)]
    pub name: Option<String>,
    pub speed: String,
    /// Front-bumper position column.
    #[serde(default)]
    pub position: Option<String>,
    /// Net (bumper to bumper) spacing to the vehicle ahead, used when
    /// `position` is absent.
    #[serde(default)]
    pub gap: Option<String>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignMapping {
    pub tag: String,
    #[serde(default)]
    pub gap_setting: Option<GapSetting>,
    pub time: String,
    /// Expected sampling rate, Hz; inferred from the time column if absent.
    #[serde(default)]
    pub sample_rate: Option<f64>,
    pub vehicles: Vec<VehicleColumns>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignVehicle {
    pub name: String,
    pub length: f64,
    pub trajectory: Trajectory,
}

/// A hole-free stretch of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRecord {
    pub vehicles: Vec<CampaignVehicle>,
    pub interpolated_samples: usize,
}

impl CampaignRecord {
    /// Consecutive leader/follower pairs.
    pub fn pairs(&self) -> Vec<ObservedPair> {
        self.vehicles
            .windows(2)
            .map(|w| ObservedPair {
                leader: w[0].trajectory.clone(),
                follower: w[1].trajectory.clone(),
                leader_length: w[0].length,
                follower_length: w[1].length,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignTable {
    pub tag: String,
    pub gap_setting: Option<GapSetting>,
    pub dt: f64,
    pub records: Vec<CampaignRecord>,
}

impl CampaignTable {
    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn interpolated_samples(&self) -> usize {
        self.records.iter().map(|r| r.interpolated_samples).sum()
    }

    pub fn pairs(&self) -> Vec<ObservedPair> {
        self.records.iter().flat_map(CampaignRecord::pairs).collect()
    }
}

impl CampaignMapping {
    fn validate(&self) -> Result<()> {
        if self.vehicles.len() < 2 {
            return Err(Error::config("mapping needs at least two vehicles"));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(v.length > 0.0) {
                return Err(Error::config(format!("vehicle {i}: length must be > 0")));
            }
            if i > 0 && v.position.is_none() && v.gap.is_none() {
                return Err(Error::config(format!("vehicle {i}: needs a position or a gap column")));
            }
        }
        if let Some(r) = self.sample_rate {
            if !(r > 0.0) {
                return Err(Error::config("sample_rate must be > 0"));
            }
        }
        Ok(())
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
        Error::config(format!(
            "unknown column `{name}`; available: {}",
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn value(s: &str) -> f64 {
    let s = s.trim();
    if s.is_empty() {
        f64::NAN
    } else {
        s.parse().unwrap_or(f64::NAN)
    }
}

/// Ingests CSV text under `mapping`.
pub fn ingest_str(text: &str, mapping: &CampaignMapping) -> Result<CampaignTable> {
    mapping.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(Error::data)?.clone();
    let t_col = column(&headers, &mapping.time)?;
    // Per vehicle: speed, position, gap column indices.
    let mut cols = Vec::with_capacity(mapping.vehicles.len());
    for v in &mapping.vehicles {
        let speed = column(&headers, &v.speed)?;
        let position = v.position.as_deref().map(|c| column(&headers, c)).transpose()?;
        let gap = match position {
            Some(_) => None,
            None => v.gap.as_deref().map(|c| column(&headers, c)).transpose()?,
        };
        cols.push((speed, position, gap));
    }
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::data)?;
        let t = value(rec.get(t_col).unwrap_or(""));
        if !t.is_finite() {
            return Err(Error::data(format!("data row {}: missing time stamp", line + 1)));
        }
        times.push(t);
        let mut row = Vec::with_capacity(3 * cols.len());
        for &(s, p, g) in &cols {
            row.push(value(rec.get(s).unwrap_or("")));
            row.push(p.map_or(f64::NAN, |c| value(rec.get(c).unwrap_or(""))));
            row.push(g.map_or(f64::NAN, |c| value(rec.get(c).unwrap_or(""))));
        }
        rows.push(row);
    }
    if times.len() < 2 {
        return Err(Error::data("need at least two samples"));
    }

    let diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::data("time column does not increase"));
    }
    let inferred = median(diffs);
    let dt = match mapping.sample_rate {
        Some(rate) => {
            let dt = 1.0 / rate;
            if (inferred - dt).abs() > MAX_JITTER {
                return Err(Error::data(format!("sampling interval {inferred} s does not match {rate} Hz")));
            }
            dt
        }
        None => inferred,
    };
    let t0 = times[0];
    let mut index = Vec::with_capacity(times.len());
    for (line, &t) in times.iter().enumerate() {
        let k = ((t - t0) / dt).round();
        if (t - (t0 + k * dt)).abs() > MAX_JITTER {
            return Err(Error::data(format!(
                "non-uniform sampling at data row {}: t = {t} is {:.4} s off the {dt} s grid",
                line + 1,
                t - (t0 + k * dt)
            )));
        }
        let k = k as usize;
        if index.last().is_some_and(|&prev| k <= prev) {
            return Err(Error::data(format!("time stamps not increasing at data row {}", line + 1)));
        }
        index.push(k);
    }
    let n = index.last().copied().unwrap_or(0) + 1;
    let width = rows[0].len();
    let mut grid = vec![vec![f64::NAN; width]; n];
    for (row, &k) in rows.into_iter().zip(&index) {
        grid[k] = row;
    }
    let needed: Vec<usize> = cols
        .iter()
        .enumerate()
        .flat_map(|(i, &(_, p, g))| {
            let mut v = vec![3 * i];
            if p.is_some() {
                v.push(3 * i + 1);
            } else if g.is_some() {
                v.push(3 * i + 2);
            }
            v
        })
        .collect();
    let valid: Vec<bool> = grid.iter().map(|r| needed.iter().all(|&c| r[c].is_finite())).collect();

    let mut records = Vec::new();
    let mut filled = vec![false; n];
    let mut start: Option<usize> = None;
    let mut last_valid: Option<usize> = None;
    let max_missing = (MAX_FILL / dt + 1e-9).floor() as usize;
    for k in 0..n {
        if !valid[k] {
            continue;
        }
        if let Some(prev) = last_valid {
            let missing = k - prev - 1;
            if missing > 0 && missing < max_missing {
                for j in prev + 1..k {
                    let w = (j - prev) as f64 / (k - prev) as f64;
                    for &c in &needed {
                        grid[j][c] = grid[prev][c] + w * (grid[k][c] - grid[prev][c]);
                    }
                    filled[j] = true;
                }
            } else if missing > 0 {
                records.push((start.take().expect("open record"), prev));
            }
        }
        if start.is_none() {
            start = Some(k);
        }
        last_valid = Some(k);
    }
    if let (Some(s), Some(e)) = (start, last_valid) {
        records.push((s, e));
    }

    let records = records
        .into_iter()
        .filter(|(s, e)| e > s)
        .map(|(s, e)| build_record(&grid[s..=e], &filled[s..=e], t0 + s as f64 * dt, dt, mapping, &cols))
        .collect();
    Ok(CampaignTable {
        tag: mapping.tag.clone(),
        gap_setting: mapping.gap_setting,
        dt,
        records,
    })
}

fn build_record(
    grid: &[Vec<f64>],
    filled: &[bool],
    t0: f64,
    dt: f64,
    mapping: &CampaignMapping,
    cols: &[(usize, Option<usize>, Option<usize>)],
) -> CampaignRecord {
    let n = grid.len();
    let mut vehicles: Vec<CampaignVehicle> = Vec::with_capacity(cols.len());
    for (i, (spec, &(_, p, _))) in mapping.vehicles.iter().zip(cols).enumerate() {
        let speed: Vec<f64> = grid.iter().map(|r| r[3 * i]).collect();
        let position: Vec<f64> = if p.is_some() {
            grid.iter().map(|r| r[3 * i + 1]).collect()
        } else if i == 0 {
            let mut x = vec![0.0; n];
            for k in 1..n {
                x[k] = x[k - 1] + 0.5 * dt * (speed[k - 1] + speed[k]);
            }
            x
        } else {
            let front = &vehicles[i - 1];
            (0..n).map(|k| front.trajectory.position[k] - (grid[k][3 * i + 2] + front.length)).collect()
        };
        let mut tr = Trajectory::with_capacity(dt, t0, n);
        for k in 0..n {
            let accel = if n < 2 {
                0.0
            } else if k + 1 < n {
                (speed[k + 1] - speed[k]) / dt
            } else {
                (speed[k] - speed[k - 1]) / dt
            };
            let (gap, lead) = match vehicles.last() {
                Some(f) => (f.trajectory.position[k] - position[k], f.trajectory.speed[k]),
                None => (f64::NAN, f64::NAN),
            };
            let flags = if filled[k] { INTERPOLATED } else { 0 };
            tr.push(position[k], speed[k], accel, gap, f64::NAN, lead, flags);
        }
        vehicles.push(CampaignVehicle {
            name: spec.name.clone().unwrap_or_else(|| format!("vehicle{i}")),
            length: spec.length,
            trajectory: tr,
        });
    }
    CampaignRecord {
        vehicles,
        interpolated_samples: filled.iter().filter(|f| **f).count(),
    }
}

pub fn ingest(path: &Path, mapping: &CampaignMapping) -> Result<CampaignTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(e).context(format!("reading {}", path.display())))?;
    ingest_str(&text, mapping).map_err(|e| e.context(format!("ingesting {}", path.display())))
}

/// Wide-format CSV of the given vehicles (front to back) with a matching
/// mapping. Vehicles must share the time grid.
pub fn export_wide(result: &SimResult, ids: &[usize], tag: &str) -> Result<(String, CampaignMapping)> {
    let traces: Vec<_> = ids
        .iter()
        .map(|&id| result.vehicle(id).ok_or_else(|| Error::data(format!("no vehicle {id}"))))
        .collect::<Result<_>>()?;
    let first = &traces[0].trajectory;
    if traces
        .iter()
        .any(|t| t.trajectory.len() != first.len() || t.trajectory.t0 != first.t0)
    {
        return Err(Error::data("vehicles do not share a time grid"));
    }
    let mut out = String::from("time");
    for id in ids {
        let _ = write!(out, ",v{id},x{id}");
    }
    out.push('\n');
    for k in 0..first.len() {
        let _ = write!(out, "{}", first.time(k));
        for t in &traces {
            let _ = write!(out, ",{},{}", t.trajectory.speed[k], t.trajectory.position[k]);
        }
        out.push('\n');
    }
    let mapping = CampaignMapping {
        tag: tag.to_string(),
        gap_setting: None,
        time: "time".to_string(),
        sample_rate: None,
        vehicles: traces
            .iter()
            .map(|t| VehicleColumns {
                name: Some(format!("id{}", t.id)),
                speed: format!("v{}", t.id),
                position: Some(format!("x{}", t.id)),
                gap: None,
                length: t.length,
            })
            .collect(),
    };
    Ok((out, mapping))
}
