//! Simulation results as long-format CSV.
//!
//! One row per vehicle per sample with columns
//! `t,id,x,v,a,gap,tau_cmd,flags,lead_v`, grouped by vehicle id. Missing
//! values (a leader's gap) are empty fields. Floats use Rust's shortest
//! round-trip form, so reading back reproduces every value bit for bit;
//! times are rounded to 1 ns and rebuilt from `t0 + k·dt`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use platoon_core::controllers::ControllerSpec;
use platoon_core::model::Trajectory;
use platoon_core::sim::{Collision, Scenario, SimResult, Topology, VehicleTrace};

use crate::error::{Error, Result};
use crate::meta::{write_atomic, Metadata};

pub const COLUMNS: [&str; 9] = ["t", "id", "x", "v", "a", "gap", "tau_cmd", "flags", "lead_v"];

/// A simulation result with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFile {
    pub meta: Metadata,
    pub result: SimResult,
    /// Controller kind per id (`leader` for an uncontrolled leader).
    pub controllers: Vec<(usize, String)>,
}

impl SimFile {
    pub fn controller_of(&self, id: usize) -> Option<&str> {
        self.controllers.iter().find(|(i, _)| *i == id).map(|(_, k)| k.as_str())
    }
}

pub fn controller_kind(spec: &ControllerSpec) -> &'static str {
    match spec {
        ControllerSpec::Ctg(_) => "ctg",
        ControllerSpec::Vtg(_) => "vtg",
        ControllerSpec::Idm(_) => "idm",
        ControllerSpec::Qsmc(_) => "qsmc",
    }
}

/// Controller kinds by id, following the simulator's numbering: a
/// straight-road leader is id 0, then vehicles in order, then cut-ins.
pub fn controller_table(s: &Scenario) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    if s.leader.is_some() {
        out.push((0, "leader".to_string()));
    }
    let mut kinds: Vec<&'static str> = s.vehicles.iter().map(|v| controller_kind(&v.controller)).collect();
    kinds.extend(s.events.iter().filter_map(|e| match &e.kind {
        platoon_core::sim::EventKind::CutIn { vehicle, .. } => Some(controller_kind(&vehicle.controller)),
        _ => None,
    }));
    let first = out.len();
    out.extend(kinds.into_iter().enumerate().map(|(i, k)| (first + i, k.to_string())));
    out
}

fn fmt_f64(out: &mut String, x: f64) {
    if x.is_finite() {
        let _ = write!(out, "{x:?}");
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

/// Adds the simulation summary to `meta`.
pub fn describe(meta: &mut Metadata, scenario: &Scenario, result: &SimResult) {
    meta.push("dt", result.dt.to_string());
    meta.push(
        "topology",
        match scenario.topology {
            Topology::Straight => "straight".to_string(),
            Topology::Ring { length } => format!("ring {length}"),
        },
    );
    let controllers: Vec<_> = controller_table(scenario)
        .into_iter()
        .filter(|(i, _)| result.vehicle(*i).is_some())
        .collect();
    meta.push("controllers", join(&controllers, |(i, k)| format!("{i}:{k}")));
    meta.push("lengths", join(&result.vehicles, |v| format!("{}:{}", v.id, v.length)));
    meta.push("final_order", join(&result.final_order, |i| i.to_string()));
    meta.push(
        "collisions",
        join(&result.collisions, |c| format!("{}:{}:{}", c.time, c.follower, c.leader)),
    );
    meta.push("clamp_events", result.clamp_events.to_string());
    meta.push("fail_safe_events", result.fail_safe_events.to_string());
    meta.push("synthesis_fallbacks", result.synthesis_fallbacks.to_string());
    meta.push("rejected_cut_ins", result.rejected_cut_ins.to_string());
}

/// Renders the CSV text, metadata header first.
pub fn render(meta: &Metadata, result: &SimResult) -> String {
    let mut buf = Vec::new();
    meta.write_header(&mut buf).expect("writing to memory");
    let mut out = String::from_utf8(buf).expect("metadata is UTF-8");
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for v in &result.vehicles {
        let tr = &v.trajectory;
        for k in 0..tr.len() {
            // Times are rebuilt from t0 and dt on reading, so nine decimals suffice.
            fmt_f64(&mut out, (tr.time(k) * 1e9).round() / 1e9);
            let _ = write!(out, ",{},", v.id);
            for (i, x) in [tr.position[k], tr.speed[k], tr.accel[k], tr.gap[k], tr.time_gap_cmd[k]]
                .into_iter()
                .enumerate()
            {
                if i > 0 {
                    out.push(',');
                }
                fmt_f64(&mut out, x);
            }
            let _ = write!(out, ",{},", tr.flags[k]);
            fmt_f64(&mut out, tr.lead_speed[k]);
            out.push('\n');
        }
    }
    out
}

pub fn write(path: &Path, meta: &Metadata, result: &SimResult) -> Result<()> {
    write_atomic(path, render(meta, result).as_bytes())
}

fn parse_list<T>(meta: &Metadata, key: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    match meta.get(key) {
        None | Some("") => Ok(Vec::new()),
        Some(s) => s
            .split(';')
            .map(|item| f(item).ok_or_else(|| Error::data(format!("malformed `{key}` entry `{item}`"))))
            .collect(),
    }
}

fn pair(item: &str) -> Option<(usize, &str)> {
    let (a, b) = item.split_once(':')?;
    Some((a.trim().parse().ok()?, b.trim()))
}

fn count(meta: &Metadata, key: &str) -> usize {
    meta.get(key).and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn field(s: &str) -> Result<f64> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        s.parse().map_err(|_| Error::data(format!("not a number: `{s}`")))
    }
}

/// Parses simulation CSV text.
pub fn parse(text: &str) -> Result<SimFile> {
    let meta = Metadata::parse(text);
    let dt: f64 = meta
        .get("dt")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::data("missing `# dt:` header"))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(Error::data)?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(Error::data(format!(
            "expected columns {}, found {}",
            COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let lengths = parse_list(&meta, "lengths", |s| {
        let (id, l) = pair(s)?;
        Some((id, l.parse::<f64>().ok()?))
    })?;
    let mut vehicles: Vec<VehicleTrace> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::data)?;
        let ctx = |e: Error| e.context(format!("data row {}", line + 1));
        let t = field(&rec[0]).map_err(ctx)?;
        let id: usize = rec[1].parse().map_err(|_| ctx(Error::data(format!("bad id `{}`", &rec[1]))))?;
        let flags: u8 = rec[7].parse().map_err(|_| ctx(Error::data(format!("bad flags `{}`", &rec[7]))))?;
        let vals: Vec<f64> = [2, 3, 4, 5, 6, 8].iter().map(|&i| field(&rec[i])).collect::<Result<_>>().map_err(ctx)?;
        if vehicles.last().is_none_or(|v| v.id != id) {
            if vehicles.iter().any(|v| v.id == id) {
                return Err(ctx(Error::data(format!("rows of vehicle {id} are not contiguous"))));
            }
            let length = lengths.iter().find(|(i, _)| *i == id).map_or(f64::NAN, |(_, l)| *l);
            vehicles.push(VehicleTrace {
                id,
                length,
                trajectory: Trajectory::with_capacity(dt, t, 0),
            });
        }
        let tr = &mut vehicles.last_mut().expect("pushed above").trajectory;
        let expected = tr.time(tr.len());
        if (t - expected).abs() > 1e-6 * dt {
            return Err(ctx(Error::data(format!("vehicle {id}: t = {t} off the {dt} s grid (expected {expected})"))));
        }
        tr.push(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], flags);
    }
    vehicles.sort_by_key(|v| v.id);
    let controllers = parse_list(&meta, "controllers", |s| pair(s).map(|(i, k)| (i, k.to_string())))?;
    let final_order = parse_list(&meta, "final_order", |s| s.trim().parse().ok())?;
    let collisions = parse_list(&meta, "collisions", |s| {
        let mut it = s.split(':');
        Some(Collision {
            time: it.next()?.parse().ok()?,
            follower: it.next()?.parse().ok()?,
            leader: it.next()?.parse().ok()?,
        })
    })?;
    let result = SimResult {
        dt,
        vehicles,
        final_order,
        collisions,
        clamp_events: count(&meta, "clamp_events"),
        fail_safe_events: count(&meta, "fail_safe_events"),
        synthesis_fallbacks: count(&meta, "synthesis_fallbacks"),
        rejected_cut_ins: count(&meta, "rejected_cut_ins"),
    };
    Ok(SimFile {
        meta,
        result,
        controllers,
    })
}

pub fn read_path(path: &Path) -> Result<SimFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(e).context(format!("reading {}", path.display())))?;
    parse(&text).map_err(|e| e.context(format!("parsing {}", path.display())))
}
