use std::path::{Path, PathBuf};

use platoon::campaign::{export_wide, ingest_str, CampaignMapping, VehicleColumns, INTERPOLATED};
use platoon::commands::simulate::simulate;
use platoon::commands::{Range, Table};
use platoon::config::{load_scenario, ScenarioConfig};
use platoon::error::ErrorKind;
use platoon::meta::{config_hash, write_atomic, Metadata};
use platoon::simcsv;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn ring5() -> simcsv::SimFile {
    let (loaded, scenario) = load_scenario(&fixture("ring5_perturbed.toml")).unwrap();
    simulate(&loaded, &scenario, false).unwrap()
}

fn two_vehicle_mapping() -> CampaignMapping {
    CampaignMapping {
        tag: "t".into(),
        gap_setting: None,
        time: "time".into(),
        sample_rate: Some(10.0),
        vehicles: vec![
            VehicleColumns {
                name: None,
                speed: "v1".into(),
                position: Some("x1".into()),
                gap: None,
                length: 4.0,
            },
            VehicleColumns {
                name: None,
                speed: "v2".into(),
                position: Some("x2".into()),
                gap: None,
                length: 4.0,
            },
        ],
    }
}

/// 10 Hz two-vehicle file; `skip(k)` drops sample `k`.
fn two_vehicle_csv(n: usize, skip: impl Fn(usize) -> bool) -> String {
    let mut s = String::from("time,v1,x1,v2,x2\n");
    for k in 0..n {
        if skip(k) {
            continue;
        }
        let t = k as f64 / 10.0;
        s += &format!("{t},{},{},{},{}\n", 20.0, 100.0 + 20.0 * t, 19.0 + 0.01 * k as f64, 70.0 + 19.0 * t);
    }
    s
}

#[test]
fn simulation_csv_round_trip() {
    let file = ring5();
    let text = simcsv::render(&file.meta, &file.result);
    let back = simcsv::parse(&text).unwrap();
    assert_eq!(back.controllers, file.controllers);
    assert_eq!(back.result.final_order, file.result.final_order);
    assert_eq!(back.result.vehicles.len(), file.result.vehicles.len());
    for (a, b) in file.result.vehicles.iter().zip(&back.result.vehicles) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.length, b.length);
        let (ta, tb) = (&a.trajectory, &b.trajectory);
        assert_eq!(ta.len(), tb.len());
        assert!((ta.t0 - tb.t0).abs() <= 1e-12);
        for (x, y) in [
            (&ta.position, &tb.position),
            (&ta.speed, &tb.speed),
            (&ta.accel, &tb.accel),
            (&ta.gap, &tb.gap),
            (&ta.time_gap_cmd, &tb.time_gap_cmd),
            (&ta.lead_speed, &tb.lead_speed),
        ] {
            for (p, q) in x.iter().zip(y) {
                assert!(p.to_bits() == q.to_bits() || (p - q).abs() <= 1e-12, "{p} vs {q}");
            }
        }
        assert_eq!(ta.flags, tb.flags);
    }
}

#[test]
fn leader_gap_is_written_empty() {
    let (loaded, scenario) = load_scenario(&fixture("user_needs_step.toml")).unwrap();
    let file = simulate(&loaded, &scenario, false).unwrap();
    let text = simcsv::render(&file.meta, &file.result);
    let first = text.lines().find(|l| l.starts_with("0.0,0,")).unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[5], "");
    assert_eq!(fields[8], "");
    let back = simcsv::parse(&text).unwrap();
    assert!(back.result.vehicles[0].trajectory.gap[0].is_nan());
}

#[test]
fn sim_to_campaign_round_trip() {
    let (loaded, scenario) = load_scenario(&fixture("user_needs_cycle.toml")).unwrap();
    let file = simulate(&loaded, &scenario, false).unwrap();
    let ids: Vec<usize> = file.result.vehicles.iter().map(|v| v.id).collect();
    let (csv, mapping) = export_wide(&file.result, &ids, "rt").unwrap();
    let table = ingest_str(&csv, &mapping).unwrap();
    assert_eq!(table.records.len(), 1);
    assert_eq!(table.interpolated_samples(), 0);
    let rec = &table.records[0];
    for (orig, got) in file.result.vehicles.iter().zip(&rec.vehicles) {
        let (a, b) = (&orig.trajectory, &got.trajectory);
        assert_eq!(a.len(), b.len());
        for k in 0..a.len() {
            assert!((a.speed[k] - b.speed[k]).abs() <= 1e-12);
            assert!((a.position[k] - b.position[k]).abs() <= 1e-12);
            if a.gap[k].is_finite() {
                assert!((a.gap[k] - b.gap[k]).abs() <= 1e-12);
                assert!((a.lead_speed[k] - b.lead_speed[k]).abs() <= 1e-12);
            } else {
                assert!(b.gap[k].is_nan());
            }
        }
    }
}

#[test]
fn minimal_campaign_gives_one_pair() {
    let t = ingest_str(&two_vehicle_csv(50, |_| false), &two_vehicle_mapping()).unwrap();
    assert_eq!(t.records.len(), 1);
    assert_eq!(t.pairs().len(), 1);
    assert!((t.sample_rate() - 10.0).abs() < 1e-9);
    let f = &t.records[0].vehicles[1].trajectory;
    assert!((f.gap[10] - (100.0 + 20.0 - 70.0 - 19.0)).abs() < 1e-9);
    assert_eq!(f.lead_speed[3], 20.0);
}

#[test]
fn short_hole_is_interpolated_and_flagged() {
    // Samples 20 and 21 missing: 0.3 s between the surrounding samples.
    let t = ingest_str(&two_vehicle_csv(50, |k| k == 20 || k == 21), &two_vehicle_mapping()).unwrap();
    assert_eq!(t.records.len(), 1);
    assert_eq!(t.interpolated_samples(), 2);
    let f = &t.records[0].vehicles[1].trajectory;
    assert_eq!(f.len(), 50);
    assert!((f.speed[20] - (19.0 + 0.2)).abs() < 1e-12);
    assert_eq!(f.flags[20] & INTERPOLATED, INTERPOLATED);
    assert_eq!(f.flags[22] & INTERPOLATED, 0);
}

#[test]
fn missing_values_count_as_holes() {
    let csv = two_vehicle_csv(30, |_| false).replace("\n1,20,120,19.1,89\n", "\n1,20,120,,89\n");
    let t = ingest_str(&csv, &two_vehicle_mapping()).unwrap();
    assert_eq!(t.interpolated_samples(), 1);
    assert!((t.records[0].vehicles[1].trajectory.speed[10] - 19.1).abs() < 1e-12);
}

#[test]
fn long_hole_splits_record() {
    // 2 s hole: samples 20..=38 missing.
    let t = ingest_str(&two_vehicle_csv(60, |k| (20..39).contains(&k)), &two_vehicle_mapping()).unwrap();
    assert_eq!(t.records.len(), 2);
    assert_eq!(t.records[0].vehicles[0].trajectory.len(), 20);
    assert!((t.records[1].vehicles[0].trajectory.t0 - 3.9).abs() < 1e-9);
    assert_eq!(t.interpolated_samples(), 0);
}

#[test]
fn jitter_beyond_tolerance_is_rejected() {
    let ok = two_vehicle_csv(20, |_| false).replace("\n0.5,", "\n0.5008,");
    assert!(ingest_str(&ok, &two_vehicle_mapping()).is_ok());
    let bad = two_vehicle_csv(20, |_| false).replace("\n0.5,", "\n0.505,");
    let e = ingest_str(&bad, &two_vehicle_mapping()).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Data);
    assert!(e.to_string().contains("non-uniform sampling"), "{e}");
}

#[test]
fn unknown_column_lists_headers() {
    let mut m = two_vehicle_mapping();
    m.vehicles[1].speed = "speed2".into();
    let e = ingest_str(&two_vehicle_csv(10, |_| false), &m).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("speed2") && msg.contains("time, v1, x1, v2, x2"), "{msg}");
}

#[test]
fn gap_column_reconstructs_positions() {
    let mut csv = String::from("time,v1,v2,ivs\n");
    for k in 0..20 {
        csv += &format!("{},{},{},{}\n", k as f64 / 10.0, 20.0, 20.0, 25.0);
    }
    let mut m = two_vehicle_mapping();
    m.vehicles[0].position = None;
    m.vehicles[1].position = None;
    m.vehicles[1].gap = Some("ivs".into());
    let t = ingest_str(&csv, &m).unwrap();
    let r = &t.records[0];
    // Net spacing plus the leader's length.
    assert!((r.vehicles[1].trajectory.gap[5] - 29.0).abs() < 1e-12);
    assert!((r.vehicles[0].trajectory.position[10] - 20.0).abs() < 1e-12);
}

#[test]
fn config_hash_is_stable() {
    let text = std::fs::read_to_string(fixture("ring_vtg.toml")).unwrap();
    assert_eq!(config_hash(&text), config_hash(&text.clone()));
    assert_ne!(config_hash(&text), config_hash(&format!("{text} ")));
    let a = ring5();
    let b = ring5();
    assert_eq!(a.meta.get("config_sha256"), b.meta.get("config_sha256"));
    assert_eq!(simcsv::render(&a.meta, &a.result), simcsv::render(&b.meta, &b.result));
}

#[test]
fn metadata_header_parses() {
    let mut m = Metadata::new(Some(3), Some("x = 1"));
    m.push("note", "a: b");
    let mut buf = Vec::new();
    m.write_header(&mut buf).unwrap();
    let back = Metadata::parse(&String::from_utf8(buf).unwrap());
    assert_eq!(back, m);
    assert_eq!(back.get("seed"), Some("3"));
}

#[test]
fn atomic_write_leaves_no_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sub/out.csv");
    write_atomic(&out, b"a,b\n").unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "a,b\n");
    let names: Vec<_> = std::fs::read_dir(out.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, ["out.csv"]);
}

#[test]
fn table_quotes_fields() {
    let mut t = Table::new(Metadata::default(), &["a", "b"]);
    t.push(vec!["x,y".into(), "1".into()]);
    assert_eq!(t.render().unwrap(), "a,b\n\"x,y\",1\n");
}

#[test]
fn range_values_print_as_typed() {
    let r = Range {
        start: 0.0,
        stop: 1.0,
        step: 0.05,
    };
    let v = r.values().unwrap();
    assert_eq!(v.len(), 21);
    assert_eq!(v[6], 0.3);
    assert_eq!(*v.last().unwrap(), 1.0);
}

#[test]
fn config_errors_are_config_kind() {
    let e = ScenarioConfig::parse("dt = 0.1").unwrap_err();
    assert_eq!(e.kind, ErrorKind::Config);
    let text = std::fs::read_to_string(fixture("ring_ctg.toml")).unwrap().replace("274.0", "275.0");
    let cfg = ScenarioConfig::parse(&text).unwrap();
    let e = cfg.to_scenario(Path::new(".")).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Config);
    assert!(e.to_string().contains("slack"), "{e}");
}

#[test]
fn groups_expand_and_recorded_leader_loads() {
    let dir = tempfile::tempdir().unwrap();
    let file = ring5();
    std::fs::write(dir.path().join("lead.csv"), simcsv::render(&file.meta, &file.result)).unwrap();
    let text = r#"
dt = 0.1
duration = 20.0
topology = { kind = "straight" }
leader = { length = 5.0, profile = { kind = "recorded", path = "lead.csv", vehicle = 2 } }

[[vehicles]]
count = 3
length = 5.0
controller = { kind = "ctg", k1 = 0.23, k2 = 0.07, tau = 0.9677, s0 = 3.046 }
initial = { position = -30.0, speed = 20.0 }
"#;
    let s = ScenarioConfig::parse(text).unwrap().to_scenario(dir.path()).unwrap();
    assert_eq!(s.vehicles.len(), 3);
    match &s.leader.unwrap().profile {
        platoon_core::sim::LeaderProfile::Recorded(tr) => {
            assert_eq!(tr.speed, file.result.vehicle(2).unwrap().trajectory.speed)
        }
        other => panic!("{other:?}"),
    }
}
