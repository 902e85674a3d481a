use std::process::{Command, Output};

use serde_json::Value;

fn lsplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv_rows(out: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

fn column(headers: &[String], name: &str) -> usize {
    headers
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn write_scenario(dir: &tempfile::TempDir, text: &str) -> String {
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn distance_preset_reproduces_anchor() {
    let out = lsplan(&["distance", "--preset", "fig2a"]);
    assert!(out.status.success());
    let (h, rows) = csv_rows(&out);
    assert_eq!(h[0], "target");
    let (f, s, d, floor) = (
        column(&h, "fidelity"),
        column(&h, "strategy"),
        column(&h, "distance"),
        column(&h, "floor_distance"),
    );
    let anchor: Vec<_> = rows.iter().filter(|r| r[f] == "0.9864").collect();
    assert_eq!(anchor.len(), 4);
    let raw = anchor.iter().find(|r| r[s] == "raw").unwrap();
    let ds = anchor.iter().find(|r| r[s] == "double-select").unwrap();
    assert_eq!(raw[d], "5");
    assert_eq!(ds[d], "5");
    assert!(rows.iter().all(|r| r[floor] == rows[0][floor]));
}

#[test]
fn grey_floor_tracks_target() {
    let floors: Vec<u32> = ["fig2a", "fig2b", "fig2c", "fig2d"]
        .iter()
        .map(|p| {
            let out = lsplan(&["distance", "--preset", p]);
            let (h, rows) = csv_rows(&out);
            rows[0][column(&h, "floor_distance")].parse().unwrap()
        })
        .collect();
    assert!(floors.windows(2).all(|w| w[0] < w[1]), "{floors:?}");
}

#[test]
fn crossover_preset_lands_near_ninety_seven_percent() {
    let out = lsplan(&["crossover", "--preset", "fig3a", "--format", "json"]);
    assert!(out.status.success());
    let rows: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    let pairs = rows.iter().find(|r| r["metric"] == "bell-pairs").unwrap();
    let f = pairs["fidelity"].as_f64().unwrap();
    assert!((f - 0.9707).abs() <= 0.01, "{f}");
    assert_eq!(pairs["last_overtaken"], "double-select");
}

#[test]
fn platform_presets_classify() {
    for (preset, regime) in [
        ("ion-trap", "no-expire"),
        ("neutral-atom-projected", "on-the-fly"),
    ] {
        let out = lsplan(&["regime", "--preset", preset]);
        assert!(out.status.success());
        let (h, rows) = csv_rows(&out);
        let raw = rows
            .iter()
            .find(|r| r[column(&h, "protocol")] == "raw")
            .unwrap();
        assert_eq!(raw[column(&h, "regime")], regime, "{preset}");
    }
}

#[test]
fn budget_preset_has_raw_dead_zone() {
    let out = lsplan(&["budget", "--preset", "fig7"]);
    assert!(out.status.success());
    let (h, rows) = csv_rows(&out);
    let (s, n) = (column(&h, "strategy"), column(&h, "n_logical"));
    assert!(rows
        .iter()
        .any(|r| r[s] == "raw" && r[n].parse::<u64>().map_or(true, |v| v < 2)));
}

#[test]
fn empty_sweep_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, r#"{"fidelities": []}"#);
    let out = lsplan(&["distance", "--scenario", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn unknown_keys_and_bad_args_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, r#"{"schema_version": 1, "fidelity": 0.9}"#);
    assert_eq!(
        lsplan(&["cost", "--scenario", &path]).status.code(),
        Some(1)
    );
    assert_eq!(lsplan(&["cost", "--preset", "nope"]).status.code(), Some(1));
    assert_eq!(lsplan(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lsplan(&["--help"]).status.code(), Some(0));
}

#[test]
fn infeasible_everywhere_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        r#"{"fidelities": [0.6, 0.65], "protocols": ["double-select"], "targets": [1e-12], "model": {"d_max": 5}}"#,
    );
    for cmd in [
        "distance",
        "cost",
        "crossover",
        "regime",
        "budget",
        "simulate",
    ] {
        assert_eq!(
            lsplan(&[cmd, "--scenario", &path]).status.code(),
            Some(2),
            "{cmd}"
        );
    }
}

#[test]
fn csv_and_json_agree_and_out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        &dir,
        r#"{"fidelities": {"start": 0.95, "end": 0.97, "points": 5}}"#,
    );
    let file = dir.path().join("cost.json");
    let out = lsplan(&[
        "cost",
        "--scenario",
        &scenario,
        "--format",
        "json",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let json: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();

    let (h, rows) = csv_rows(&lsplan(&["cost", "--scenario", &scenario]));
    assert_eq!(rows.len(), json.len());
    for (row, obj) in rows.iter().zip(&json) {
        let mut keys: Vec<_> = obj.as_object().unwrap().keys().cloned().collect();
        let mut cols = h.clone();
        keys.sort();
        cols.sort();
        assert_eq!(keys, cols);
        assert_eq!(
            row[column(&h, "protocol")],
            obj["protocol"].as_str().unwrap()
        );
    }
}

#[test]
fn rows_are_sorted_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        &dir,
        r#"{"fidelities": [0.99, 0.93, 0.96], "targets": [1e-3, 1e-6]}"#,
    );
    let a = lsplan(&["regime", "--scenario", &scenario]);
    let b = lsplan(&["regime", "--scenario", &scenario]);
    assert_eq!(a.stdout, b.stdout);
    let (h, rows) = csv_rows(&a);
    let keys: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                r[0].parse().unwrap(),
                r[column(&h, "fidelity")].parse().unwrap(),
            )
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.total_cmp(&y.1)));
    assert_eq!(keys, sorted);
}

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        &dir,
        r#"{"fidelities": [0.96], "protocols": ["double-select"], "simulation": {"runs": 50, "rounds": 20}, "link": {"lam": 20000}}"#,
    );
    let a = lsplan(&["simulate", "--scenario", &scenario, "--seed", "5"]);
    let b = lsplan(&["simulate", "--scenario", &scenario, "--seed", "5"]);
    let c = lsplan(&["simulate", "--scenario", &scenario, "--seed", "6"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let (h, rows) = csv_rows(&a);
    let raw = rows
        .iter()
        .find(|r| r[column(&h, "protocol")] == "raw")
        .unwrap();
    assert_eq!(raw[column(&h, "mean")], raw[column(&h, "pairs_per_cycle")]);
}

#[test]
fn presets_are_listed() {
    let out = lsplan(&["presets"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "fig2a",
        "fig3d",
        "fig5c",
        "fig7",
        "ion-trap",
        "neutral-atom-projected",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}
