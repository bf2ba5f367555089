use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use carfollow::stability::classify_cell;
use carfollow::ModelParams;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn carfollow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carfollow"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs one command with a config file, writing into `out`.
fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    carfollow(&args)
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

fn column(headers: &[String], name: &str) -> usize {
    headers.iter().position(|h| h == name).unwrap()
}

fn follower_velocities(path: &Path) -> Vec<f64> {
    let (h, rows) = csv_rows(path);
    let (id, v) = (column(&h, "vehicle_id"), column(&h, "velocity"));
    rows.iter()
        .filter(|r| r[id] == "1")
        .map(|r| r[v].parse().unwrap())
        .collect()
}

#[test]
fn idm_scenario_reverses_and_sigmoid_scenario_does_not() {
    let tmp = TempDir::new().unwrap();
    let idm = tmp.path().join("idm");
    ok(&run(
        "simulate",
        &scenario("standstill_idm.json"),
        &idm,
        &[],
    ));
    let v = follower_velocities(&idm.join("trajectory.csv"));
    assert!(v.iter().any(|&x| x < 0.0));

    let sig = tmp.path().join("sigmoid");
    ok(&run(
        "simulate",
        &scenario("standstill_sigmoid.json"),
        &sig,
        &[],
    ));
    let v = follower_velocities(&sig.join("trajectory.csv"));
    assert!(v.iter().all(|&x| x >= 0.0));
    for f in [
        "time_velocity.svg",
        "time_space.svg",
        "spacing_velocity.svg",
        "run.json",
    ] {
        assert!(sig.join(f).is_file(), "{f}");
    }
}

#[test]
fn repeated_seed_gives_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = read_json(&scenario("ring_random_dc.json"));
    cfg["duration"] = json!(300);
    cfg["window"] = json!(100);
    cfg.as_object_mut().unwrap().remove("seed");
    let path = write_config(tmp.path(), "ring.json", &cfg);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    ok(&run("ring", &path, &a, &["--seed", "11"]));
    ok(&run("ring", &path, &b, &["--seed", "11"]));
    ok(&run("ring", &path, &c, &["--seed", "12"]));
    for f in [
        "trajectory.csv",
        "flow_density.csv",
        "space_time.svg",
        "run.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(c.join("trajectory.csv")).unwrap()
    );
    assert_eq!(read_json(&a.join("run.json"))["seed"], json!(11));
}

#[test]
fn generated_seed_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = read_json(&scenario("ring_random_dc.json"));
    cfg["duration"] = json!(20);
    cfg["window"] = json!(10);
    cfg.as_object_mut().unwrap().remove("seed");
    let path = write_config(tmp.path(), "ring.json", &cfg);
    let out = tmp.path().join("out");
    ok(&run("ring", &path, &out, &[]));
    let manifest = read_json(&out.join("run.json"));
    assert_eq!(manifest["seed_source"], json!("generated"));
    let seed = manifest["seed"].as_u64().unwrap();

    let again = tmp.path().join("again");
    ok(&run("ring", &path, &again, &["--seed", &seed.to_string()]));
    assert_eq!(
        fs::read(out.join("trajectory.csv")).unwrap(),
        fs::read(again.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn unknown_field_is_a_config_error_with_its_location() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = read_json(&scenario("standstill_idm.json"));
    cfg["followers"]["driver"]["params"]["max_acel"] = json!(3);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let o = run("simulate", &path, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("max_acel"), "{err}");
    assert!(err.contains("followers.driver.params"), "{err}");
    assert!(err.contains("line"), "{err}");
    assert!(!tmp.path().join("out/trajectory.csv").exists());
}

#[test]
fn overfull_ring_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = read_json(&scenario("ring_random_dc.json"));
    cfg["circumference"] = json!(200.0);
    let path = write_config(tmp.path(), "ring.json", &cfg);
    let o = run("ring", &path, &tmp.path().join("out"), &[]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn missing_files_are_io_errors() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        "simulate",
        &tmp.path().join("absent.json"),
        &tmp.path().join("out"),
        &[],
    );
    assert_eq!(o.status.code(), Some(4));
    let cfg = json!({"data": "nowhere.csv", "leader_id": 0, "follower_id": 1, "model": "idm"});
    let path = write_config(tmp.path(), "cal.json", &cfg);
    let o = run("calibrate", &path, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4));
    let o = carfollow(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulated_trajectory_is_accepted_as_calibration_input() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&run(
        "simulate",
        &scenario("synthetic_pair.json"),
        &sim,
        &[],
    ));
    let truth =
        read_json(&scenario("synthetic_pair.json"))["followers"]["driver"]["params"].clone();
    let mut bounds = serde_json::Map::new();
    for (k, v) in truth.as_object().unwrap() {
        bounds.insert(k.clone(), json!([v, v]));
    }
    let cfg = json!({
        "data": sim.join("trajectory.csv"),
        "leader_id": 0,
        "follower_id": 1,
        "model": "sigmoid_idm",
        "bounds": bounds,
        "ga": {"population": 4, "generations": 2},
        "seed": 3
    });
    let path = write_config(tmp.path(), "cal.json", &cfg);
    let out = tmp.path().join("cal");
    ok(&run("calibrate", &path, &out, &[]));
    let report = read_json(&out.join("calibration.json"));
    assert!(report["objective"].as_f64().unwrap() < 1e-9, "{report}");
    assert_eq!(report["seed"], json!(3));
    assert!(out.join("overlay_spacing.svg").is_file());
    let (_, rows) = csv_rows(&out.join("simulated.csv"));
    assert_eq!(rows.len(), report["samples"].as_u64().unwrap() as usize);
}

#[test]
fn single_cell_map_has_one_row() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = read_json(&scenario("stability_map.json"));
    cfg["caution_factors"] = json!([0.5]);
    cfg["cautious_distances"] = json!([10.0]);
    let path = write_config(tmp.path(), "map.json", &cfg);
    let out = tmp.path().join("out");
    ok(&run("stability-map", &path, &out, &[]));
    let (_, rows) = csv_rows(&out.join("stability_map.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn map_criterion_column_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg_path = scenario("stability_map.json");
    ok(&run("stability-map", &cfg_path, &out, &["--format", "csv"]));
    let cfg = read_json(&cfg_path);
    let context: ModelParams = serde_json::from_value(cfg["context"].clone()).unwrap();
    let speed = cfg["speed"].as_f64().unwrap();
    let (h, rows) = csv_rows(&out.join("stability_map.csv"));
    let (li, di, ci, ki) = (
        column(&h, "caution_factor"),
        column(&h, "cautious_distance"),
        column(&h, "criterion"),
        column(&h, "class"),
    );
    assert_eq!(rows.len(), 40 * 41);
    for r in rows.iter().step_by(97) {
        let (l, d): (f64, f64) = (r[li].parse().unwrap(), r[di].parse().unwrap());
        let cell = classify_cell(&context, speed, l, d).unwrap();
        assert_eq!(r[ki], cell.class.name());
        if cell.criterion.is_finite() {
            assert_eq!(r[ci].parse::<f64>().unwrap(), cell.criterion);
        } else {
            assert!(r[ci].is_empty());
        }
    }
    let (_, cases) = csv_rows(&out.join("cases.csv"));
    assert_eq!(cases.len(), 4);
    assert!(!out.join("stability_map.svg").exists());
}

#[test]
fn identical_series_have_zero_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "observed": scenario("data/synthetic_pair.csv"),
        "simulated": scenario("data/synthetic_pair.csv"),
        "leader_id": 0,
        "follower_id": 1,
        "fuel_coefficients": scenario("fuel_coefficients_illustrative.json")
    });
    let path = write_config(tmp.path(), "m.json", &cfg);
    let out = tmp.path().join("out");
    ok(&run("metrics", &path, &out, &[]));
    let (_, rows) = csv_rows(&out.join("metrics.csv"));
    let get = |name: &str| -> f64 {
        rows.iter().find(|r| r[0] == name).unwrap()[1]
            .parse()
            .unwrap()
    };
    for m in [
        "rmse_spacing",
        "rmse_speed",
        "theil_u_spacing",
        "theil_u_speed",
    ] {
        assert_eq!(get(m), 0.0, "{m}");
    }
    assert_eq!(get("fuel_total_observed"), get("fuel_total_simulated"));
    assert_eq!(get("jerk_rms_observed"), get("jerk_rms_simulated"));
}

#[test]
fn diagram_has_the_free_flow_slope_and_the_jam_point() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg_path = scenario("fundamental_diagram.json");
    ok(&run("fundamental-diagram", &cfg_path, &out, &[]));
    let cfg = read_json(&cfg_path);
    let length = cfg["vehicle_length"].as_f64().unwrap();
    let (h, rows) = csv_rows(&out.join("fundamental_diagram.csv"));
    let col = |r: &Vec<String>, n: &str| r[column(&h, n)].clone();
    let num = |r: &Vec<String>, n: &str| col(r, n).parse::<f64>().unwrap();
    for d in cfg["drivers"].as_array().unwrap() {
        let label = d["label"].as_str().unwrap();
        let p = &d["driver"]["params"];
        let (v0, s0) = (
            p["desired_speed"].as_f64().unwrap(),
            p["jam_distance"].as_f64().unwrap(),
        );
        let mine: Vec<_> = rows.iter().filter(|r| col(r, "label") == label).collect();
        for r in mine.iter().filter(|r| col(r, "segment") == "free_flow_ray") {
            let rho = num(r, "density");
            if rho > 0.0 {
                assert!((num(r, "flow") / rho - v0).abs() <= 1e-9 * v0);
            }
        }
        let jam = mine.iter().find(|r| num(r, "speed") == 0.0).unwrap();
        assert!((num(jam, "density") - 1.0 / (s0 + length)).abs() < 1e-12);
        assert_eq!(num(jam, "flow"), 0.0);
    }
    for f in [
        "flow_density.svg",
        "speed_density.svg",
        "spacing_velocity.svg",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn ring_sweep_reports_both_initialisations() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = read_json(&scenario("ring_bistability.json"));
    cfg["duration"] = json!(200);
    cfg["window"] = json!(100);
    cfg["sweep"]["counts"] = json!([50, 60]);
    let path = write_config(tmp.path(), "ring.json", &cfg);
    let out = tmp.path().join("out");
    ok(&run("ring", &path, &out, &[]));
    let (h, rows) = csv_rows(&out.join("flow_density.csv"));
    let init = column(&h, "init");
    assert_eq!(rows.len(), 1 + 4);
    assert_eq!(rows.iter().filter(|r| r[init] == "jam").count(), 2);
    assert!(out.join("flow_density.svg").is_file());
}

#[test]
fn fit_sigmoid_recovers_the_sample_curve() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    ok(&run(
        "fit-sigmoid",
        &scenario("fit_sigmoid.json"),
        &out,
        &[],
    ));
    let fit = read_json(&out.join("sigmoid_fit.json"));
    assert!(fit["r2"].as_f64().unwrap() > 0.99);
    assert!((fit["midpoint"].as_f64().unwrap() - 3.2).abs() < 0.1);
}

#[test]
fn csv_format_writes_no_plots() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    ok(&run(
        "simulate",
        &scenario("standstill_idm.json"),
        &out,
        &["--format", "csv"],
    ));
    let svgs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "svg")
        })
        .count();
    assert_eq!(svgs, 0);
}
