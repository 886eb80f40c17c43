use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn isoslow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoslow"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ISOSLOW_OUT")
        .output()
        .expect("binary runs")
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn diagnostic(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("diagnostic line");
    serde_json::from_str(line).expect("diagnostic is JSON")
}

fn planar_column_error(csv_text: &str) -> f64 {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let h = r.headers().unwrap().clone();
    let i1 = h.iter().position(|c| c == "x_1").unwrap();
    let i2 = h.iter().position(|c| c == "x_2").unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let x1: f64 = rec[i1].parse().unwrap();
            let x2: f64 = rec[i2].parse().unwrap();
            if x1.abs() <= 1.5 {
                (x2 - (1.25 * x1.powi(4) - 20.0 / 9.0 * x1 * x1)).abs()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn spectrum_reports_goodwin_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoslow(&["spectrum", "--model", "goodwin", "--out", "s"], dir.path());
    assert!(out.status.success());
    let v = json_out(&out);
    let ev = v["eigenvalues"].as_array().unwrap();
    let close = |re: f64, im: f64| {
        ev.iter().any(|e| {
            (e[0].as_f64().unwrap() - re).abs() < 0.01 && (e[1].as_f64().unwrap() - im).abs() < 0.01
        })
    };
    assert!(close(-0.022, 0.26) && close(-0.022, -0.26) && close(-0.53, 0.0));
    assert!(dir.path().join("s/spectrum.json").exists());
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["config"]["t_max"], 275.0);
    assert_eq!(manifest["config"]["seed_radius"], 0.001);
}

#[test]
fn pc_trace_of_the_planar_model_matches_the_quartic() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoslow(
        &["trace", "--model", "planar", "--method", "pc", "--dt", "0.5", "--steps", "300", "--out", "t"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_text = std::fs::read_to_string(dir.path().join("t/ray.csv")).unwrap();
    let err = planar_column_error(&csv_text);
    assert!(err <= 1e-4, "max quartic error {err}");
}

#[test]
fn asym_trace_of_the_planar_model_matches_the_quartic() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoslow(
        &["trace", "--model", "planar", "--method", "asym", "--order", "4", "--out", "t"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_text = std::fs::read_to_string(dir.path().join("t/ray.csv")).unwrap();
    assert!(planar_column_error(&csv_text) <= 1e-4);
    assert!(json_out(&out)["max_quartic_error"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn identical_runs_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = isoslow(
            &["trace", "--model", "pendulum", "--method", "pc", "--t-max", "5", "--out", name],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a/ray.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/ray.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn naive_comparison_reports_early_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoslow(&["compare", "--model", "goodwin", "--method", "naive", "--out", "c"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_out(&out);
    let exit = v["exit_time"].as_f64().expect("naive leaves the tube");
    assert!(exit < 10.0, "{exit}");
    assert!(dir.path().join("c/report.json").exists());
}

#[test]
fn plot_overlays_a_ray_and_the_quartic_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = isoslow(
        &["trace", "--model", "planar", "--method", "asym", "--order", "4", "--out", "t"],
        dir.path(),
    );
    assert!(out.status.success());
    let mut quartic = String::from("x_1,x_2\n");
    for k in 0..=60 {
        let x = -1.5 + 0.05 * k as f64;
        quartic.push_str(&format!("{x:?},{:?}\n", 1.25 * x.powi(4) - 20.0 / 9.0 * x * x));
    }
    std::fs::write(dir.path().join("quartic.csv"), quartic).unwrap();
    let args = [
        "plot",
        "--series",
        "t/ray.csv:x_1:x_2:traced",
        "--series",
        "quartic.csv:x_1:x_2:quartic",
        "--title",
        "planar",
    ];
    let mut first = args.to_vec();
    first.extend(["--output", "p1.svg"]);
    let mut second = args.to_vec();
    second.extend(["--output", "p2.svg"]);
    assert!(isoslow(&first, dir.path()).status.success());
    assert!(isoslow(&second, dir.path()).status.success());
    let a = std::fs::read_to_string(dir.path().join("p1.svg")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("p2.svg")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.matches("<polyline").count(), 2);
}

#[test]
fn plotting_an_empty_file_is_a_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let out = isoslow(&["plot", "--series", "empty.csv:t:x_1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(diagnostic(&out)["error"], "missing_column");
}

#[test]
fn exit_codes_separate_validation_from_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad_model = isoslow(&["spectrum", "--model", "lorenz"], dir.path());
    assert_eq!(bad_model.status.code(), Some(2));
    assert_eq!(diagnostic(&bad_model)["error"], "unknown_model");

    let bad_flag = isoslow(&["spectrum", "--nope"], dir.path());
    assert_eq!(bad_flag.status.code(), Some(2));

    let linear = isoslow(&["sweep-pd", "--model", "goodwin", "--system", "linear", "--out", "l"], dir.path());
    assert_eq!(linear.status.code(), Some(3));
    assert_eq!(diagnostic(&linear)["error"], "no_bifurcation_in_range");
    assert!(dir.path().join("l/sweep.csv").exists());
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"model": {"name": "pendulum"}, "t_max": 3.0, "output_dir": "from_file"}"#,
    )
    .unwrap();
    let out = isoslow(&["trace", "--config", "run.json", "--t-max", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("from_file/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["t_max"], 2.0);
    assert_eq!(manifest["config"]["trace"]["t_max"], 2.0);
    assert_eq!(manifest["config"]["model"]["name"], "pendulum");

    std::fs::write(dir.path().join("bad.json"), r#"{"t_maxx": 3.0}"#).unwrap();
    let bad = isoslow(&["trace", "--config", "bad.json"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn planar_rom_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let build = isoslow(
        &["rom-build", "--model", "planar", "--method", "asym", "--order", "4", "--channel", "1,0", "--out", "r"],
        dir.path(),
    );
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let sim = isoslow(
        &[
            "rom-sim", "--model", "planar", "--rom", "r/rom.json", "--signal", "sine:0.01,20", "--t-end", "100",
            "--baselines", "--out", "s",
        ],
        dir.path(),
    );
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let v = json_out(&sim);
    assert!(v["error_rom"].as_f64().unwrap() < v["error_linear"].as_f64().unwrap());
    for f in ["rom_sim.csv", "full.csv", "linear.csv", "manifest.json"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
}
