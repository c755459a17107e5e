use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twophoton::analysis::{fit_fringe, FitOptions};
use twophoton::cli::{read_scan_csv, RunConfig};
use twophoton::setup::OpticalSetup;

const BIN: &str = env!("CARGO_BIN_EXE_twophoton");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) {
    fs::write(dir.join(name), json).unwrap();
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let idx = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap();
    reader
        .records()
        .map(|r| r.unwrap()[idx].parse::<f64>().unwrap())
        .collect()
}

const NOON_SAME: &str =
    r#"{"scan": {"kind": "same_direction", "start_um": -1500, "stop_um": 1500, "points": 121}}"#;

#[test]
fn noon_scan_fits_theoretical_period() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "noon.json", NOON_SAME);
    ok(
        &["scan", "--config", "noon.json", "--out", "out"],
        dir.path(),
    );
    let stdout = ok(&["fit", "out/scan.csv", "--out", "out"], dir.path());
    assert!(stdout.contains("converged: true"), "{stdout}");

    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/fit.json")).unwrap())
            .unwrap();
    let lambda = fit["fit"]["lambda_reported"].as_f64().unwrap();
    assert!((lambda / 678.3e-6 - 1.0).abs() < 1e-3, "{lambda}");
    let v = fit["fit"]["model"]["visibility"].as_f64().unwrap();
    assert!((v - 1.0).abs() < 1e-6, "{v}");
    assert_eq!(
        fit["comparison"]["lambda_ratio"]
            .as_f64()
            .map(|r| (r - 1.0).abs() < 1e-8),
        Some(true)
    );
}

#[test]
fn separable_phase_scan_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "sep.json",
        r#"{"state": {"alpha_deg": 0, "theta_deg": 0},
            "scan": {"kind": "phase", "start_deg": 0, "stop_deg": 360, "points": 73}}"#,
    );
    ok(&["scan", "--config", "sep.json"], dir.path());
    let rates = column(&dir.path().join("scan.csv"), "rate_norm");
    let (lo, hi) = rates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| {
            (a.min(r), b.max(r))
        });
    assert!((hi - lo) / hi < 4.0 * f64::EPSILON, "{lo} {hi}");
    // a flat phase curve has nothing to fit
    let out = run(&["fit", "scan.csv"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "noisy.json",
        r#"{"scan": {"kind": "same_direction", "start_um": -1500, "stop_um": 1500, "points": 61},
            "dephasing": {"sigma_theta_deg": 20, "mc_samples": 200},
            "counting": {"integration_time_s": 300, "peak_rate_hz": 1.0, "singles_hz": [20000, 25000]}}"#,
    );
    ok(
        &[
            "scan",
            "--config",
            "noisy.json",
            "--seed",
            "11",
            "--out",
            "a",
            "--svg",
        ],
        dir.path(),
    );
    ok(
        &[
            "scan",
            "--config",
            "noisy.json",
            "--seed",
            "11",
            "--out",
            "b",
            "--svg",
        ],
        dir.path(),
    );
    ok(
        &[
            "scan",
            "--config",
            "noisy.json",
            "--seed",
            "12",
            "--out",
            "c",
        ],
        dir.path(),
    );
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/scan.csv"), read("b/scan.csv"));
    assert_eq!(read("a/scan.svg"), read("b/scan.svg"));
    assert_ne!(
        column(&dir.path().join("a/scan.csv"), "counts"),
        column(&dir.path().join("c/scan.csv"), "counts")
    );
}

#[test]
fn manifests_reproduce_every_command() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "run.json",
        r#"{"scan": {"kind": "same_direction", "start_um": -1200, "stop_um": 1200, "points": 61},
            "counting": {"integration_time_s": 300, "peak_rate_hz": 2.0, "accidental_rate_hz": 0.005},
            "map": {"xi_min": -1, "xi_max": 1, "points": 21}}"#,
    );
    let d = dir.path();
    ok(
        &[
            "scan", "--config", "run.json", "--seed", "3", "--out", "a", "--svg",
        ],
        d,
    );
    ok(
        &["map", "--config", "run.json", "--seed", "3", "--out", "a"],
        d,
    );
    ok(&["fit", "a/scan.csv", "--out", "a", "--svg"], d);
    ok(
        &[
            "report", "--config", "run.json", "--seed", "3", "--out", "a",
        ],
        d,
    );

    ok(
        &["scan", "--config", "a/scan.json", "--out", "b", "--svg"],
        d,
    );
    ok(&["map", "--config", "a/map.json", "--out", "b"], d);
    ok(&["fit", "--config", "a/fit.json", "--out", "b", "--svg"], d);
    ok(&["report", "--config", "a/report.json", "--out", "b"], d);

    for name in [
        "scan.csv",
        "scan.json",
        "scan.svg",
        "map.csv",
        "map.json",
        "fit.json",
        "fit.txt",
        "fit.svg",
        "report.json",
        "report.txt",
    ] {
        assert_eq!(
            fs::read(d.join("a").join(name)).unwrap(),
            fs::read(d.join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    // the seed lives in every output
    for name in ["scan.csv", "map.csv", "fit.txt", "report.txt", "scan.svg"] {
        assert!(
            fs::read_to_string(d.join("a").join(name))
                .unwrap()
                .contains("\"seed\":3"),
            "{name}"
        );
    }
}

#[test]
fn round_trip_every_scan_kind() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"scan": {"kind": "same_direction", "start_um": -1500, "stop_um": 1500, "points": 81}}"#,
        r#"{"scan": {"kind": "opposite_direction", "start_um": -1500, "stop_um": 1500, "points": 81}}"#,
        r#"{"scan": {"kind": "phase", "start_deg": 0, "stop_deg": 360, "points": 73}}"#,
        r#"{"scan": {"kind": "hwp", "start_deg": 0, "stop_deg": 90, "points": 91}}"#,
        r#"{"scan": {"kind": "hwp", "start_deg": 0, "stop_deg": 90, "points": 91, "pairing": "different_outputs"}}"#,
        r#"{"scan": {"kind": "same_direction", "start_um": -1500, "stop_um": 1500, "points": 41, "slit_mode": "finite"}}"#,
    ];
    for (i, json) in configs.iter().enumerate() {
        let name = format!("c{i}.json");
        let out = format!("o{i}");
        write_config(dir.path(), &name, json);
        ok(&["scan", "--config", &name, "--out", &out], dir.path());
        let stdout = ok(
            &["fit", &format!("{out}/scan.csv"), "--out", &out],
            dir.path(),
        );
        assert!(stdout.contains("converged: true"), "{json}: {stdout}");
    }
}

#[test]
fn map_structure() {
    let dir = tempfile::tempdir().unwrap();
    let grid = r#""map": {"xi_min": -1.5, "xi_max": 1.5, "points": 31}"#;
    write_config(dir.path(), "noon.json", &format!("{{{grid}}}"));
    write_config(
        dir.path(),
        "sep.json",
        &format!(r#"{{"state": {{"alpha_deg": 0, "theta_deg": 0}}, {grid}}}"#),
    );
    ok(
        &["map", "--config", "noon.json", "--out", "noon"],
        dir.path(),
    );
    ok(&["map", "--config", "sep.json", "--out", "sep"], dir.path());

    let sigma = OpticalSetup::reference().derive().unwrap().sigma;
    let period = OpticalSetup::reference().derive().unwrap().period;
    let load = |p: &str| {
        let path = dir.path().join(p);
        let (a, b, r) = (
            column(&path, "xi1"),
            column(&path, "xi2"),
            column(&path, "rate_norm"),
        );
        let n = 31;
        let mut fringe = vec![vec![0.0; n]; n];
        for k in 0..a.len() {
            let (x1, x2) = (a[k] * period, b[k] * period);
            // strip the Gaussian envelope, leaving the fringe factor
            fringe[k / n][k % n] = r[k] / (-(x1 * x1 + x2 * x2) / (2.0 * sigma * sigma)).exp();
        }
        fringe
    };
    let noon = load("noon/map.csv");
    let sep = load("sep/map.csv");
    for i in 0..31 {
        for j in 0..31 {
            assert!((noon[i][j] - noon[j][i]).abs() < 1e-12);
            assert!((sep[i][j] - sep[j][i]).abs() < 1e-12);
            if i + 1 < 31 && j > 0 {
                // constant along ξ1 + ξ2 = const
                assert!((noon[i][j] - noon[i + 1][j - 1]).abs() < 1e-9);
            }
            if i + 1 < 31 && j + 1 < 31 {
                // constant along ξ1 - ξ2 = const
                assert!((sep[i][j] - sep[i + 1][j + 1]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(
        d,
        "unknown.json",
        r#"{"scan": {"kind": "phase", "start_deg": 0, "stop_deg": 90, "pionts": 5}}"#,
    );
    assert_eq!(
        run(&["scan", "--config", "unknown.json"], d).status.code(),
        Some(2)
    );
    write_config(
        d,
        "badsetup.json",
        r#"{"setup": {"wavelength_nm": 814, "focal_length_mm": 60, "mode_separation_um": 10,
            "mode_radius_um": 4.3, "slit_width_um": 62.5}, "scan": {"kind": "phase", "start_deg": 0, "stop_deg": 90, "points": 5}}"#,
    );
    let out = run(&["scan", "--config", "badsetup.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("5R"));
    assert_eq!(run(&["scan"], d).status.code(), Some(2));
    assert_eq!(
        run(&["scan", "--config", "missing.json"], d).status.code(),
        Some(2)
    );

    write_config(
        d,
        "far.json",
        r#"{"map": {"xi_min": -1000, "xi_max": 1000, "points": 3}}"#,
    );
    let out = run(&["validate", "--config", "far.json"], d);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    fs::write(
        d.join("constant.csv"),
        "param_m,rate_norm\n".to_string()
            + &(0..20).map(|i| format!("{i}e-5,0.5\n")).collect::<String>(),
    )
    .unwrap();
    let out = run(&["fit", "constant.csv"], d);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));

    write_config(d, "ok.json", NOON_SAME);
    let stdout = ok(&["validate", "--config", "ok.json"], d);
    assert!(stdout.contains("Lambda = 678.333 um"), "{stdout}");
}

#[test]
fn uncertainty_scales_with_integration_time() {
    let dir = tempfile::tempdir().unwrap();
    let config = |t: f64| {
        format!(
            r#"{{"scan": {{"kind": "same_direction", "start_um": -1500, "stop_um": 1500, "points": 121}},
                "counting": {{"integration_time_s": {t}, "peak_rate_hz": 1.0, "accidental_rate_hz": 0.005}}}}"#
        )
    };
    write_config(dir.path(), "short.json", &config(300.0));
    write_config(dir.path(), "long.json", &config(1200.0));
    let mut ratios = Vec::new();
    for seed in ["1", "2", "3"] {
        let mut errors = Vec::new();
        for name in ["short", "long"] {
            let out = format!("{name}{seed}");
            ok(
                &[
                    "scan",
                    "--config",
                    &format!("{name}.json"),
                    "--seed",
                    seed,
                    "--out",
                    &out,
                ],
                dir.path(),
            );
            let table = read_scan_csv(&dir.path().join(&out).join("scan.csv")).unwrap();
            let fit = fit_fringe(&table.samples, &FitOptions::default()).unwrap();
            errors.push(fit.uncertainties.visibility.unwrap());
        }
        ratios.push(errors[0] / errors[1]);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean / 2.0 - 1.0).abs() < 0.2, "{ratios:?}");
}

#[test]
fn manifest_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "noon.json", NOON_SAME);
    ok(
        &["scan", "--config", "noon.json", "--seed", "9"],
        dir.path(),
    );
    let table = read_scan_csv(&dir.path().join("scan.csv")).unwrap();
    let manifest = table.manifest.unwrap();
    assert_eq!(manifest.seed, 9);
    let config = manifest.config.unwrap();
    assert_eq!(config.seed, Some(9));
    let original = RunConfig::from_json(NOON_SAME).unwrap();
    assert_eq!(config.scan, original.scan);
}
