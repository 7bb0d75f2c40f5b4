use metaprism::foster::parse_netlist;
use metaprism::optimize::PhaseProfile;
use metaprism::runner::{run_cli, RunManifest, MANIFEST_FILE};
use std::path::{Path, PathBuf};

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("metaprism-pipeline-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["metaprism", "--out", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    run_cli(argv)
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_writes_gain_map_and_bandwidth() {
    let out = scratch("sweep");
    let code = run(
        &out,
        &[
            "sweep-ideal",
            "--theta-points",
            "101",
            "--freq-points",
            "5",
            "--kappa-r",
            "10",
            "--draws",
            "200",
        ],
    );
    assert_eq!(code, 0);
    let m = manifest(&out);
    for f in [
        "gain_map.csv",
        "beams.csv",
        "bandwidth.csv",
        "reactance.csv",
        "multipath.csv",
    ] {
        assert!(m.outputs.iter().any(|o| o.path == f), "{f} missing");
    }
    assert_eq!(csv_rows(&out.join("gain_map.csv")).len(), 5 * 101);
    assert!(m.scenario_hash.as_ref().is_some_and(|h| h.len() == 64));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn synth_netlists_parse_back() {
    let out = scratch("synth");
    assert_eq!(
        run(
            &out,
            &["synth", "--i-count", "8", "--j-count", "1", "--digits", "9"]
        ),
        0
    );
    let dir = out.join("netlists");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let circ = parse_netlist(&std::fs::read_to_string(entry.unwrap().path()).unwrap()).unwrap();
        assert!(circ.is_realizable() || circ.open);
        count += 1;
    }
    assert_eq!(count, 8);
    assert_eq!(csv_rows(&out.join("fit_report.csv")).len(), 8);
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn optimize_then_eval_the_result() {
    let out = scratch("opt");
    let args = [
        "optimize",
        "--i-count",
        "8",
        "--j-count",
        "2",
        "--k-users",
        "3",
        "--n-alpha",
        "20",
        "--n-gamma",
        "16",
    ];
    assert_eq!(run(&out, &args), 0);
    let table = csv_rows(&out.join("capacity_table.csv"));
    let cases: Vec<&str> = table.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(cases, ["non-opt", "foster", "mtp", "nc-mtp"]);
    let profile =
        PhaseProfile::from_csv(&std::fs::read_to_string(out.join("profile.csv")).unwrap()).unwrap();
    assert_eq!(profile.alpha.len(), 16);

    let eval = scratch("opt-eval");
    let profile_path = out.join("profile.csv");
    let eval_args = [
        "eval",
        "--i-count",
        "8",
        "--j-count",
        "2",
        "--k-users",
        "3",
        "--source",
        "file",
        "--profile",
        profile_path.to_str().unwrap(),
        "--theta-points",
        "31",
    ];
    assert_eq!(run(&eval, &eval_args), 0);
    let mtp: f64 = table[2][2].parse().unwrap();
    let evaluated: f64 = csv_rows(&eval.join("capacity.csv"))[0][2].parse().unwrap();
    assert!(
        (mtp - evaluated).abs() <= 1e-8 * mtp,
        "{mtp} vs {evaluated}"
    );
    std::fs::remove_dir_all(&out).unwrap();
    std::fs::remove_dir_all(&eval).unwrap();
}

#[test]
fn report_flags_modified_outputs() {
    let out = scratch("report");
    assert_eq!(
        run(
            &out,
            &["sweep-ideal", "--theta-points", "11", "--freq-points", "3"]
        ),
        0
    );
    std::fs::write(out.join("beams.csv"), "tampered\n").unwrap();
    let rep = scratch("report-out");
    assert_eq!(run(&rep, &["report", "--input", out.to_str().unwrap()]), 0);
    let rows = csv_rows(&rep.join("report.csv"));
    let beams = rows.iter().find(|r| r[0] == "beams.csv").unwrap();
    assert_eq!(beams[3], "false");
    assert!(rows
        .iter()
        .filter(|r| r[0] != "beams.csv")
        .all(|r| r[3] == "true"));
    std::fs::remove_dir_all(&out).unwrap();
    std::fs::remove_dir_all(&rep).unwrap();
}

#[test]
fn invalid_input_exits_with_two() {
    let out = scratch("invalid");
    assert_eq!(
        run(
            &out,
            &[
                "sweep-ideal",
                "--theta-min-rad",
                "1.0",
                "--theta-max-rad",
                "0.5"
            ]
        ),
        2
    );
    assert_eq!(run(&out, &["no-such-command"]), 2);
    assert_eq!(run(&out, &["eval", "--source", "file"]), 2);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn replay_rejects_a_different_command() {
    let out = scratch("replay");
    assert_eq!(
        run(
            &out,
            &["sweep-ideal", "--theta-points", "11", "--freq-points", "3"]
        ),
        0
    );
    let m = out.join(MANIFEST_FILE);
    let other = scratch("replay-other");
    assert_eq!(
        run(&other, &["--from-manifest", m.to_str().unwrap(), "synth"]),
        2
    );
    assert_eq!(
        run(
            &other,
            &["--from-manifest", m.to_str().unwrap(), "sweep-ideal"]
        ),
        0
    );
    assert_eq!(
        std::fs::read(out.join("gain_map.csv")).unwrap(),
        std::fs::read(other.join("gain_map.csv")).unwrap()
    );
    std::fs::remove_dir_all(&out).unwrap();
    std::fs::remove_dir_all(&other).unwrap();
}

#[test]
fn bundled_scenario_resolves() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/wide_quarter_wave.toml");
    let s = metaprism::scenario::load_scenario_file(&path).unwrap();
    assert_eq!(s.geometry.i_count(), 32);
    assert!((s.theta_max - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    let out = scratch("bundled");
    let code = run(
        &out,
        &[
            "sweep-ideal",
            "--scenario",
            path.to_str().unwrap(),
            "--theta-points",
            "21",
            "--freq-points",
            "3",
        ],
    );
    assert_eq!(code, 0);
    assert!(manifest(&out).scenario.is_some());
    std::fs::remove_dir_all(&out).unwrap();
}
