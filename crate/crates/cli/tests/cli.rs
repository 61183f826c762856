use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prf_core::fixture::{Behavior, FixturePatch, FixtureTest, SyntheticProject, CONFIG_FILE};
use serde_json::{json, Value};

fn prf(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prf"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .expect("spawn prf")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// The repair fixture without its looping patch, so default budgets stay cheap.
fn quick_fixture() -> SyntheticProject {
    let mut p = SyntheticProject::repair_fixture();
    p.patches.retain(|patch| patch.id != "p4-infinite-loop");
    p.config.clear();
    p
}

fn fix_report_without_timing(root: &Path) -> Value {
    let text = fs::read_to_string(root.join(".prf/fix-report.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    for e in v["entries"].as_array_mut().unwrap() {
        e["verdict"].as_object_mut().unwrap().remove("wall_ms");
    }
    v
}

#[test]
fn run_reports_the_correct_patch() {
    let dir = tempfile::tempdir().unwrap();
    let config = SyntheticProject::repair_fixture().write(dir.path()).unwrap();
    let out = prf(&["run"], &config);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("1. p2-correct"), "{text}");
    assert!(!text.contains("p4-infinite-loop"));
    assert!(dir.path().join(".prf/fix-report.json").is_file());
}

#[test]
fn run_exits_one_without_plausible_patches() {
    let dir = tempfile::tempdir().unwrap();
    let project = SyntheticProject {
        tests: vec![FixtureTest::new("a", 0, Behavior::Fail), FixtureTest::new("b", 0, Behavior::Pass)],
        patches: vec![
            FixturePatch::new("x1"),
            FixturePatch::new("x2").with("a", Behavior::Pass).with("b", Behavior::Fail),
        ],
        config: Default::default(),
    };
    let config = project.write(dir.path()).unwrap();
    let out = prf(&["run"], &config);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("no plausible patch"));
}

#[test]
fn missing_adapter_is_infrastructure_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join(CONFIG_FILE);
    fs::write(&config, r#"{"adapterCommand": "./no-such-adapter"}"#).unwrap();
    let out = prf(&["run"], &config);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("profile stage"), "{err}");
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join(CONFIG_FILE);
    fs::write(&config, r#"{"adapterCommand": "./a.sh", "cgOptions": "DYNAMIC"}"#).unwrap();
    let out = prf(&["run"], &config);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dynamic call graph"));

    fs::write(&config, r#"{"adapterCommand": "./a.sh", "flOption": "LINE"}"#).unwrap();
    let out = prf(&["profile"], &config);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flOption"));
}

#[test]
fn spelled_out_defaults_give_identical_reports() {
    let defaults = json!({
        "flOptions": "OFF", "flStrategy": "OCHIAI", "testCoverage": false,
        "failingTests": [], "cgOptions": "OFF",
        "patchGenerationPlugin": "dummy-patch-generation-plugin",
        "parallelism": 0,
        "patchPrioritizationPlugin": "dummy-patch-prioritization-plugin",
        "timeoutConstant": 5000, "timeoutPercent": 0.5,
        "earlyStop": false, "patchesDir": "patches-pool"
    });
    let mut spelled = quick_fixture();
    for (k, v) in defaults.as_object().unwrap() {
        spelled = spelled.config_value(k, v.clone());
    }
    let mut results = Vec::new();
    for project in [quick_fixture(), spelled] {
        let dir = tempfile::tempdir().unwrap();
        let config = project.write(dir.path()).unwrap();
        let out = prf(&["run"], &config);
        assert_eq!(out.status.code(), Some(0));
        results.push((stdout(&out), fix_report_without_timing(dir.path())));
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn stages_compose_to_the_same_report_as_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_fixture().write(dir.path()).unwrap();
    assert_eq!(prf(&["run"], &config).status.code(), Some(0));
    let full = fix_report_without_timing(dir.path());
    fs::remove_dir_all(dir.path().join(".prf")).unwrap();

    assert_eq!(prf(&["profile"], &config).status.code(), Some(0));
    let validated = prf(&["validate"], &config);
    assert_eq!(validated.status.code(), Some(0));
    assert!(stdout(&validated).contains("1 plausible"), "{}", stdout(&validated));
    let reported = prf(&["report"], &config);
    assert_eq!(reported.status.code(), Some(0));
    assert_eq!(fix_report_without_timing(dir.path()), full);
}

#[test]
fn localize_writes_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_fixture().config_value("flOptions", json!("LINE_LEVEL")).write(dir.path()).unwrap();
    assert_eq!(prf(&["profile"], &config).status.code(), Some(0));
    let out = prf(&["localize"], &config);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("element,score\nsrc/calc.c:sub:20,1.000000\n"));
    assert!(dir.path().join(".prf/ranking.csv").is_file());
}

#[test]
fn localize_needs_a_stored_profile() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_fixture().config_value("flOptions", json!("LINE")).write(dir.path()).unwrap();
    let out = prf(&["localize"], &config);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stored profile"));
}

#[test]
fn bench_prints_strategy_table() {
    let dir = tempfile::tempdir().unwrap();
    // 20 tests, 5 plausible patches each covering a single test
    let project = SyntheticProject {
        tests: (1..=20).map(|i| FixtureTest::new(format!("t{i:02}"), 0, Behavior::Pass)).collect(),
        patches: (0..5).map(|i| FixturePatch::new(format!("q{i}")).manifest(&[&format!("t{:02}", i + 1)])).collect(),
        config: Default::default(),
    };
    let config = project.config_value("parallelism", json!(2)).write(dir.path()).unwrap();
    let out = prf(&["bench", "--reps", "1"], &config);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "strategy,median_ms,speedup_vs_vanilla,tests_executed");
    assert_eq!(lines.len(), 5);
    let executed = |row: &str| row.rsplit(',').next().unwrap().parse::<u64>().unwrap();
    assert!(lines[1].starts_with("vanilla,"));
    assert_eq!(executed(lines[1]), 100);
    assert!(lines[3].starts_with("reorder+selection,"));
    assert!(executed(lines[3]) <= 5);
    assert!(lines[4].starts_with("reorder+selection+parallel,"));
    assert!(dir.path().join(".prf/bench.csv").is_file());
}
