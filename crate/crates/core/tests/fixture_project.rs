//! End-to-end behaviour on generated projects.

use std::collections::BTreeSet;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::time::{Duration, Instant};

use prf_core::adapter::{Adapter, Outcome, RunOptions};
use prf_core::fixture::{self, Behavior, FixturePatch, FixtureTest, SyntheticProject};
use prf_core::localization::localize;
use prf_core::pipeline;
use prf_core::validator::{validate_patch, ValidationOptions, ValidationPlan, Validator};
use prf_core::{load_config, Granularity, ProgramElement, RepairConfig, TestId, TestStatus, VerdictKind};
use serde_json::json;

fn setup(project: SyntheticProject) -> (tempfile::TempDir, RepairConfig) {
    let dir = tempfile::tempdir().unwrap();
    let path = project.write(dir.path()).unwrap();
    let config = load_config(&path).unwrap();
    (dir, config)
}

fn id(s: &str) -> TestId {
    TestId::new(s).unwrap()
}

#[test]
fn profile_records_statuses_durations_and_coverage() {
    let project = SyntheticProject::repair_fixture().config_value("flOptions", json!("LINE_LEVEL"));
    let (_dir, config) = setup(project);
    let profile = prf_core::profile_project(&config).unwrap();
    assert_eq!(profile.tests.len(), 8);
    assert_eq!(profile.failing, [id("t5")].into());
    assert!(profile.tests.iter().all(|t| t.duration_ms > 0));
    let t5 = profile.record(&id("t5")).unwrap();
    assert_eq!(t5.status, TestStatus::Failing);
    assert!(t5.duration_ms >= 50);
    let cov = profile.coverage.as_ref().unwrap();
    let expected: BTreeSet<ProgramElement> = ["src/calc.c:main:3", "src/calc.c:sub:20", "src/calc.c:sub:21"]
        .iter()
        .map(|s| ProgramElement::parse(s, Granularity::Line).unwrap())
        .collect();
    assert_eq!(cov[&id("t5")], expected);
}

#[test]
fn profile_without_coverage_when_disabled() {
    let (_dir, config) = setup(SyntheticProject::repair_fixture());
    assert!(!config.wants_coverage());
    let profile = prf_core::profile_project(&config).unwrap();
    assert!(profile.coverage.is_none());
}

#[test]
fn profiling_is_deterministic_apart_from_durations() {
    let project = SyntheticProject::repair_fixture().config_value("testCoverage", json!(true));
    let (_dir, config) = setup(project);
    let a = prf_core::profile_project(&config).unwrap();
    let b = prf_core::profile_project(&config).unwrap();
    let statuses = |p: &prf_core::Profile| p.tests.iter().map(|t| (t.id.clone(), t.status)).collect::<Vec<_>>();
    assert_eq!(statuses(&a), statuses(&b));
    assert_eq!(a.failing, b.failing);
    assert_eq!(a.coverage, b.coverage);
}

#[test]
fn configured_failing_tests_override_observation() {
    let project = SyntheticProject::repair_fixture().config_value("failingTests", json!(["t2"]));
    let (_dir, config) = setup(project);
    let profile = prf_core::profile_project(&config).unwrap();
    assert_eq!(profile.failing, [id("t2")].into());
    assert_eq!(profile.record(&id("t5")).unwrap().status, TestStatus::Passing);
}

#[test]
fn profiling_aborts_on_adapter_error() {
    let (dir, config) = setup(SyntheticProject::repair_fixture());
    // unknown behaviour makes the adapter exit 2
    fs::write(dir.path().join("build/outcomes"), "t3 explode\n").unwrap();
    match prf_core::profile_project(&config).unwrap_err() {
        prf_core::Error::Profiling { test, .. } => assert_eq!(test, "t3"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn localization_ranks_the_faulty_line_first() {
    let project = SyntheticProject::repair_fixture()
        .config_value("flOptions", json!("LINE"))
        .config_value("flStrategy", json!("OCHIAI"));
    let (_dir, config) = setup(project);
    let profile = prf_core::profile_project(&config).unwrap();
    let ranking = localize(&profile, &config).unwrap();
    assert_eq!(ranking.entries[0].element.canonical(), "src/calc.c:sub:20");
    assert_eq!(ranking.entries[0].score, 1.0);
    let scores: Vec<f64> = ranking.entries.iter().map(|e| e.score).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let mut by_function = config.clone();
    by_function.fl_option = Granularity::Function;
    let ranking = localize(&profile, &by_function).unwrap();
    assert_eq!(ranking.entries[0].element.canonical(), "src/calc.c:sub");
}

#[test]
fn localization_ignores_duration_scaling() {
    let project = SyntheticProject::repair_fixture().config_value("flOptions", json!("LINE"));
    let (_dir, config) = setup(project);
    let profile = prf_core::profile_project(&config).unwrap();
    let mut scaled = profile.clone();
    for t in &mut scaled.tests {
        t.duration_ms *= 17;
    }
    let a = localize(&profile, &config).unwrap();
    let b = localize(&scaled, &config).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn validate_patch_outcomes_on_fixture() {
    let (_dir, config) = setup(SyntheticProject::repair_fixture());
    let profile = prf_core::profile_project(&config).unwrap();
    let pool = pipeline::stage_generate(&config, &profile).unwrap();
    let adapter = Adapter::new(&config.adapter_command, &config.project_root).unwrap();
    let opts = ValidationOptions::from_config(&config);
    let scratch = config.work_dir().join("t");
    let verdict = |pid: &str| {
        let plan = ValidationPlan::build(pool.get(pid).unwrap(), &profile, &opts);
        validate_patch(&plan, &adapter, &scratch)
    };

    let correct = verdict("p2-correct");
    assert_eq!(correct.kind, VerdictKind::Plausible);
    assert_eq!(correct.tests_executed, 3);
    assert!(correct.culprit_test.is_none());

    // t5 still fails and is ordered first
    let wrong = verdict("p1-wrong-constant");
    assert_eq!(wrong.kind, VerdictKind::TestFailed);
    assert_eq!(wrong.tests_executed, 1);
    assert_eq!(wrong.culprit_test, Some(id("t5")));

    let looping = verdict("p4-infinite-loop");
    assert_eq!(looping.kind, VerdictKind::TimedOut);
    assert_eq!(looping.culprit_test, Some(id("t5")));

    let breaks = verdict("p3-breaks-t1");
    assert_eq!(breaks.kind, VerdictKind::TestFailed);
    assert_eq!(breaks.culprit_test, Some(id("t1")));
}

#[test]
fn schedule_independence_on_fixture() {
    let (_dir, config) = setup(SyntheticProject::repair_fixture());
    let profile = prf_core::profile_project(&config).unwrap();
    let pool = pipeline::stage_generate(&config, &profile).unwrap();
    let adapter = Adapter::new(&config.adapter_command, &config.project_root).unwrap();
    let mut kinds = Vec::new();
    for k in [1, 4] {
        let mut opts = ValidationOptions::from_config(&config);
        opts.workers = k;
        let out = Validator::new(&adapter, &profile, opts, config.work_dir().join(format!("k{k}")))
            .validate_pool(&pool)
            .unwrap();
        assert_eq!(out.report.verdicts.len(), pool.len());
        assert!(!out.report.stopped_early);
        assert!(out.report.verdicts.values().all(|v| v.is_consistent()));
        kinds.push(out.report.kinds());
    }
    assert_eq!(kinds[0], kinds[1]);
}

#[test]
fn early_stop_reports_a_plausible_patch() {
    let project = SyntheticProject::repair_fixture().config_value("earlyStop", json!(true));
    let (_dir, config) = setup(project);
    let profile = prf_core::profile_project(&config).unwrap();
    let pool = pipeline::stage_generate(&config, &profile).unwrap();
    let out = prf_core::validate_pool(&pool, &profile, &config).unwrap();
    assert!(out.report.stopped_early);
    assert!(out.report.verdicts.values().any(|v| v.is_plausible()));
}

#[test]
fn adapter_error_during_validation_is_infra_error() {
    let project = SyntheticProject {
        tests: vec![FixtureTest::new("a", 0, Behavior::Pass)],
        patches: vec![FixturePatch::new("p")],
        config: Default::default(),
    };
    let (dir, config) = setup(project);
    let profile = prf_core::profile_project(&config).unwrap();
    fs::write(dir.path().join("patches-pool/p/outcomes"), "a explode\n").unwrap();
    let pool = pipeline::stage_generate(&config, &profile).unwrap();
    let out = prf_core::validate_pool(&pool, &profile, &config).unwrap();
    let v = &out.report.verdicts["p"];
    assert_eq!(v.kind, VerdictKind::InfraError);
    assert_eq!(v.culprit_test, Some(id("a")));
}

fn write_script(path: &Path, body: &str) {
    fs::write(path, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(path, fs::Permissions::from_mode(0o755)).unwrap();
}

#[test]
fn consecutive_runs_share_no_process_state() {
    let dir = tempfile::tempdir().unwrap();
    // Each run poisons a marker keyed by its own pid and fails if a marker
    // from an earlier process is still reachable through its environment.
    write_script(
        &dir.path().join("adapter.sh"),
        r#"[ -z "$POISONED_BY" ] || exit 1
echo $$ > "$PWD/marker-$$"
export POISONED_BY=$$
echo $$"#,
    );
    let adapter = Adapter::new("./adapter.sh", dir.path()).unwrap();
    let scratch = dir.path().join("s");
    let a = adapter.run_test(&id("t"), &RunOptions::default(), &scratch);
    let b = adapter.run_test(&id("t"), &RunOptions::default(), &scratch);
    assert_eq!((a.outcome, b.outcome), (Outcome::Passed, Outcome::Passed));
    assert_ne!(a.stdout.trim(), b.stdout.trim(), "each run must be a fresh process");
    for out in [&a, &b] {
        let pid: i32 = out.stdout.trim().parse().unwrap();
        assert!(fixture::process_gone(pid));
    }
}

#[test]
fn timed_out_process_tree_is_killed() {
    let dir = tempfile::tempdir().unwrap();
    write_script(
        &dir.path().join("adapter.sh"),
        r#"sleep 3600 &
echo "$$ $!" > "$PWD/pids"
wait"#,
    );
    let adapter = Adapter::new("./adapter.sh", dir.path()).unwrap();
    let opts = RunOptions { budget_ms: Some(500), ..Default::default() };
    let start = Instant::now();
    let exec = adapter.run_test(&id("t"), &opts, &dir.path().join("s"));
    assert_eq!(exec.outcome, Outcome::TimedOut);
    assert!(exec.duration_ms >= 500);
    let pids: Vec<i32> = fs::read_to_string(dir.path().join("pids"))
        .unwrap()
        .split_whitespace()
        .map(|p| p.parse().unwrap())
        .collect();
    assert_eq!(pids.len(), 2);
    let deadline = Instant::now() + Duration::from_secs(2);
    while !pids.iter().all(|&p| fixture::process_gone(p)) {
        assert!(Instant::now() < deadline, "descendants survived: {pids:?}");
        std::thread::sleep(Duration::from_millis(20));
    }
    assert!(start.elapsed() < Duration::from_millis(500 + 2000));
}

#[test]
fn stage_composition_matches_full_run() {
    let (_dir, config) = setup(SyntheticProject::repair_fixture());
    let full = pipeline::run(&config).unwrap();
    let full_json = strip_wall(&full.report.to_json());

    let profile = pipeline::stage_profile(&config).unwrap();
    let loaded = pipeline::load_profile(&config).unwrap();
    assert_eq!(loaded, profile);
    let pool = pipeline::stage_generate(&config, &loaded).unwrap();
    pipeline::stage_validate(&config, &loaded, &pool).unwrap();
    let verdicts = pipeline::load_verdicts(&config).unwrap();
    let pool = pipeline::reload_pool(&config, &loaded).unwrap();
    let staged = pipeline::stage_report(&config, &verdicts, &pool).unwrap();
    assert_eq!(strip_wall(&staged.to_json()), full_json);
    assert_eq!(staged.patch_ids(), ["p2-correct"]);
}

/// Drops the timing fields, which differ between any two runs.
fn strip_wall(json: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
    for e in v["entries"].as_array_mut().unwrap() {
        e["verdict"].as_object_mut().unwrap().remove("wall_ms");
    }
    v.to_string()
}

#[test]
fn run_writes_every_artifact() {
    let project = SyntheticProject::repair_fixture()
        .config_value("flOptions", json!("METHOD_LEVEL"))
        .config_value("parallelism", json!(2));
    let (_dir, config) = setup(project);
    let summary = pipeline::run(&config).unwrap();
    assert!(summary.ranking.is_some());
    let work = config.work_dir();
    for f in ["profile.json", "coverage.csv", "ranking.csv", "verdicts.json", "validation-log.jsonl", "fix-report.json"] {
        assert!(work.join(f).is_file(), "missing {f}");
    }
    let ranking = fs::read_to_string(work.join("ranking.csv")).unwrap();
    // t2 (passing) also reaches sub(), so sub scores 1/sqrt(2) at function level
    assert!(ranking.starts_with("element,score\nsrc/calc.c:sub,0.707107\n"), "{ranking}");
    let events = prf_core::validator::load_event_log(&work.join("validation-log.jsonl")).unwrap();
    assert_eq!(events, summary.validation.events);
}

#[test]
fn localization_error_is_stage_labeled() {
    let project = SyntheticProject::repair_fixture()
        .config_value("flOptions", json!("LINE"))
        .config_value("failingTests", json!([]));
    let (dir, config) = setup(project);
    fs::write(dir.path().join("build/outcomes"), "").unwrap();
    let err = pipeline::run(&config).unwrap_err();
    assert_eq!(err.stage, "localize");
    assert!(err.to_string().contains("no failing tests"));
}
