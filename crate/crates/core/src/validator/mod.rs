//! Patch validation: test selection, reordering, per-test budgets and
//! parallel, process-isolated execution.

mod scheduler;

pub use scheduler::{run_work_stealing, ScheduleResult, SchedulerEvent, Task};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, Outcome, RunOptions};
use crate::error::{Error, Result};
use crate::model::{
    PatchEntry, RepairConfig, TestId, TestRecord, TimeoutPolicy, ValidationVerdict, VerdictKind,
};
use crate::pool::PatchPool;
use crate::profiler::Profile;

pub const VERDICTS_FILE: &str = "verdicts.json";
pub const EVENT_LOG_FILE: &str = "validation-log.jsonl";

/// Time budget for a test whose original run took `tau_ms`:
/// `beta + round((1 + alpha) * tau)`.
pub fn compute_timeout(tau_ms: u64, policy: &TimeoutPolicy) -> u64 {
    policy.beta_ms + ((1.0 + policy.alpha) * tau_ms as f64).round() as u64
}

/// Tests named by the patch's manifest, or the whole suite without one.
/// Suite order is kept.
pub fn select_tests(patch: &PatchEntry, all_tests: &[TestRecord]) -> Vec<TestRecord> {
    match &patch.covering_tests {
        Some(covering) => all_tests.iter().filter(|t| covering.contains(&t.id)).cloned().collect(),
        None => all_tests.to_vec(),
    }
}

/// Originally failing tests first, then shorter first, then by id.
pub fn order_tests(mut tests: Vec<TestRecord>) -> Vec<TestRecord> {
    tests.sort_by(|a, b| {
        a.status
            .cmp(&b.status)
            .then(a.duration_ms.cmp(&b.duration_ms))
            .then_with(|| a.id.cmp(&b.id))
    });
    tests
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub workers: usize,
    pub reorder: bool,
    pub select: bool,
    pub early_stop: bool,
    pub timeout: TimeoutPolicy,
}

impl ValidationOptions {
    pub fn from_config(config: &RepairConfig) -> Self {
        ValidationOptions {
            workers: config.workers(),
            reorder: true,
            select: true,
            early_stop: config.early_stop,
            timeout: config.timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationPlan {
    pub patch: PatchEntry,
    /// Tests in execution order with their budgets.
    pub tests: Vec<(TestId, u64)>,
}

impl ValidationPlan {
    pub fn build(patch: &PatchEntry, profile: &Profile, opts: &ValidationOptions) -> Self {
        let selected =
            if opts.select { select_tests(patch, &profile.tests) } else { profile.tests.clone() };
        let ordered = if opts.reorder { order_tests(selected) } else { selected };
        let tests = ordered
            .into_iter()
            .map(|t| {
                let budget = compute_timeout(t.duration_ms, &opts.timeout);
                (t.id, budget)
            })
            .collect();
        ValidationPlan { patch: patch.clone(), tests }
    }
}

/// Runs the plan's tests in order, one fresh adapter process each, stopping
/// at the first failure or timeout.
pub fn validate_patch(plan: &ValidationPlan, adapter: &Adapter, scratch: &Path) -> ValidationVerdict {
    let start = Instant::now();
    let id = plan.patch.id.clone();
    if plan.tests.is_empty() {
        return ValidationVerdict::infra_error(id, None, 0, 0, "no tests selected");
    }
    let mut executed = 0;
    for (test, budget) in &plan.tests {
        let opts = RunOptions { patch_root: Some(&plan.patch.root), budget_ms: Some(*budget), want_coverage: false };
        let exec = adapter.run_test(test, &opts, scratch);
        executed += 1;
        let wall = start.elapsed().as_millis() as u64;
        match exec.outcome {
            Outcome::Passed => {}
            Outcome::Failed => {
                return ValidationVerdict::invalidated(id, VerdictKind::TestFailed, test.clone(), executed, wall)
            }
            Outcome::TimedOut => {
                return ValidationVerdict::invalidated(id, VerdictKind::TimedOut, test.clone(), executed, wall)
            }
            Outcome::AdapterError => {
                let detail = exec.detail.unwrap_or_else(|| "adapter error".into());
                return ValidationVerdict::infra_error(id, Some(test.clone()), executed, wall, detail);
            }
        }
    }
    ValidationVerdict::plausible(id, executed, start.elapsed().as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdicts: BTreeMap<String, ValidationVerdict>,
    pub stopped_early: bool,
    pub wall_ms: u64,
    pub tests_run_total: u64,
    pub workers: usize,
}

impl ValidationReport {
    pub fn kinds(&self) -> BTreeMap<String, VerdictKind> {
        self.verdicts.iter().map(|(id, v)| (id.clone(), v.kind)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub report: ValidationReport,
    pub events: Vec<SchedulerEvent>,
}

impl ValidationOutcome {
    pub fn save_event_log(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(|err| Error::json(path, err))?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

pub fn load_event_log(path: &Path) -> Result<Vec<SchedulerEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

pub struct Validator<'a> {
    adapter: &'a Adapter,
    profile: &'a Profile,
    options: ValidationOptions,
    scratch_root: PathBuf,
}

impl<'a> Validator<'a> {
    pub fn new(adapter: &'a Adapter, profile: &'a Profile, options: ValidationOptions, scratch_root: PathBuf) -> Self {
        Validator { adapter, profile, options, scratch_root }
    }

    pub fn validate_pool(&self, pool: &PatchPool) -> Result<ValidationOutcome> {
        if pool.is_empty() {
            return Err(Error::Validation("patch pool is empty".into()));
        }
        let start = Instant::now();
        let tasks = pool
            .patches
            .iter()
            .map(|p| Task { id: p.id.clone(), payload: ValidationPlan::build(p, self.profile, &self.options) })
            .collect();
        let scratch: Vec<PathBuf> =
            (0..self.options.workers.max(1)).map(|w| self.scratch_root.join(format!("worker-{w}"))).collect();
        let result = run_work_stealing(tasks, self.options.workers, self.options.early_stop, |worker, task| {
            validate_patch(&task.payload, self.adapter, &scratch[worker])
        });
        let tests_run_total = result.verdicts.iter().map(|v| u64::from(v.tests_executed)).sum();
        let verdicts = result.verdicts.into_iter().map(|v| (v.patch_id.clone(), v)).collect();
        Ok(ValidationOutcome {
            report: ValidationReport {
                verdicts,
                stopped_early: result.stopped_early,
                wall_ms: start.elapsed().as_millis() as u64,
                tests_run_total,
                workers: self.options.workers.max(1),
            },
            events: result.events,
        })
    }
}

/// Validates `pool` with the configured parallelism, early-stop and budgets,
/// always selecting and reordering tests.
pub fn validate_pool(pool: &PatchPool, profile: &Profile, config: &RepairConfig) -> Result<ValidationOutcome> {
    let adapter = Adapter::new(&config.adapter_command, &config.project_root)?;
    let scratch = config.work_dir().join("scratch").join("validate");
    Validator::new(&adapter, profile, ValidationOptions::from_config(config), scratch).validate_pool(pool)
}
