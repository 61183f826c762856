//! Wall-clock comparison of validation strategies on one pool.
//!
//! The baseline ("vanilla") runs the whole suite in declaration order, one
//! patch at a time. Every strategy validates exhaustively (no early stop) and
//! still stops a patch at its first failing test.

use std::fmt::Write as _;
use std::path::Path;

use crate::adapter::Adapter;
use crate::error::{Error, Result};
use crate::model::{RepairConfig, TimeoutPolicy, VerdictKind};
use crate::pool::PatchPool;
use crate::profiler::Profile;
use crate::validator::{ValidationOptions, Validator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    pub name: String,
    pub reorder: bool,
    pub select: bool,
    pub workers: usize,
}

impl Strategy {
    fn new(name: &str, reorder: bool, select: bool, workers: usize) -> Self {
        Strategy { name: name.to_string(), reorder, select, workers }
    }

    pub fn options(&self, timeout: TimeoutPolicy) -> ValidationOptions {
        ValidationOptions {
            workers: self.workers,
            reorder: self.reorder,
            select: self.select,
            early_stop: false,
            timeout,
        }
    }
}

/// The four standard strategies; the last uses `workers` threads.
pub fn standard_strategies(workers: usize) -> Vec<Strategy> {
    vec![
        Strategy::new("vanilla", false, false, 1),
        Strategy::new("reorder", true, false, 1),
        Strategy::new("reorder+selection", true, true, 1),
        Strategy::new("reorder+selection+parallel", true, true, workers),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub strategy: String,
    pub median_ms: f64,
    pub speedup_vs_vanilla: f64,
    pub tests_executed: u64,
    pub samples_ms: Vec<u64>,
    /// Verdict kinds of the first repetition, in pool order.
    pub kinds: Vec<(String, VerdictKind)>,
}

pub fn median(samples: &[u64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_unstable();
    match s.len() {
        0 => 0.0,
        n if n % 2 == 1 => s[n / 2] as f64,
        n => (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0,
    }
}

/// Runs each strategy `reps` times. Speedups are relative to the first row.
pub fn bench_pool(
    adapter: &Adapter,
    profile: &Profile,
    pool: &PatchPool,
    strategies: &[Strategy],
    timeout: TimeoutPolicy,
    reps: usize,
    scratch: &Path,
) -> Result<Vec<BenchRow>> {
    if pool.is_empty() {
        return Err(Error::Bench("patch pool is empty".into()));
    }
    if strategies.is_empty() || reps == 0 {
        return Err(Error::Bench("need at least one strategy and one repetition".into()));
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(strategies.len());
    for (i, strategy) in strategies.iter().enumerate() {
        let validator = Validator::new(adapter, profile, strategy.options(timeout), scratch.join(format!("s{i}")));
        let mut samples = Vec::with_capacity(reps);
        let mut tests_executed = 0;
        let mut kinds = Vec::new();
        for rep in 0..reps {
            let outcome = validator.validate_pool(pool)?;
            samples.push(outcome.report.wall_ms);
            if rep == 0 {
                tests_executed = outcome.report.tests_run_total;
                kinds = pool
                    .patches
                    .iter()
                    .filter_map(|p| outcome.report.verdicts.get(&p.id).map(|v| (p.id.clone(), v.kind)))
                    .collect();
            }
        }
        let median_ms = median(&samples);
        let baseline = rows.first().map_or(median_ms, |r| r.median_ms);
        rows.push(BenchRow {
            strategy: strategy.name.clone(),
            median_ms,
            speedup_vs_vanilla: if median_ms > 0.0 { baseline / median_ms } else { 0.0 },
            tests_executed,
            samples_ms: samples,
            kinds,
        });
    }
    Ok(rows)
}

/// Profiles the project, loads the pool and runs the standard strategies.
pub fn run_bench(config: &RepairConfig, reps: usize) -> Result<Vec<BenchRow>> {
    let profile = crate::pipeline::stage_profile(config)?;
    let pool = crate::pipeline::stage_generate(config, &profile)?;
    let adapter = Adapter::new(&config.adapter_command, &config.project_root)?;
    let scratch = config.work_dir().join("scratch").join("bench");
    bench_pool(&adapter, &profile, &pool, &standard_strategies(config.workers()), config.timeout, reps, &scratch)
}

/// CSV with columns `strategy,median_ms,speedup_vs_vanilla,tests_executed`.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("strategy,median_ms,speedup_vs_vanilla,tests_executed\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.1},{:.3},{}", r.strategy, r.median_ms, r.speedup_vs_vanilla, r.tests_executed);
    }
    out
}
