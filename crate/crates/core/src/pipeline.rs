//! Stage orchestration with artifacts persisted under `.prf/`.

use std::fs;

use log::info;

use crate::adapter::Adapter;
use crate::error::{Error, Result};
use crate::localization::{localize, SuspiciousnessRanking, RANKING_FILE};
use crate::model::{Granularity, RepairConfig};
use crate::pool::{load_pool, run_generation_plugin, PatchPool, PluginContext};
use crate::profiler::{profile_project, Profile, COVERAGE_FILE};
use crate::report::{generate_report, FixReport, FIX_REPORT_FILE};
use crate::validator::{
    ValidationOptions, ValidationOutcome, ValidationReport, Validator, EVENT_LOG_FILE, VERDICTS_FILE,
};

fn ensure_work_dir(config: &RepairConfig) -> Result<()> {
    let dir = config.work_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))
}

pub fn stage_profile(config: &RepairConfig) -> Result<Profile> {
    ensure_work_dir(config)?;
    let profile = profile_project(config)?;
    profile.save(&config.work_dir())?;
    Ok(profile)
}

pub fn load_profile(config: &RepairConfig) -> Result<Profile> {
    Profile::load(&config.work_dir())
}

/// Ranks elements when localization is enabled and writes `ranking.csv`.
pub fn stage_localize(config: &RepairConfig, profile: &Profile) -> Result<Option<SuspiciousnessRanking>> {
    if config.fl_option == Granularity::Off {
        return Ok(None);
    }
    ensure_work_dir(config)?;
    let ranking = localize(profile, config)?;
    ranking.save(&config.work_dir().join(RANKING_FILE))?;
    info!("ranked {} elements", ranking.entries.len());
    Ok(Some(ranking))
}

pub fn stage_generate(config: &RepairConfig, profile: &Profile) -> Result<PatchPool> {
    let mut ctx = PluginContext::for_project(config);
    let work = config.work_dir();
    let ranking = work.join(RANKING_FILE);
    if config.fl_option != Granularity::Off && ranking.is_file() {
        ctx.ranking_file = Some(ranking);
    }
    let coverage = work.join(COVERAGE_FILE);
    if profile.coverage.is_some() && coverage.is_file() {
        ctx.coverage_file = Some(coverage);
    }
    let known = profile.test_ids().into_iter().collect();
    run_generation_plugin(config, &ctx, &known)
}

pub fn stage_validate(config: &RepairConfig, profile: &Profile, pool: &PatchPool) -> Result<ValidationOutcome> {
    ensure_work_dir(config)?;
    let adapter = Adapter::new(&config.adapter_command, &config.project_root)?;
    let scratch = config.work_dir().join("scratch").join("validate");
    let outcome = Validator::new(&adapter, profile, ValidationOptions::from_config(config), scratch)
        .validate_pool(pool)?;
    outcome.report.save(&config.work_dir().join(VERDICTS_FILE))?;
    outcome.save_event_log(&config.work_dir().join(EVENT_LOG_FILE))?;
    Ok(outcome)
}

pub fn load_verdicts(config: &RepairConfig) -> Result<ValidationReport> {
    ValidationReport::load(&config.work_dir().join(VERDICTS_FILE))
}

/// Reloads the pool from disk, e.g. for a standalone report stage.
pub fn reload_pool(config: &RepairConfig, profile: &Profile) -> Result<PatchPool> {
    load_pool(&config.pool_root(), &profile.test_ids().into_iter().collect())
}

pub fn stage_report(config: &RepairConfig, report: &ValidationReport, pool: &PatchPool) -> Result<FixReport> {
    ensure_work_dir(config)?;
    let fix = generate_report(report, pool, config)?;
    fix.save(&config.work_dir().join(FIX_REPORT_FILE))?;
    Ok(fix)
}

#[derive(Debug)]
pub struct RunSummary {
    pub profile: Profile,
    pub ranking: Option<SuspiciousnessRanking>,
    pub pool: PatchPool,
    pub validation: ValidationOutcome,
    pub report: FixReport,
}

/// Error from a named pipeline stage.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError { stage: name, source })
}

/// profile, localize (when enabled), generate, validate, report.
pub fn run(config: &RepairConfig) -> std::result::Result<RunSummary, StageError> {
    let profile = stage("profile", stage_profile(config))?;
    let ranking = stage("localize", stage_localize(config, &profile))?;
    let pool = stage("generate", stage_generate(config, &profile))?;
    let validation = stage("validate", stage_validate(config, &profile, &pool))?;
    let report = stage("report", stage_report(config, &validation.report, &pool))?;
    Ok(RunSummary { profile, ranking, pool, validation, report })
}
