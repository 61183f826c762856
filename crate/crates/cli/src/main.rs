//! `prf`: run the repair pipeline or one of its stages.
//!
//! Exit status: 0 when at least one plausible patch is reported (or a stage
//! succeeded), 1 when the report is empty, 2 on configuration or
//! infrastructure errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use prf_core::{bench, pipeline, FixReport, RepairConfig};

#[derive(Debug, Parser)]
#[command(name = "prf", version, about = "Generate-and-validate program repair driver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON configuration file; its directory is the project root.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Profile, localize, generate, validate and report.
    Run(Common),
    /// Run the suite on the original program and write .prf/profile.json.
    Profile(Common),
    /// Rank program elements from a stored profile into .prf/ranking.csv.
    Localize(Common),
    /// Load the patch pool and validate it against a stored profile.
    Validate(Common),
    /// Build the fix report from stored verdicts.
    Report(Common),
    /// Compare validation strategies by wall-clock time.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Repetitions per strategy.
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
}

#[derive(Debug, PartialEq, Eq)]
enum Status {
    Ok,
    NothingPlausible,
}

fn load(common: &Common) -> Result<RepairConfig> {
    prf_core::load_config(&common.config).with_context(|| format!("loading {}", common.config.display()))
}

fn print_report(report: &FixReport) -> Status {
    print!("{}", report.render());
    if report.entries.is_empty() {
        Status::NothingPlausible
    } else {
        Status::Ok
    }
}

fn execute(cmd: Cmd) -> Result<Status> {
    match cmd {
        Cmd::Run(common) => {
            let config = load(&common)?;
            let summary = pipeline::run(&config)?;
            Ok(print_report(&summary.report))
        }
        Cmd::Profile(common) => {
            let config = load(&common)?;
            let profile = pipeline::stage_profile(&config).context("profile stage")?;
            println!("profiled {} tests, {} failing", profile.tests.len(), profile.failing.len());
            Ok(Status::Ok)
        }
        Cmd::Localize(common) => {
            let config = load(&common)?;
            let profile = pipeline::load_profile(&config).context("loading stored profile")?;
            match pipeline::stage_localize(&config, &profile).context("localize stage")? {
                Some(ranking) => print!("{}", ranking.to_csv()),
                None => bail!("fault localization is disabled (flOptions=OFF)"),
            }
            Ok(Status::Ok)
        }
        Cmd::Validate(common) => {
            let config = load(&common)?;
            let profile = pipeline::load_profile(&config).context("loading stored profile")?;
            let pool = pipeline::stage_generate(&config, &profile).context("generate stage")?;
            let outcome = pipeline::stage_validate(&config, &profile, &pool).context("validate stage")?;
            let r = &outcome.report;
            let plausible = r.verdicts.values().filter(|v| v.is_plausible()).count();
            println!(
                "validated {} of {} patches with {} workers: {plausible} plausible, {} tests in {} ms{}",
                r.verdicts.len(),
                pool.len(),
                r.workers,
                r.tests_run_total,
                r.wall_ms,
                if r.stopped_early { " (stopped early)" } else { "" }
            );
            Ok(Status::Ok)
        }
        Cmd::Report(common) => {
            let config = load(&common)?;
            let profile = pipeline::load_profile(&config).context("loading stored profile")?;
            let verdicts = pipeline::load_verdicts(&config).context("loading stored verdicts")?;
            let pool = pipeline::reload_pool(&config, &profile).context("report stage")?;
            let report = pipeline::stage_report(&config, &verdicts, &pool).context("report stage")?;
            Ok(print_report(&report))
        }
        Cmd::Bench { common, reps } => {
            let config = load(&common)?;
            let rows = bench::run_bench(&config, reps).context("bench")?;
            let csv = bench::to_csv(&rows);
            let path = config.work_dir().join("bench.csv");
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            print!("{csv}");
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NothingPlausible) => ExitCode::from(1),
        Err(e) => {
            eprintln!("prf: {e:#}");
            ExitCode::from(2)
        }
    }
}
