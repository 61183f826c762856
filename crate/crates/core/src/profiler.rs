//! Profiling: one sequential, unbudgeted pass over the suite on the original
//! program, recording outcomes, durations and (optionally) line coverage.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, Outcome, RunOptions};
use crate::error::{Error, Result};
use crate::model::{
    CoverageMatrix, Granularity, ProgramElement, RepairConfig, SpectrumCounts, TestId, TestRecord,
    TestStatus,
};

pub const PROFILE_FILE: &str = "profile.json";
pub const COVERAGE_FILE: &str = "coverage.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub tests: Vec<TestRecord>,
    #[serde(skip)]
    pub coverage: Option<CoverageMatrix>,
    pub failing: BTreeSet<TestId>,
}

impl Profile {
    /// Builds a profile whose failing set is derived from the records.
    pub fn new(tests: Vec<TestRecord>, coverage: Option<CoverageMatrix>) -> Self {
        let failing = tests.iter().filter(|t| t.is_failing()).map(|t| t.id.clone()).collect();
        Profile { tests, coverage, failing }
    }

    pub fn test_ids(&self) -> Vec<TestId> {
        self.tests.iter().map(|t| t.id.clone()).collect()
    }

    pub fn record(&self, id: &TestId) -> Option<&TestRecord> {
        self.tests.iter().find(|t| &t.id == id)
    }

    /// Re-labels statuses so that exactly `failing` are FAILING.
    pub fn with_failing(mut self, failing: &BTreeSet<TestId>) -> Self {
        for t in &mut self.tests {
            t.status = if failing.contains(&t.id) { TestStatus::Failing } else { TestStatus::Passing };
        }
        self.failing = failing.clone();
        self
    }

    /// Writes `profile.json` and, when coverage was collected, `coverage.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(PROFILE_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        let cov_path = dir.join(COVERAGE_FILE);
        match &self.coverage {
            Some(matrix) => {
                let mut w = csv::Writer::from_path(&cov_path).map_err(|e| Error::csv(&cov_path, e))?;
                w.write_record(["test_id", "element"]).map_err(|e| Error::csv(&cov_path, e))?;
                for (test, elements) in matrix {
                    for e in elements {
                        w.write_record([test.as_str(), &e.canonical()])
                            .map_err(|e| Error::csv(&cov_path, e))?;
                    }
                }
                w.flush().map_err(|e| Error::io(&cov_path, e))?;
            }
            None => {
                let _ = fs::remove_file(&cov_path);
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(PROFILE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut profile: Profile = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let cov_path = dir.join(COVERAGE_FILE);
        if cov_path.exists() {
            let mut matrix: CoverageMatrix =
                profile.tests.iter().map(|t| (t.id.clone(), BTreeSet::new())).collect();
            let mut r = csv::Reader::from_path(&cov_path).map_err(|e| Error::csv(&cov_path, e))?;
            for row in r.records() {
                let row = row.map_err(|e| Error::csv(&cov_path, e))?;
                let (Some(test), Some(element)) = (row.get(0), row.get(1)) else {
                    return Err(Error::Parse(format!("{}: short row", cov_path.display())));
                };
                let test = TestId::new(test)?;
                let entry = matrix.get_mut(&test).ok_or_else(|| {
                    Error::Parse(format!("{}: unknown test {test}", cov_path.display()))
                })?;
                entry.insert(ProgramElement::parse(element, Granularity::Line)?);
            }
            profile.coverage = Some(matrix);
        }
        Ok(profile)
    }
}

/// Runs every discovered test once on the unpatched program.
pub fn profile_project(config: &RepairConfig) -> Result<Profile> {
    let adapter = Adapter::new(&config.adapter_command, &config.project_root)?;
    let tests = adapter.discover_tests()?;
    let want_coverage = config.wants_coverage();
    let scratch = config.work_dir().join("scratch").join("profile");
    let opts = RunOptions { patch_root: None, budget_ms: None, want_coverage };

    let mut records = Vec::with_capacity(tests.len());
    let mut matrix = CoverageMatrix::new();
    for test in tests {
        let exec = adapter.run_test(&test, &opts, &scratch);
        let status = match exec.outcome {
            Outcome::Passed => TestStatus::Passing,
            Outcome::Failed => TestStatus::Failing,
            Outcome::TimedOut | Outcome::AdapterError => {
                return Err(Error::Profiling {
                    test: test.to_string(),
                    message: exec.detail.unwrap_or_else(|| format!("{:?}", exec.outcome)),
                })
            }
        };
        if want_coverage {
            matrix.insert(test.clone(), exec.covered.unwrap_or_default());
        }
        records.push(TestRecord { id: test, status, duration_ms: exec.duration_ms });
    }
    let profile = Profile::new(records, want_coverage.then_some(matrix));
    let resolved = resolve_failing_tests(config, &profile.failing, &profile.test_ids())?;
    info!("profiled {} tests, {} failing", profile.tests.len(), resolved.failing.len());
    Ok(profile.with_failing(&resolved.failing))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailingResolution {
    pub failing: BTreeSet<TestId>,
    /// Symmetric difference between configured and observed sets, when the
    /// configured set was used and disagreed.
    pub mismatch: Vec<TestId>,
}

/// Configured failing tests win over observed ones; a disagreement is logged.
pub fn resolve_failing_tests(
    config: &RepairConfig,
    observed: &BTreeSet<TestId>,
    discovered: &[TestId],
) -> Result<FailingResolution> {
    if config.failing_tests.is_empty() {
        return Ok(FailingResolution { failing: observed.clone(), mismatch: Vec::new() });
    }
    let known: BTreeSet<&TestId> = discovered.iter().collect();
    let unknown: Vec<String> = config
        .failing_tests
        .iter()
        .filter(|t| !known.contains(t))
        .map(TestId::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "failingTests names undiscovered tests: {}",
            unknown.join(", ")
        )));
    }
    let configured: BTreeSet<TestId> = config.failing_tests.iter().cloned().collect();
    let mismatch: Vec<TestId> = configured.symmetric_difference(observed).cloned().collect();
    if !mismatch.is_empty() {
        let names: Vec<&str> = mismatch.iter().map(TestId::as_str).collect();
        warn!("configured failing tests differ from observed ones: {}", names.join(", "));
    }
    Ok(FailingResolution { failing: configured, mismatch })
}

/// Projects line-level coverage onto `granularity`.
pub fn coarsen_coverage(matrix: &CoverageMatrix, granularity: Granularity) -> Result<CoverageMatrix> {
    if granularity == Granularity::Off {
        return Err(Error::Localization("cannot coarsen coverage to OFF".into()));
    }
    matrix
        .iter()
        .map(|(test, elements)| {
            let projected = elements
                .iter()
                .map(|e| {
                    e.coarsen(granularity).ok_or_else(|| {
                        Error::Localization(format!("element {e} is coarser than {granularity}"))
                    })
                })
                .collect::<Result<BTreeSet<_>>>()?;
            Ok((test.clone(), projected))
        })
        .collect()
}

/// Tallies spectrum counts for every covered element.
pub fn build_spectrum(
    coverage: &CoverageMatrix,
    failing: &BTreeSet<TestId>,
    tests: &[TestId],
) -> BTreeMap<ProgramElement, SpectrumCounts> {
    let total_failing = tests.iter().filter(|t| failing.contains(*t)).count() as u32;
    let total_passing = tests.len() as u32 - total_failing;
    let mut spectrum: BTreeMap<ProgramElement, SpectrumCounts> = BTreeMap::new();
    for test in tests {
        let Some(elements) = coverage.get(test) else { continue };
        let is_failing = failing.contains(test);
        for e in elements {
            let c = spectrum.entry(e.clone()).or_insert(SpectrumCounts {
                e_f: 0,
                e_p: 0,
                total_failing,
                total_passing,
            });
            if is_failing {
                c.e_f += 1;
            } else {
                c.e_p += 1;
            }
        }
    }
    spectrum
}
