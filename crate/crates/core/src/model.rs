//! Shared domain types: tests, program elements, coverage, spectra, patches
//! and verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a single test as reported by the project adapter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TestId(String);

impl TestId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Parse("test id must not be empty".into()));
        }
        if name.contains(['\n', '\r']) {
            return Err(Error::Parse(format!("test id {name:?} contains a newline")));
        }
        Ok(TestId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TestId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        TestId::new(value)
    }
}

impl From<TestId> for String {
    fn from(id: TestId) -> String {
        id.0
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestId::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestStatus {
    Failing,
    Passing,
}

/// Outcome and duration of one test on the unpatched program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub id: TestId,
    pub status: TestStatus,
    pub duration_ms: u64,
}

impl TestRecord {
    pub fn is_failing(&self) -> bool {
        self.status == TestStatus::Failing
    }
}

/// Level at which program elements are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Granularity {
    File,
    Function,
    Line,
    Off,
}

impl Granularity {
    /// Parses a granularity name, accepting the JVM-flavoured aliases
    /// `CLASS_LEVEL`, `METHOD_LEVEL` and `LINE_LEVEL`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "OFF" => Ok(Granularity::Off),
            "FILE" | "CLASS_LEVEL" => Ok(Granularity::File),
            "FUNCTION" | "METHOD_LEVEL" => Ok(Granularity::Function),
            "LINE" | "LINE_LEVEL" => Ok(Granularity::Line),
            other => Err(Error::Config(format!("unknown granularity {other:?}"))),
        }
    }

    fn field_count(self) -> Option<usize> {
        match self {
            Granularity::File => Some(1),
            Granularity::Function => Some(2),
            Granularity::Line => Some(3),
            Granularity::Off => None,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::File => "FILE",
            Granularity::Function => "FUNCTION",
            Granularity::Line => "LINE",
            Granularity::Off => "OFF",
        })
    }
}

/// A file, function or line of the program under repair.
///
/// The canonical textual form is `file[:function][:line]`; the number of
/// fields is fixed by the granularity. Colons inside paths are not supported.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProgramElement {
    file: String,
    function: Option<String>,
    line: Option<u32>,
}

impl ProgramElement {
    pub fn file(file: impl Into<String>) -> Self {
        ProgramElement { file: file.into(), function: None, line: None }
    }

    pub fn function(file: impl Into<String>, function: impl Into<String>) -> Self {
        ProgramElement { file: file.into(), function: Some(function.into()), line: None }
    }

    pub fn line(file: impl Into<String>, function: impl Into<String>, line: u32) -> Self {
        assert!(line > 0, "line numbers start at 1");
        ProgramElement { file: file.into(), function: Some(function.into()), line: Some(line) }
    }

    /// Parses the canonical form at the given granularity.
    pub fn parse(text: &str, granularity: Granularity) -> Result<Self> {
        let text = text.trim();
        let bad = |why: &str| Error::Parse(format!("malformed {granularity} element {text:?}: {why}"));
        let expected = granularity
            .field_count()
            .ok_or_else(|| bad("granularity OFF has no elements"))?;
        if text.is_empty() {
            return Err(bad("empty"));
        }
        let fields: Vec<&str> = text.split(':').collect();
        if fields.len() != expected {
            return Err(bad(&format!("expected {expected} ':'-separated fields, got {}", fields.len())));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(bad("empty field"));
        }
        let line = match fields.get(2) {
            Some(raw) => match raw.parse::<u32>() {
                Ok(n) if n > 0 => Some(n),
                _ => return Err(bad("line must be a positive integer")),
            },
            None => None,
        };
        Ok(ProgramElement {
            file: fields[0].to_string(),
            function: fields.get(1).map(|s| s.to_string()),
            line,
        })
    }

    pub fn granularity(&self) -> Granularity {
        match (&self.function, self.line) {
            (Some(_), Some(_)) => Granularity::Line,
            (Some(_), None) => Granularity::Function,
            _ => Granularity::File,
        }
    }

    pub fn file_path(&self) -> &str {
        &self.file
    }

    pub fn function_name(&self) -> Option<&str> {
        self.function.as_deref()
    }

    pub fn line_number(&self) -> Option<u32> {
        self.line
    }

    /// Projects this element onto a coarser (or equal) granularity.
    ///
    /// Returns `None` when `target` is finer than the element or `OFF`.
    pub fn coarsen(&self, target: Granularity) -> Option<ProgramElement> {
        let have = self.granularity().field_count()?;
        let want = target.field_count()?;
        if want > have {
            return None;
        }
        Some(ProgramElement {
            file: self.file.clone(),
            function: if want >= 2 { self.function.clone() } else { None },
            line: if want >= 3 { self.line } else { None },
        })
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ProgramElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file)?;
        if let Some(func) = &self.function {
            write!(f, ":{func}")?;
        }
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        Ok(())
    }
}

// Ordering follows the canonical string, which is what rankings tie-break on.
impl Ord for ProgramElement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (mut a, mut b) = ([0u8; 10], [0u8; 10]);
        self.canonical_bytes(&mut a).cmp(other.canonical_bytes(&mut b))
    }
}

impl ProgramElement {
    // Bytes of the canonical form without allocating; `buf` holds the line digits.
    fn canonical_bytes<'a>(&'a self, buf: &'a mut [u8; 10]) -> impl Iterator<Item = u8> + 'a {
        let digits: &[u8] = match self.line {
            Some(mut n) => {
                let mut i = buf.len();
                loop {
                    i -= 1;
                    buf[i] = b'0' + (n % 10) as u8;
                    n /= 10;
                    if n == 0 {
                        break;
                    }
                }
                &buf[i..]
            }
            None => &[],
        };
        let function = self.function.as_deref().map(|f| std::iter::once(b':').chain(f.bytes()));
        let line = self.line.map(|_| std::iter::once(b':').chain(digits.iter().copied()));
        self.file.bytes().chain(function.into_iter().flatten()).chain(line.into_iter().flatten())
    }
}

impl PartialOrd for ProgramElement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-test sets of covered elements. Elements are line-level when freshly
/// collected; coarsened matrices share the same representation.
pub type CoverageMatrix = BTreeMap<TestId, BTreeSet<ProgramElement>>;

/// SBFL tallies for one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumCounts {
    /// failing tests covering the element
    pub e_f: u32,
    /// passing tests covering the element
    pub e_p: u32,
    pub total_failing: u32,
    pub total_passing: u32,
}

impl SpectrumCounts {
    pub fn is_well_formed(&self) -> bool {
        self.e_f <= self.total_failing && self.e_p <= self.total_passing
    }
}

/// One patch in the on-disk pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub id: String,
    pub root: PathBuf,
    pub covering_tests: Option<BTreeSet<TestId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Plausible,
    TestFailed,
    TimedOut,
    InfraError,
}

/// Outcome of validating one patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub patch_id: String,
    pub kind: VerdictKind,
    pub culprit_test: Option<TestId>,
    pub tests_executed: u32,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ValidationVerdict {
    pub fn plausible(patch_id: impl Into<String>, tests_executed: u32, wall_ms: u64) -> Self {
        ValidationVerdict {
            patch_id: patch_id.into(),
            kind: VerdictKind::Plausible,
            culprit_test: None,
            tests_executed,
            wall_ms,
            detail: None,
        }
    }

    /// A TEST_FAILED or TIMED_OUT verdict; both always name the culprit.
    pub fn invalidated(
        patch_id: impl Into<String>,
        kind: VerdictKind,
        culprit: TestId,
        tests_executed: u32,
        wall_ms: u64,
    ) -> Self {
        assert!(matches!(kind, VerdictKind::TestFailed | VerdictKind::TimedOut));
        ValidationVerdict {
            patch_id: patch_id.into(),
            kind,
            culprit_test: Some(culprit),
            tests_executed,
            wall_ms,
            detail: None,
        }
    }

    pub fn infra_error(
        patch_id: impl Into<String>,
        culprit: Option<TestId>,
        tests_executed: u32,
        wall_ms: u64,
        detail: impl Into<String>,
    ) -> Self {
        ValidationVerdict {
            patch_id: patch_id.into(),
            kind: VerdictKind::InfraError,
            culprit_test: culprit,
            tests_executed,
            wall_ms,
            detail: Some(detail.into()),
        }
    }

    pub fn is_plausible(&self) -> bool {
        self.kind == VerdictKind::Plausible
    }

    /// Checks the culprit/kind coupling.
    pub fn is_consistent(&self) -> bool {
        match self.kind {
            VerdictKind::Plausible => self.culprit_test.is_none(),
            VerdictKind::TestFailed | VerdictKind::TimedOut => self.culprit_test.is_some(),
            VerdictKind::InfraError => true,
        }
    }
}

/// Per-test time budget parameters: `beta_ms + (1 + alpha) * tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeoutPolicy {
    pub beta_ms: u64,
    pub alpha: f64,
}

impl Default for TimeoutPolicy {
    fn default() -> Self {
        TimeoutPolicy { beta_ms: 5000, alpha: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlStrategy {
    Ochiai,
    Tarantula,
}

impl fmt::Display for FlStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlStrategy::Ochiai => "OCHIAI",
            FlStrategy::Tarantula => "TARANTULA",
        })
    }
}

/// Only `OFF` is supported; `DYNAMIC` is rejected when the config is loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallGraphOption {
    #[default]
    Off,
}

pub const DUMMY_GENERATION_PLUGIN: &str = "dummy-patch-generation-plugin";
pub const DUMMY_PRIORITIZATION_PLUGIN: &str = "dummy-patch-prioritization-plugin";

/// Resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairConfig {
    /// Directory the adapter runs in and relative paths resolve against.
    pub project_root: PathBuf,
    pub adapter_command: String,
    pub fl_option: Granularity,
    pub fl_strategy: FlStrategy,
    pub test_coverage: bool,
    pub failing_tests: Vec<TestId>,
    pub cg_option: CallGraphOption,
    pub patch_generation_plugin: String,
    /// 0 means one worker per available core.
    pub parallelism: usize,
    pub patch_prioritization_plugin: String,
    pub timeout: TimeoutPolicy,
    pub early_stop: bool,
    pub patches_dir: PathBuf,
}

impl RepairConfig {
    pub fn new(project_root: impl Into<PathBuf>, adapter_command: impl Into<String>) -> Self {
        RepairConfig {
            project_root: project_root.into(),
            adapter_command: adapter_command.into(),
            fl_option: Granularity::Off,
            fl_strategy: FlStrategy::Ochiai,
            test_coverage: false,
            failing_tests: Vec::new(),
            cg_option: CallGraphOption::Off,
            patch_generation_plugin: DUMMY_GENERATION_PLUGIN.to_string(),
            parallelism: 0,
            patch_prioritization_plugin: DUMMY_PRIORITIZATION_PLUGIN.to_string(),
            timeout: TimeoutPolicy::default(),
            early_stop: false,
            patches_dir: PathBuf::from("patches-pool"),
        }
    }

    pub fn wants_coverage(&self) -> bool {
        self.test_coverage || self.fl_option != Granularity::Off
    }

    /// Pool directory, resolved against the project root.
    pub fn pool_root(&self) -> PathBuf {
        self.project_root.join(&self.patches_dir)
    }

    /// Artifact directory (`.prf/`) under the project root.
    pub fn work_dir(&self) -> PathBuf {
        self.project_root.join(".prf")
    }

    /// Worker count after resolving `parallelism = 0`.
    pub fn workers(&self) -> usize {
        resolve_workers(self.parallelism, available_cores())
    }
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn resolve_workers(parallelism: usize, cores: usize) -> usize {
    if parallelism == 0 {
        cores.max(1)
    } else {
        parallelism
    }
}
