//! Generate-and-validate program repair orchestration.
//!
//! The pipeline profiles a project's test suite through an external adapter,
//! optionally ranks program elements by spectrum-based suspiciousness, loads
//! a pool of candidate patches produced by a generation plugin, validates
//! every patch in fresh processes (with test selection, failing-first
//! ordering, per-test budgets and work-stealing parallelism) and writes a
//! report of the plausible patches.

pub mod adapter;
pub mod bench;
pub mod config;
pub mod error;
pub mod fixture;
pub mod localization;
pub mod model;
pub mod pipeline;
pub mod pool;
pub mod profiler;
pub mod report;
pub mod validator;

pub use adapter::{Adapter, Outcome, RunOptions, TestExecution};
pub use config::load_config;
pub use error::{Error, Result};
pub use localization::{localize, ochiai, tarantula, SuspiciousnessRanking};
pub use model::{
    CoverageMatrix, FlStrategy, Granularity, PatchEntry, ProgramElement, RepairConfig, SpectrumCounts,
    TestId, TestRecord, TestStatus, TimeoutPolicy, ValidationVerdict, VerdictKind,
};
pub use pool::{load_pool, PatchPool, PluginContext};
pub use profiler::{build_spectrum, coarsen_coverage, profile_project, Profile};
pub use report::{generate_report, FixReport};
pub use validator::{compute_timeout, order_tests, select_tests, validate_pool, ValidationReport};
