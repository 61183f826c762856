//! Fix reports: the plausible patches, optionally reordered or narrowed by a
//! prioritization plugin.
//!
//! An external plugin is an executable called with the path of a JSON file
//! listing the candidates; it prints the patch ids to keep, best first, one
//! per line, and exits 0. It may drop candidates but never add any.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RepairConfig, VerdictKind, DUMMY_PRIORITIZATION_PLUGIN};
use crate::pool::{resolve_plugin, PatchPool};
use crate::validator::ValidationReport;

pub const FIX_REPORT_FILE: &str = "fix-report.json";
pub const CANDIDATES_FILE: &str = "prioritization-candidates.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub kind: VerdictKind,
    pub tests_executed: u32,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub rank: usize,
    pub patch_id: String,
    pub verdict: VerdictSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixReport {
    pub entries: Vec<ReportEntry>,
    pub plugin_used: String,
    pub summary: String,
}

impl FixReport {
    pub fn patch_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.patch_id.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Human-readable listing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.summary);
        for e in &self.entries {
            let _ = writeln!(out, "{:>3}. {} ({} tests)", e.rank, e.patch_id, e.verdict.tests_executed);
        }
        out
    }
}

#[derive(Debug, Serialize)]
struct Candidate<'a> {
    patch_id: &'a str,
    root: &'a Path,
    tests_executed: u32,
    wall_ms: u64,
}

pub fn generate_report(report: &ValidationReport, pool: &PatchPool, config: &RepairConfig) -> Result<FixReport> {
    // Pool order is the default order.
    let plausible: Vec<&str> = pool
        .patches
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| report.verdicts.get(*id).is_some_and(|v| v.kind == VerdictKind::Plausible))
        .collect();
    let plugin = config.patch_prioritization_plugin.as_str();
    let ordered: Vec<String> = if plausible.is_empty() || plugin == DUMMY_PRIORITIZATION_PLUGIN {
        plausible.iter().map(|s| s.to_string()).collect()
    } else {
        run_prioritization_plugin(plugin, &plausible, report, pool, config)?
    };

    let entries = ordered
        .into_iter()
        .enumerate()
        .map(|(i, patch_id)| {
            let v = &report.verdicts[&patch_id];
            ReportEntry {
                rank: i + 1,
                verdict: VerdictSummary { kind: v.kind, tests_executed: v.tests_executed, wall_ms: v.wall_ms },
                patch_id,
            }
        })
        .collect::<Vec<_>>();
    let summary = if entries.is_empty() {
        format!("no plausible patch among {} validated", report.verdicts.len())
    } else {
        format!("{} plausible patch(es) among {} validated", entries.len(), report.verdicts.len())
    };
    Ok(FixReport { entries, plugin_used: plugin.to_string(), summary })
}

fn run_prioritization_plugin(
    plugin: &str,
    plausible: &[&str],
    report: &ValidationReport,
    pool: &PatchPool,
    config: &RepairConfig,
) -> Result<Vec<String>> {
    let candidates: Vec<Candidate<'_>> = plausible
        .iter()
        .map(|id| {
            let v = &report.verdicts[*id];
            let root = pool.get(id).map(|p| p.root.as_path()).unwrap_or(Path::new(""));
            Candidate { patch_id: id, root, tests_executed: v.tests_executed, wall_ms: v.wall_ms }
        })
        .collect();
    let work = config.work_dir();
    fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;
    let path: PathBuf = work.join(CANDIDATES_FILE);
    let text = serde_json::to_string_pretty(&serde_json::json!({ "candidates": candidates }))
        .map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let program = resolve_plugin(plugin, &config.project_root);
    let out = Command::new(&program)
        .arg(&path)
        .current_dir(&config.project_root)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| Error::Report(format!("cannot spawn prioritization plugin {}: {e}", program.display())))?;
    if !out.status.success() {
        return Err(Error::Report(format!(
            "prioritization plugin exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let allowed: HashSet<&str> = plausible.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut ordered = Vec::new();
    for line in String::from_utf8_lossy(&out.stdout).lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !allowed.contains(line) {
            return Err(Error::Report(format!("prioritization plugin returned unknown patch id {line:?}")));
        }
        if !seen.insert(line.to_string()) {
            return Err(Error::Report(format!("prioritization plugin returned {line:?} twice")));
        }
        ordered.push(line.to_string());
    }
    Ok(ordered)
}
