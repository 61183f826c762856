//! Patch pools and patch-generation plugins.
//!
//! A pool is a directory with one sub-directory per patch; the sub-directory
//! name is the patch id. A patch may carry `covering-tests.txt` naming the
//! tests that exercise the patched location, one per line.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PatchEntry, RepairConfig, TestId, DUMMY_GENERATION_PLUGIN};

pub const MANIFEST_FILE: &str = "covering-tests.txt";
pub const PLUGIN_CONTEXT_FILE: &str = "plugin-context.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchPool {
    pub root: PathBuf,
    /// Sorted by id.
    pub patches: Vec<PatchEntry>,
}

impl PatchPool {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PatchEntry> {
        self.patches.iter().find(|p| p.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.patches.iter().position(|p| p.id == id)
    }
}

/// Everything a generation plugin gets to see, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PluginContext {
    pub source_dir: PathBuf,
    pub test_source_dir: PathBuf,
    pub binaries_dir: PathBuf,
    pub ranking_file: Option<PathBuf>,
    pub coverage_file: Option<PathBuf>,
    pub pool_root: PathBuf,
}

impl PluginContext {
    /// Conventional layout: `src/`, `tests/` and `build/` under the project root.
    pub fn for_project(config: &RepairConfig) -> Self {
        let root = &config.project_root;
        PluginContext {
            source_dir: root.join("src"),
            test_source_dir: root.join("tests"),
            binaries_dir: root.join("build"),
            ranking_file: None,
            coverage_file: None,
            pool_root: config.pool_root(),
        }
    }
}

pub fn load_pool(pool_root: &Path, known_tests: &BTreeSet<TestId>) -> Result<PatchPool> {
    let read_err = |e: std::io::Error| Error::PoolLoad(format!("cannot read {}: {e}", pool_root.display()));
    let mut dirs = Vec::new();
    for entry in fs::read_dir(pool_root).map_err(read_err)? {
        let entry = entry.map_err(read_err)?;
        if entry.file_type().map_err(read_err)?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();

    let mut patches = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::PoolLoad(format!("non UTF-8 patch directory {}", dir.display())))?
            .to_string();
        patches.push(load_patch(id, dir, known_tests)?);
    }
    Ok(PatchPool { root: pool_root.to_path_buf(), patches })
}

fn load_patch(id: String, root: PathBuf, known_tests: &BTreeSet<TestId>) -> Result<PatchEntry> {
    let read_err = |e: std::io::Error| Error::PoolLoad(format!("patch {id}: cannot read {}: {e}", root.display()));
    let mut has_artifact = false;
    for entry in fs::read_dir(&root).map_err(read_err)? {
        let entry = entry.map_err(read_err)?;
        if entry.file_name() != MANIFEST_FILE && entry.path().is_file() {
            has_artifact = true;
            break;
        }
        if entry.path().is_dir() && dir_has_file(&entry.path()) {
            has_artifact = true;
            break;
        }
    }
    if !has_artifact {
        return Err(Error::PoolLoad(format!("patch {id} contains no patch artifact")));
    }

    let manifest = root.join(MANIFEST_FILE);
    let covering_tests = if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(read_err)?;
        let mut tests = BTreeSet::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let test = TestId::new(line)?;
            if !known_tests.contains(&test) {
                return Err(Error::PoolLoad(format!("patch {id}: manifest names unknown test {test}")));
            }
            tests.insert(test);
        }
        if tests.is_empty() {
            return Err(Error::PoolLoad(format!("patch {id}: covering-tests manifest is empty")));
        }
        Some(tests)
    } else {
        None
    };
    Ok(PatchEntry { id, root, covering_tests, metadata: None })
}

fn dir_has_file(dir: &Path) -> bool {
    walk(dir).is_some_and(|found| found)
}

fn walk(dir: &Path) -> Option<bool> {
    for entry in fs::read_dir(dir).ok()? {
        let path = entry.ok()?.path();
        if path.is_file() || (path.is_dir() && walk(&path)?) {
            return Some(true);
        }
    }
    Some(false)
}

/// Runs the configured generation plugin, then loads the pool it produced.
///
/// The built-in dummy plugin generates nothing and just scans the pool
/// directory. An external plugin is executed with the path of the serialized
/// context as its only argument and must exit 0.
pub fn run_generation_plugin(
    config: &RepairConfig,
    ctx: &PluginContext,
    known_tests: &BTreeSet<TestId>,
) -> Result<PatchPool> {
    let plugin = config.patch_generation_plugin.as_str();
    if plugin != DUMMY_GENERATION_PLUGIN {
        fs::create_dir_all(&ctx.pool_root).map_err(|e| Error::io(&ctx.pool_root, e))?;
        let work = config.work_dir();
        fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;
        let ctx_path = work.join(PLUGIN_CONTEXT_FILE);
        let text = serde_json::to_string_pretty(ctx).map_err(|e| Error::json(&ctx_path, e))?;
        fs::write(&ctx_path, text).map_err(|e| Error::io(&ctx_path, e))?;

        let program = resolve_plugin(plugin, &config.project_root);
        let out = Command::new(&program)
            .arg(&ctx_path)
            .current_dir(&config.project_root)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| Error::Generation {
                message: format!("cannot spawn plugin {}: {e}", program.display()),
                output: String::new(),
            })?;
        if !out.status.success() {
            return Err(Error::Generation {
                message: format!("plugin {plugin} exited with {}", out.status),
                output: format!(
                    "{}{}",
                    String::from_utf8_lossy(&out.stdout),
                    String::from_utf8_lossy(&out.stderr)
                ),
            });
        }
    }
    if !ctx.pool_root.is_dir() {
        return Err(Error::Generation {
            message: format!("no patches generated: {} does not exist", ctx.pool_root.display()),
            output: String::new(),
        });
    }
    let pool = load_pool(&ctx.pool_root, known_tests)?;
    if pool.is_empty() {
        return Err(Error::Generation {
            message: format!("no patches generated in {}", ctx.pool_root.display()),
            output: String::new(),
        });
    }
    Ok(pool)
}

/// Plugin names that are not built in are executable paths, relative ones
/// resolved against the project root.
pub(crate) fn resolve_plugin(name: &str, project_root: &Path) -> PathBuf {
    let path = PathBuf::from(name);
    if path.is_relative() && name.contains('/') {
        project_root.join(path)
    } else {
        path
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn id(s: &str) -> TestId {
        TestId::new(s).unwrap()
    }

    fn known() -> BTreeSet<TestId> {
        ["t1", "t2", "t3", "t4"].map(id).into()
    }

    fn patch(root: &Path, name: &str, manifest: Option<&str>) {
        let dir = root.join(name);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("Fix.class"), b"\xca\xfe").unwrap();
        if let Some(m) = manifest {
            fs::write(dir.join(MANIFEST_FILE), m).unwrap();
        }
    }

    #[test]
    fn loads_entries_with_and_without_manifest() {
        let dir = tempfile::tempdir().unwrap();
        patch(dir.path(), "p2", None);
        patch(dir.path(), "p1", Some("t1\n\nt3\n"));
        fs::write(dir.path().join("stray.txt"), "ignored").unwrap();
        let pool = load_pool(dir.path(), &known()).unwrap();
        let ids: Vec<&str> = pool.patches.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2"]);
        assert_eq!(pool.patches[0].covering_tests, Some([id("t1"), id("t3")].into()));
        assert_eq!(pool.patches[1].covering_tests, None);
        for p in &pool.patches {
            assert_eq!(p.root.file_name().unwrap().to_str().unwrap(), p.id);
        }
        assert_eq!(load_pool(dir.path(), &known()).unwrap(), pool);
    }

    #[test]
    fn unknown_manifest_test_rejected() {
        let dir = tempfile::tempdir().unwrap();
        patch(dir.path(), "p1", Some("t9\n"));
        let err = load_pool(dir.path(), &known()).unwrap_err().to_string();
        assert!(err.contains("p1") && err.contains("t9"), "{err}");
    }

    #[test]
    fn manifest_only_directory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p1");
        fs::create_dir(&p).unwrap();
        fs::write(p.join(MANIFEST_FILE), "t1\n").unwrap();
        assert!(load_pool(dir.path(), &known()).is_err());
        fs::create_dir(p.join("empty")).unwrap();
        assert!(load_pool(dir.path(), &known()).is_err());
        fs::write(p.join("empty/A.class"), "x").unwrap();
        assert!(load_pool(dir.path(), &known()).is_ok());
    }

    #[test]
    fn empty_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        patch(dir.path(), "p1", Some("\n"));
        let err = load_pool(dir.path(), &known()).unwrap_err().to_string();
        assert!(err.contains("empty"), "{err}");
    }

    #[test]
    fn missing_pool_root_is_load_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_pool(&dir.path().join("nope"), &known()), Err(Error::PoolLoad(_))));
    }

    fn config_in(root: &Path, plugin: &str) -> (RepairConfig, PluginContext) {
        let mut c = RepairConfig::new(root, "true");
        c.patch_generation_plugin = plugin.to_string();
        let ctx = PluginContext::for_project(&c);
        (c, ctx)
    }

    fn plugin_script(root: &Path, body: &str) {
        let path = root.join("gen.sh");
        fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    }

    #[test]
    fn dummy_plugin_scans_existing_pool() {
        let dir = tempfile::tempdir().unwrap();
        for p in ["a", "b", "c"] {
            patch(&dir.path().join("patches-pool"), p, None);
        }
        let (c, ctx) = config_in(dir.path(), DUMMY_GENERATION_PLUGIN);
        assert_eq!(run_generation_plugin(&c, &ctx, &known()).unwrap().len(), 3);
    }

    #[test]
    fn external_plugin_populates_pool() {
        let dir = tempfile::tempdir().unwrap();
        plugin_script(
            dir.path(),
            r#"pool=$(sed -n 's/.*"poolRoot": "\(.*\)".*/\1/p' "$1")
mkdir -p "$pool/gen1" && echo x > "$pool/gen1/Fix.class""#,
        );
        let (c, ctx) = config_in(dir.path(), "./gen.sh");
        let pool = run_generation_plugin(&c, &ctx, &known()).unwrap();
        assert_eq!(pool.patches[0].id, "gen1");
        assert!(dir.path().join(".prf").join(PLUGIN_CONTEXT_FILE).is_file());
    }

    #[test]
    fn failing_plugin_is_generation_error() {
        let dir = tempfile::tempdir().unwrap();
        plugin_script(dir.path(), "echo nope >&2; exit 2");
        let (c, ctx) = config_in(dir.path(), "./gen.sh");
        match run_generation_plugin(&c, &ctx, &known()).unwrap_err() {
            Error::Generation { output, .. } => assert!(output.contains("nope")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_pool_is_generation_error() {
        let dir = tempfile::tempdir().unwrap();
        plugin_script(dir.path(), "exit 0");
        let (c, ctx) = config_in(dir.path(), "./gen.sh");
        let err = run_generation_plugin(&c, &ctx, &known()).unwrap_err();
        assert!(err.to_string().contains("no patches generated"), "{err}");
    }
}
