//! Synthetic projects driven by a table-based shell adapter.
//!
//! A generated project contains `tests.txt` (test id and sleep time, in
//! declaration order), `build/outcomes` (behaviour of each test on the
//! original program), optional `build/coverage/<test>` files, and a
//! `patches-pool/` whose patches overlay `outcomes` with their own table.
//! Tests whose behaviour is `loop` never terminate; their shell and its
//! background child record their pids in `loop-pids`.

use std::collections::BTreeMap;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "prf.json";
pub const LOOP_PIDS_FILE: &str = "loop-pids";

const ADAPTER: &str = r#"#!/bin/sh
here=$(cd "$(dirname "$0")" && pwd)
lookup() {
  while read -r k v; do
    if [ "$k" = "$2" ]; then echo "$v"; return 0; fi
  done < "$1"
  return 1
}
case "$1" in
  list-tests)
    while read -r k v; do echo "$k"; done < "$here/tests.txt"
    ;;
  run-test)
    t="$2"
    secs=$(lookup "$here/tests.txt" "$t") || { echo "unknown test $t" >&2; exit 2; }
    table="$here/build/outcomes"
    if [ -n "$PRF_PATCH_ROOT" ] && [ -f "$PRF_PATCH_ROOT/outcomes" ]; then
      table="$PRF_PATCH_ROOT/outcomes"
    fi
    b=$(lookup "$table" "$t") || b=pass
    if [ -n "$PRF_COVERAGE_FILE" ]; then
      if [ -f "$here/build/coverage/$t" ]; then
        cp "$here/build/coverage/$t" "$PRF_COVERAGE_FILE"
      else
        : > "$PRF_COVERAGE_FILE"
      fi
    fi
    if [ "$b" = loop ]; then
      sleep 3600 &
      echo "$$ $!" >> "$here/loop-pids"
      wait
      exit 0
    fi
    if [ "$secs" != 0 ]; then sleep "$secs"; fi
    case "$b" in
      pass) exit 0 ;;
      fail) exit 1 ;;
      *) echo "bad behaviour $b" >&2; exit 2 ;;
    esac
    ;;
  *)
    echo "usage: $0 list-tests | run-test <id>" >&2
    exit 2
    ;;
esac
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Pass,
    Fail,
    Loop,
}

impl Behavior {
    fn as_str(self) -> &'static str {
        match self {
            Behavior::Pass => "pass",
            Behavior::Fail => "fail",
            Behavior::Loop => "loop",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureTest {
    pub id: String,
    pub sleep_ms: u64,
    pub behavior: Behavior,
    /// Line-level elements written to the coverage side-file.
    pub coverage: Vec<String>,
}

impl FixtureTest {
    pub fn new(id: impl Into<String>, sleep_ms: u64, behavior: Behavior) -> Self {
        FixtureTest { id: id.into(), sleep_ms, behavior, coverage: Vec::new() }
    }

    pub fn covering(mut self, elements: &[&str]) -> Self {
        self.coverage = elements.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Clone)]
pub struct FixturePatch {
    pub id: String,
    /// Behaviour changes relative to the original program.
    pub overrides: BTreeMap<String, Behavior>,
    pub covering: Option<Vec<String>>,
}

impl FixturePatch {
    pub fn new(id: impl Into<String>) -> Self {
        FixturePatch { id: id.into(), overrides: BTreeMap::new(), covering: None }
    }

    pub fn with(mut self, test: &str, behavior: Behavior) -> Self {
        self.overrides.insert(test.to_string(), behavior);
        self
    }

    pub fn manifest(mut self, tests: &[&str]) -> Self {
        self.covering = Some(tests.iter().map(|s| s.to_string()).collect());
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticProject {
    pub tests: Vec<FixtureTest>,
    pub patches: Vec<FixturePatch>,
    /// Extra configuration keys; `adapterCommand` is always set.
    pub config: Map<String, Value>,
}

impl SyntheticProject {
    pub fn config_value(mut self, key: &str, value: Value) -> Self {
        self.config.insert(key.to_string(), value);
        self
    }

    /// Writes the project under `root` and returns the config file path.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e| Error::io(p, e)
        };
        let build = root.join("build");
        let coverage_dir = build.join("coverage");
        fs::create_dir_all(&coverage_dir).map_err(io(&coverage_dir))?;

        let adapter = root.join("adapter.sh");
        fs::write(&adapter, ADAPTER).map_err(io(&adapter))?;
        fs::set_permissions(&adapter, fs::Permissions::from_mode(0o755)).map_err(io(&adapter))?;

        let tests: String = self
            .tests
            .iter()
            .map(|t| format!("{} {}\n", t.id, seconds(t.sleep_ms)))
            .collect();
        let tests_file = root.join("tests.txt");
        fs::write(&tests_file, tests).map_err(io(&tests_file))?;

        let original: BTreeMap<&str, Behavior> =
            self.tests.iter().map(|t| (t.id.as_str(), t.behavior)).collect();
        let outcomes = build.join("outcomes");
        fs::write(&outcomes, outcome_table(&self.tests, &original)).map_err(io(&outcomes))?;
        for t in self.tests.iter().filter(|t| !t.coverage.is_empty()) {
            let path = coverage_dir.join(&t.id);
            fs::write(&path, t.coverage.join("\n") + "\n").map_err(io(&path))?;
        }

        let pool = root.join("patches-pool");
        fs::create_dir_all(&pool).map_err(io(&pool))?;
        for patch in &self.patches {
            let dir = pool.join(&patch.id);
            fs::create_dir_all(&dir).map_err(io(&dir))?;
            let mut table = original.clone();
            for (test, b) in &patch.overrides {
                table.insert(test.as_str(), *b);
            }
            let path = dir.join("outcomes");
            fs::write(&path, outcome_table(&self.tests, &table)).map_err(io(&path))?;
            if let Some(covering) = &patch.covering {
                let path = dir.join(crate::pool::MANIFEST_FILE);
                fs::write(&path, covering.join("\n") + "\n").map_err(io(&path))?;
            }
        }

        let mut config = self.config.clone();
        config.insert("adapterCommand".into(), json!("./adapter.sh"));
        let path = root.join(CONFIG_FILE);
        let text = serde_json::to_string_pretty(&Value::Object(config)).expect("json map");
        fs::write(&path, text).map_err(io(&path))?;
        Ok(path)
    }

    /// Eight tests with one originally failing (`t5`) and six patches of which
    /// only `p2-correct` fixes the bug without breaking anything. `p4` loops
    /// forever on `t5`. The time budget constant is lowered to one second.
    pub fn repair_fixture() -> Self {
        let sleeps = [40, 25, 60, 30, 50, 20, 35, 45];
        let tests = sleeps
            .iter()
            .enumerate()
            .map(|(i, &ms)| {
                let id = format!("t{}", i + 1);
                let behavior = if i == 4 { Behavior::Fail } else { Behavior::Pass };
                let mut cov = vec!["src/calc.c:main:3".to_string()];
                cov.push(match i {
                    4 => "src/calc.c:sub:20".to_string(),
                    i if i % 2 == 0 => "src/calc.c:add:10".to_string(),
                    _ => "src/util.c:fmt:7".to_string(),
                });
                if i == 4 || i == 1 {
                    cov.push("src/calc.c:sub:21".to_string());
                }
                FixtureTest { id, sleep_ms: ms, behavior, coverage: cov }
            })
            .collect();
        let patches = vec![
            FixturePatch::new("p1-wrong-constant").manifest(&["t5", "t2"]),
            FixturePatch::new("p2-correct").with("t5", Behavior::Pass).manifest(&["t5", "t3", "t4"]),
            FixturePatch::new("p3-breaks-t1").with("t5", Behavior::Pass).with("t1", Behavior::Fail),
            FixturePatch::new("p4-infinite-loop").with("t5", Behavior::Loop).manifest(&["t5"]),
            FixturePatch::new("p5-overfit")
                .with("t5", Behavior::Pass)
                .with("t7", Behavior::Fail)
                .manifest(&["t5", "t7"]),
            FixturePatch::new("p6-no-op"),
        ];
        SyntheticProject { tests, patches, config: Map::new() }
            .config_value("timeoutConstant", json!(1000))
    }

    /// 32 single-test patches over a `heavy` (400 ms) and a `light` (172 ms)
    /// test, about 200 ms per patch on average. Every eighth patch is heavy so
    /// round-robin seeding leaves one worker overloaded and stealing kicks in.
    /// Patches whose index is a multiple of three are plausible.
    pub fn parallel_workload() -> Self {
        let tests = vec![
            FixtureTest::new("heavy", 400, Behavior::Pass),
            FixtureTest::new("light", 172, Behavior::Pass),
        ];
        let patches = (0..32)
            .map(|i| {
                let test = if i % 8 == 0 { "heavy" } else { "light" };
                let b = if i % 3 == 0 { Behavior::Pass } else { Behavior::Fail };
                FixturePatch::new(format!("w{i:02}")).with(test, b).manifest(&[test])
            })
            .collect();
        SyntheticProject { tests, patches, config: Map::new() }
    }

    /// Twenty instantaneous tests, the last-declared one originally failing,
    /// and ten patches that leave it failing. Each manifest names the failing
    /// test plus four tests declared before it.
    pub fn reordering_workload() -> Self {
        let mut tests: Vec<FixtureTest> =
            (1..=19).map(|i| FixtureTest::new(format!("t{i:02}"), 0, Behavior::Pass)).collect();
        tests.push(FixtureTest::new("t20", 0, Behavior::Fail));
        let patches = (0..10)
            .map(|i| {
                let others: Vec<String> = (0..4).map(|j| format!("t{:02}", (i + j * 3) % 19 + 1)).collect();
                let mut manifest: Vec<&str> = others.iter().map(String::as_str).collect();
                manifest.push("t20");
                FixturePatch::new(format!("r{i:02}")).manifest(&manifest)
            })
            .collect();
        SyntheticProject { tests, patches, config: Map::new() }
    }

    /// Twenty instantaneous passing tests and ten patches. With `manifests`,
    /// each patch names two tests. Odd patches break one test.
    pub fn selection_workload(manifests: bool) -> Self {
        let tests = (1..=20).map(|i| FixtureTest::new(format!("t{i:02}"), 0, Behavior::Pass)).collect();
        let patches = (0..10)
            .map(|i| {
                let a = format!("t{:02}", i + 1);
                let b = format!("t{:02}", i + 11);
                let mut p = FixturePatch::new(format!("s{i:02}"));
                if i % 2 == 1 {
                    p = p.with(&b, Behavior::Fail);
                }
                if manifests {
                    p = p.manifest(&[&a, &b]);
                }
                p
            })
            .collect();
        SyntheticProject { tests, patches, config: Map::new() }
    }
}

fn seconds(ms: u64) -> String {
    if ms == 0 {
        "0".to_string()
    } else {
        format!("{}.{:03}", ms / 1000, ms % 1000)
    }
}

fn outcome_table(tests: &[FixtureTest], table: &BTreeMap<&str, Behavior>) -> String {
    tests
        .iter()
        .map(|t| format!("{} {}\n", t.id, table.get(t.id.as_str()).copied().unwrap_or(Behavior::Pass).as_str()))
        .collect()
}

/// Pids recorded by looping tests (shell and background child).
pub fn loop_pids(project_root: &Path) -> Vec<i32> {
    fs::read_to_string(project_root.join(LOOP_PIDS_FILE))
        .unwrap_or_default()
        .split_whitespace()
        .filter_map(|p| p.parse().ok())
        .collect()
}

/// True when `pid` no longer exists or is a zombie awaiting its reaper.
pub fn process_gone(pid: i32) -> bool {
    match fs::read_to_string(format!("/proc/{pid}/stat")) {
        Err(_) => true,
        Ok(stat) => stat
            .rsplit_once(')')
            .and_then(|(_, rest)| rest.split_whitespace().next())
            .is_none_or(|state| state == "Z" || state == "X"),
    }
}
