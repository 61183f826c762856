//! JSON configuration loading.
//!
//! Keys mirror the option names of the original POM-based tool. Absent keys
//! take their defaults; unknown keys are an error. The project root is the
//! directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    CallGraphOption, FlStrategy, Granularity, RepairConfig, TestId, TimeoutPolicy,
};

pub const CONFIG_KEYS: [&str; 13] = [
    "adapterCommand",
    "flOptions",
    "flStrategy",
    "testCoverage",
    "failingTests",
    "cgOptions",
    "patchGenerationPlugin",
    "parallelism",
    "patchPrioritizationPlugin",
    "timeoutConstant",
    "timeoutPercent",
    "earlyStop",
    "patchesDir",
];

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawConfig {
    adapter_command: Option<String>,
    fl_options: Option<String>,
    fl_strategy: Option<FlStrategy>,
    test_coverage: Option<bool>,
    failing_tests: Option<Vec<TestId>>,
    cg_options: Option<String>,
    patch_generation_plugin: Option<String>,
    parallelism: Option<usize>,
    patch_prioritization_plugin: Option<String>,
    timeout_constant: Option<u64>,
    timeout_percent: Option<f64>,
    early_stop: Option<bool>,
    patches_dir: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<RepairConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let root = fs::canonicalize(root).map_err(|e| Error::io(root, e))?;
    parse_config(&text, &root)
}

/// Parses configuration text for a project rooted at `project_root`.
pub fn parse_config(text: &str, project_root: &Path) -> Result<RepairConfig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(Error::Config("configuration must be a JSON object".into()));
    };
    check_keys(&map)?;
    let raw: RawConfig = serde_json::from_value(Value::Object(map))
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut config = RepairConfig::new(project_root, raw.adapter_command.unwrap_or_default());
    if let Some(fl) = raw.fl_options {
        config.fl_option = Granularity::parse(&fl)?;
    }
    if let Some(strategy) = raw.fl_strategy {
        config.fl_strategy = strategy;
    }
    if let Some(cov) = raw.test_coverage {
        config.test_coverage = cov;
    }
    if let Some(failing) = raw.failing_tests {
        config.failing_tests = failing;
    }
    match raw.cg_options.as_deref() {
        None | Some("OFF") => config.cg_option = CallGraphOption::Off,
        Some("DYNAMIC") => {
            return Err(Error::Config(
                "dynamic call graph construction is out of scope (cgOptions=DYNAMIC)".into(),
            ))
        }
        Some(other) => return Err(Error::Config(format!("unknown cgOptions value {other:?}"))),
    }
    if let Some(plugin) = raw.patch_generation_plugin {
        config.patch_generation_plugin = plugin;
    }
    if let Some(k) = raw.parallelism {
        config.parallelism = k;
    }
    if let Some(plugin) = raw.patch_prioritization_plugin {
        config.patch_prioritization_plugin = plugin;
    }
    let mut timeout = TimeoutPolicy::default();
    if let Some(beta) = raw.timeout_constant {
        timeout.beta_ms = beta;
    }
    if let Some(alpha) = raw.timeout_percent {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Config(format!("timeoutPercent must be non-negative, got {alpha}")));
        }
        timeout.alpha = alpha;
    }
    config.timeout = timeout;
    if let Some(stop) = raw.early_stop {
        config.early_stop = stop;
    }
    if let Some(dir) = raw.patches_dir {
        config.patches_dir = dir;
    }
    Ok(config)
}

fn check_keys(map: &Map<String, Value>) -> Result<()> {
    let unknown: Vec<&str> = map
        .keys()
        .map(String::as_str)
        .filter(|k| !CONFIG_KEYS.contains(k))
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown configuration keys: {}", unknown.join(", "))))
    }
}
