//! Subprocess protocol for listing and running a project's tests.
//!
//! The adapter is an executable invoked as `<adapter> list-tests` (test ids on
//! stdout, one per line) or `<adapter> run-test <id>`. Exit status 0 means
//! pass, 1 fail, anything else an adapter error. Two environment variables are
//! passed to `run-test`:
//!
//! * `PRF_PATCH_ROOT`: patch overlay directory, empty for the original program.
//! * `PRF_COVERAGE_FILE`: set only when coverage is wanted; the adapter writes
//!   one line-level element (`file:function:line`) per covered line.
//!
//! Every `run-test` call is a fresh process placed in its own process group,
//! and the whole group is killed once the call is over (or its budget runs out).

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, File};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Granularity, ProgramElement, TestId};

pub const ENV_PATCH_ROOT: &str = "PRF_PATCH_ROOT";
pub const ENV_COVERAGE_FILE: &str = "PRF_COVERAGE_FILE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Passed,
    Failed,
    TimedOut,
    AdapterError,
}

/// Result of one `run-test` invocation.
#[derive(Debug, Clone)]
pub struct TestExecution {
    pub test: TestId,
    pub outcome: Outcome,
    pub duration_ms: u64,
    pub covered: Option<BTreeSet<ProgramElement>>,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    /// Why the run was classified ADAPTER_ERROR.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    pub patch_root: Option<&'a Path>,
    pub budget_ms: Option<u64>,
    pub want_coverage: bool,
}

#[derive(Debug, Clone)]
pub struct Adapter {
    program: PathBuf,
    args: Vec<String>,
    project_root: PathBuf,
}

impl Adapter {
    /// Splits `command` shell-style; a relative program path containing `/`
    /// is resolved against `project_root`.
    pub fn new(command: &str, project_root: &Path) -> Result<Self> {
        let words = shlex::split(command)
            .ok_or_else(|| Error::Config(format!("cannot parse adapter command {command:?}")))?;
        let mut words = words.into_iter();
        let program = words
            .next()
            .ok_or_else(|| Error::Config("adapterCommand is empty".into()))?;
        let program = resolve_program(&program, project_root);
        Ok(Adapter { program, args: words.collect(), project_root: project_root.to_path_buf() })
    }

    pub fn project_root(&self) -> &Path {
        &self.project_root
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).current_dir(&self.project_root);
        cmd
    }

    /// Runs `list-tests`; order is preserved and duplicates are rejected.
    pub fn discover_tests(&self) -> Result<Vec<TestId>> {
        let out = self
            .command()
            .arg("list-tests")
            .env_remove(ENV_PATCH_ROOT)
            .env_remove(ENV_COVERAGE_FILE)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| Error::Adapter {
                message: format!("cannot spawn {}: {e}", self.program.display()),
                output: String::new(),
            })?;
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        let captured = || format!("{stdout}{}", String::from_utf8_lossy(&out.stderr));
        if !out.status.success() {
            return Err(Error::Adapter {
                message: format!("list-tests exited with {}", out.status),
                output: captured(),
            });
        }
        let mut seen = HashSet::new();
        let mut tests = Vec::new();
        for line in stdout.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let id = TestId::new(line)?;
            if !seen.insert(id.clone()) {
                return Err(Error::Adapter {
                    message: format!("duplicate test id {id}"),
                    output: captured(),
                });
            }
            tests.push(id);
        }
        Ok(tests)
    }

    /// Runs one test in a fresh process. `scratch` must be private to the
    /// caller; it receives the coverage side-file and captured output.
    pub fn run_test(&self, test: &TestId, opts: &RunOptions<'_>, scratch: &Path) -> TestExecution {
        let mut exec = TestExecution {
            test: test.clone(),
            outcome: Outcome::AdapterError,
            duration_ms: 0,
            covered: None,
            exit_code: None,
            stdout: String::new(),
            stderr: String::new(),
            detail: None,
        };
        if let Err(e) = self.run_into(&mut exec, opts, scratch) {
            exec.outcome = Outcome::AdapterError;
            exec.detail = Some(e.to_string());
        }
        exec
    }

    fn run_into(&self, exec: &mut TestExecution, opts: &RunOptions<'_>, scratch: &Path) -> Result<()> {
        fs::create_dir_all(scratch).map_err(|e| Error::io(scratch, e))?;
        let stdout_path = scratch.join("stdout.txt");
        let stderr_path = scratch.join("stderr.txt");
        let coverage_path = scratch.join("coverage.txt");
        let _ = fs::remove_file(&coverage_path);

        let mut cmd = self.command();
        cmd.arg("run-test").arg(exec.test.as_str());
        match opts.patch_root {
            Some(root) => cmd.env(ENV_PATCH_ROOT, root),
            None => cmd.env(ENV_PATCH_ROOT, ""),
        };
        if opts.want_coverage {
            cmd.env(ENV_COVERAGE_FILE, &coverage_path);
        } else {
            cmd.env_remove(ENV_COVERAGE_FILE);
        }
        let stdout = File::create(&stdout_path).map_err(|e| Error::io(&stdout_path, e))?;
        let stderr = File::create(&stderr_path).map_err(|e| Error::io(&stderr_path, e))?;
        cmd.stdin(Stdio::null()).stdout(stdout).stderr(stderr).process_group(0);

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| Error::Adapter {
            message: format!("cannot spawn {}: {e}", self.program.display()),
            output: String::new(),
        })?;
        let finished = wait_with_budget(&mut child, start, opts.budget_ms);
        let elapsed = start.elapsed().as_millis() as u64;
        exec.stdout = fs::read_to_string(&stdout_path).unwrap_or_default();
        exec.stderr = fs::read_to_string(&stderr_path).unwrap_or_default();

        let status = match finished? {
            Some(status) => status,
            None => {
                exec.outcome = Outcome::TimedOut;
                exec.duration_ms = elapsed.max(opts.budget_ms.unwrap_or(0));
                return Ok(());
            }
        };
        exec.duration_ms = elapsed;
        exec.exit_code = status.code();
        exec.outcome = match status.code() {
            Some(0) => Outcome::Passed,
            Some(1) => Outcome::Failed,
            _ => {
                exec.detail = Some(format!("run-test {} exited with {status}", exec.test));
                return Ok(());
            }
        };
        if opts.want_coverage {
            match read_coverage(&coverage_path) {
                Ok(covered) => exec.covered = Some(covered),
                Err(e) => {
                    exec.outcome = Outcome::AdapterError;
                    exec.detail = Some(e.to_string());
                }
            }
        }
        Ok(())
    }
}

fn resolve_program(program: &str, project_root: &Path) -> PathBuf {
    let path = PathBuf::from(program);
    if path.is_relative() && program.contains('/') {
        project_root.join(path)
    } else {
        path
    }
}

/// Parses a coverage side-file; a missing file means nothing was covered.
pub fn read_coverage(path: &Path) -> Result<BTreeSet<ProgramElement>> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            ProgramElement::parse(l, Granularity::Line).map_err(|e| Error::Adapter {
                message: format!("unparsable coverage file {}: {e}", path.display()),
                output: String::new(),
            })
        })
        .collect()
}

/// Waits for `child` to exit. Returns `Ok(None)` when the budget ran out.
/// Either way the child's process group is killed before the child is reaped,
/// so no descendant outlives the call and the group id cannot be recycled
/// underneath us.
fn wait_with_budget(
    child: &mut Child,
    start: Instant,
    budget_ms: Option<u64>,
) -> Result<Option<std::process::ExitStatus>> {
    let pid = child.id() as libc::pid_t;
    let deadline = budget_ms.map(|b| start + Duration::from_millis(b));
    let mut pause = Duration::from_micros(500);
    let timed_out = loop {
        match exited_without_reaping(pid) {
            Ok(true) => break false,
            Ok(false) => {}
            Err(e) => {
                kill_group(pid);
                let _ = child.wait();
                return Err(Error::Adapter { message: format!("waitid failed: {e}"), output: String::new() });
            }
        }
        let now = Instant::now();
        if let Some(deadline) = deadline {
            if now >= deadline {
                break true;
            }
            pause = pause.min(deadline - now);
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(5));
    };
    kill_group(pid);
    let status = child
        .wait()
        .map_err(|e| Error::Adapter { message: format!("wait failed: {e}"), output: String::new() })?;
    Ok(if timed_out { None } else { Some(status) })
}

fn exited_without_reaping(pid: libc::pid_t) -> std::io::Result<bool> {
    // SAFETY: zeroed siginfo_t is a valid out-parameter for waitid.
    let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
    let rc = unsafe {
        libc::waitid(
            libc::P_PID,
            pid as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOHANG | libc::WNOWAIT,
        )
    };
    if rc != 0 {
        let err = std::io::Error::last_os_error();
        if err.kind() == std::io::ErrorKind::Interrupted {
            return Ok(false);
        }
        return Err(err);
    }
    // SAFETY: waitid filled `info` (or left it zeroed under WNOHANG).
    Ok(unsafe { info.si_pid() } != 0)
}

fn kill_group(pgid: libc::pid_t) {
    // ESRCH (group already gone) is fine.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}
