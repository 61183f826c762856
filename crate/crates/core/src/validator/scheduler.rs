//! Work-stealing execution of validation tasks.
//!
//! Each worker owns a deque seeded round-robin in task order. A worker pops
//! from the front of its own deque; once that is empty it picks a random
//! victim and scans the other deques from there, stealing from the back of
//! the first non-empty one. Tasks are never added after seeding, so a worker
//! that finds every deque empty is done for good.

use std::collections::VecDeque;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ValidationVerdict, VerdictKind};

/// One line of `validation-log.jsonl`. Times are microseconds since the
/// scheduler started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SchedulerEvent {
    Start { worker: usize, patch_id: String, t_us: u64 },
    End { worker: usize, patch_id: String, t_us: u64, kind: VerdictKind, tests_executed: u32 },
    Steal { worker: usize, victim: usize, patch_id: String, t_us: u64 },
    /// The worker found every deque empty (lengths as observed) and exited.
    Idle { worker: usize, t_us: u64, queue_lens: Vec<usize> },
    /// Early stop was requested; the worker stops taking tasks.
    Cancelled { worker: usize, t_us: u64 },
}

impl SchedulerEvent {
    pub fn patch_id(&self) -> Option<&str> {
        match self {
            SchedulerEvent::Start { patch_id, .. }
            | SchedulerEvent::End { patch_id, .. }
            | SchedulerEvent::Steal { patch_id, .. } => Some(patch_id),
            _ => None,
        }
    }

    pub fn time_us(&self) -> u64 {
        match self {
            SchedulerEvent::Start { t_us, .. }
            | SchedulerEvent::End { t_us, .. }
            | SchedulerEvent::Steal { t_us, .. }
            | SchedulerEvent::Idle { t_us, .. }
            | SchedulerEvent::Cancelled { t_us, .. } => *t_us,
        }
    }
}

pub struct Task<T> {
    pub id: String,
    pub payload: T,
}

pub struct ScheduleResult {
    /// In completion order.
    pub verdicts: Vec<ValidationVerdict>,
    pub events: Vec<SchedulerEvent>,
    pub stopped_early: bool,
}

struct Shared<T> {
    queues: Vec<Mutex<VecDeque<Task<T>>>>,
    cancel: AtomicBool,
    events: Mutex<Vec<SchedulerEvent>>,
    start: Instant,
}

impl<T> Shared<T> {
    fn now(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn log(&self, event: SchedulerEvent) {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).push(event);
    }

    fn pop_own(&self, worker: usize) -> Option<Task<T>> {
        self.queues[worker].lock().unwrap_or_else(|e| e.into_inner()).pop_front()
    }

    /// One steal attempt: every other deque is visited once, starting from a
    /// random victim. Returns the observed lengths when nothing was found.
    fn steal(&self, worker: usize) -> Result<(usize, Task<T>), Vec<usize>> {
        let k = self.queues.len();
        let mut lens = vec![0; k];
        if k > 1 {
            let first = rand::rng().random_range(0..k);
            for offset in 0..k {
                let victim = (first + offset) % k;
                if victim == worker {
                    continue;
                }
                let mut q = self.queues[victim].lock().unwrap_or_else(|e| e.into_inner());
                if let Some(task) = q.pop_back() {
                    return Ok((victim, task));
                }
                lens[victim] = q.len();
            }
        }
        Err(lens)
    }
}

/// Runs `tasks` on `workers` threads. With `early_stop`, the first plausible
/// verdict stops workers from taking new tasks; running tasks finish.
/// A panicking task yields an INFRA_ERROR verdict.
pub fn run_work_stealing<T, F>(tasks: Vec<Task<T>>, workers: usize, early_stop: bool, run: F) -> ScheduleResult
where
    T: Send,
    F: Fn(usize, &Task<T>) -> ValidationVerdict + Sync,
{
    let workers = workers.max(1);
    let mut seeded: Vec<VecDeque<Task<T>>> = (0..workers).map(|_| VecDeque::new()).collect();
    for (i, task) in tasks.into_iter().enumerate() {
        seeded[i % workers].push_back(task);
    }
    let shared = Shared {
        queues: seeded.into_iter().map(Mutex::new).collect(),
        cancel: AtomicBool::new(false),
        events: Mutex::new(Vec::new()),
        start: Instant::now(),
    };
    let (tx, rx) = mpsc::channel();

    thread::scope(|scope| {
        for worker in 0..workers {
            let tx = tx.clone();
            let shared = &shared;
            let run = &run;
            scope.spawn(move || loop {
                if shared.cancel.load(Ordering::SeqCst) {
                    shared.log(SchedulerEvent::Cancelled { worker, t_us: shared.now() });
                    break;
                }
                let task = match shared.pop_own(worker) {
                    Some(task) => task,
                    None => match shared.steal(worker) {
                        Ok((victim, task)) => {
                            shared.log(SchedulerEvent::Steal {
                                worker,
                                victim,
                                patch_id: task.id.clone(),
                                t_us: shared.now(),
                            });
                            task
                        }
                        Err(queue_lens) => {
                            shared.log(SchedulerEvent::Idle { worker, t_us: shared.now(), queue_lens });
                            break;
                        }
                    },
                };
                shared.log(SchedulerEvent::Start { worker, patch_id: task.id.clone(), t_us: shared.now() });
                let verdict = panic::catch_unwind(AssertUnwindSafe(|| run(worker, &task)))
                    .unwrap_or_else(|payload| {
                        let msg = payload
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| payload.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "worker panicked".to_string());
                        ValidationVerdict::infra_error(task.id.clone(), None, 0, 0, msg)
                    });
                shared.log(SchedulerEvent::End {
                    worker,
                    patch_id: task.id.clone(),
                    t_us: shared.now(),
                    kind: verdict.kind,
                    tests_executed: verdict.tests_executed,
                });
                if early_stop && verdict.is_plausible() {
                    shared.cancel.store(true, Ordering::SeqCst);
                }
                if tx.send(verdict).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let verdicts: Vec<ValidationVerdict> = rx.into_iter().collect();
    let stopped_early = early_stop && verdicts.iter().any(ValidationVerdict::is_plausible);
    let mut events = shared.events.into_inner().unwrap_or_else(|e| e.into_inner());
    events.sort_by_key(SchedulerEvent::time_us);
    ScheduleResult { verdicts, events, stopped_early }
}
