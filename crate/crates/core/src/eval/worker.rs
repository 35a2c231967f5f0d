//! Client side of the line-delimited JSON worker protocol.
//!
//! Each worker is a child process launched with `sh -c <command>`. It
//! announces itself with `{"ready": true}` on stdout and then answers one
//! response line per request line. A request that runs past the budget's
//! timeout kills the process; a fresh one is started for the next request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EvalBudget, EvalError, Evaluator};
use crate::domain::{NetworkGenome, NetworkMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerConfig {
    /// Shell command that starts one worker process.
    pub command: String,
    #[serde(default = "default_device")]
    pub device: String,
    #[serde(default = "default_processes")]
    pub processes: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_startup_timeout_s")]
    pub startup_timeout_s: f64,
}

fn default_device() -> String {
    "cpu".into()
}
fn default_processes() -> usize {
    1
}
fn default_learning_rate() -> f64 {
    0.001
}
fn default_momentum() -> f64 {
    0.9
}
fn default_startup_timeout_s() -> f64 {
    300.0
}

impl WorkerConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            device: default_device(),
            processes: default_processes(),
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            startup_timeout_s: default_startup_timeout_s(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.command.trim().is_empty() {
            return Err(EvalError::Config("worker.command is empty".into()));
        }
        if self.processes == 0 {
            return Err(EvalError::Config("worker.processes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EvalError::Config("worker.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(EvalError::Config("worker.momentum must be in [0, 1)".into()));
        }
        if !(self.startup_timeout_s > 0.0 && self.startup_timeout_s.is_finite()) {
            return Err(EvalError::Config("worker.startup_timeout_s must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRequest {
    pub id: String,
    pub genome_source: String,
    pub epochs: u32,
    pub learning_rate: f64,
    pub momentum: f64,
    pub train_subset: Option<u64>,
    pub test_subset: Option<u64>,
    pub device: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub id: String,
    pub trainable: bool,
    pub loss: Option<f64>,
    pub flops: f64,
    pub depth: u64,
    pub width: u64,
    pub param_count: u64,
    #[serde(default)]
    pub error: Option<String>,
}

impl WorkerResponse {
    fn into_metrics(self) -> NetworkMetrics {
        match (self.trainable, self.loss) {
            (true, Some(loss)) => NetworkMetrics::trained(loss, self.flops, self.depth, self.width),
            (true, None) => NetworkMetrics::untrainable("worker reported trainable without a loss"),
            (false, _) => {
                let mut m = NetworkMetrics::untrainable(
                    self.error.filter(|e| !e.is_empty()).unwrap_or_else(|| "untrainable".into()),
                );
                m.flops = self.flops.max(0.0);
                m.depth = self.depth;
                m.width = self.width;
                m
            }
        }
    }
}

enum Line {
    Text(String),
    Closed,
}

struct WorkerProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<Line>,
}

impl WorkerProcess {
    fn start(cfg: &WorkerConfig) -> Result<Self, EvalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cfg.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Spawn(format!("{}: {e}", cfg.command)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => {
                        if tx.send(Line::Text(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Line::Closed);
        });
        let mut proc = Self {
            child,
            stdin,
            lines: rx,
        };
        let wait = Duration::from_secs_f64(cfg.startup_timeout_s);
        match proc.lines.recv_timeout(wait) {
            Ok(Line::Text(l)) => {
                let v: serde_json::Value = serde_json::from_str(&l)
                    .map_err(|_| EvalError::Protocol(format!("expected ready line, got {l:?}")))?;
                if v != serde_json::json!({"ready": true}) {
                    proc.kill();
                    return Err(EvalError::Protocol(format!("expected ready line, got {l}")));
                }
            }
            Ok(Line::Closed) | Err(RecvTimeoutError::Disconnected) => {
                proc.kill();
                return Err(EvalError::Spawn(format!("{} exited before ready", cfg.command)));
            }
            Err(RecvTimeoutError::Timeout) => {
                proc.kill();
                return Err(EvalError::Spawn(format!(
                    "{} not ready within {}s",
                    cfg.command, cfg.startup_timeout_s
                )));
            }
        }
        Ok(proc)
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for WorkerProcess {
    fn drop(&mut self) {
        self.kill();
    }
}

enum Exchange {
    Reply(WorkerResponse),
    Failed(String),
}

/// Pool of worker processes, one request in flight per process.
pub struct WorkerEvaluator {
    cfg: WorkerConfig,
    slots: Vec<Mutex<Option<WorkerProcess>>>,
    free: Mutex<Vec<usize>>,
    available: Condvar,
    counter: AtomicU64,
}

impl WorkerEvaluator {
    pub fn spawn(cfg: WorkerConfig) -> Result<Self, EvalError> {
        cfg.validate()?;
        let mut slots = Vec::with_capacity(cfg.processes);
        for _ in 0..cfg.processes {
            slots.push(Mutex::new(Some(WorkerProcess::start(&cfg)?)));
        }
        Ok(Self {
            free: Mutex::new((0..cfg.processes).rev().collect()),
            cfg,
            slots,
            available: Condvar::new(),
            counter: AtomicU64::new(0),
        })
    }

    fn checkout(&self) -> usize {
        let mut free = self.free.lock().expect("free list");
        loop {
            if let Some(i) = free.pop() {
                return i;
            }
            free = self.available.wait(free).expect("free list");
        }
    }

    fn checkin(&self, i: usize) {
        self.free.lock().expect("free list").push(i);
        self.available.notify_one();
    }

    fn exchange(&self, proc: &mut WorkerProcess, req: &WorkerRequest, timeout: Duration) -> Result<Exchange, EvalError> {
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        if let Err(e) = proc.stdin.write_all(line.as_bytes()).and_then(|_| proc.stdin.flush()) {
            return Ok(Exchange::Failed(format!("worker crashed: {e}")));
        }
        match proc.lines.recv_timeout(timeout) {
            Ok(Line::Text(text)) => {
                let resp: WorkerResponse = serde_json::from_str(&text)
                    .map_err(|e| EvalError::Protocol(format!("{e}: {text}")))?;
                if resp.id != req.id {
                    return Err(EvalError::Protocol(format!(
                        "response id {} does not match request id {}",
                        resp.id, req.id
                    )));
                }
                if resp.trainable && !resp.loss.is_some_and(f64::is_finite) {
                    return Err(EvalError::Protocol(format!(
                        "trainable response {} without a finite loss",
                        resp.id
                    )));
                }
                Ok(Exchange::Reply(resp))
            }
            Ok(Line::Closed) | Err(RecvTimeoutError::Disconnected) => {
                Ok(Exchange::Failed("worker crashed: stdout closed".into()))
            }
            Err(RecvTimeoutError::Timeout) => Ok(Exchange::Failed(format!(
                "timeout after {}s",
                timeout.as_secs_f64()
            ))),
        }
    }

    fn run_on(&self, slot: usize, req: &WorkerRequest, timeout: Duration) -> Result<NetworkMetrics, EvalError> {
        let mut guard = self.slots[slot].lock().expect("worker slot");
        if guard.is_none() {
            *guard = Some(WorkerProcess::start(&self.cfg)?);
        }
        let proc = guard.as_mut().expect("started");
        match self.exchange(proc, req, timeout)? {
            Exchange::Reply(resp) => Ok(resp.into_metrics()),
            Exchange::Failed(reason) => {
                log::warn!("worker request {} failed ({reason}); restarting worker", req.id);
                // Dropping kills the process; the replacement is started here
                // so the next request does not pay for it.
                *guard = None;
                *guard = Some(WorkerProcess::start(&self.cfg)?);
                Ok(NetworkMetrics::untrainable(reason))
            }
        }
    }
}

impl Evaluator for WorkerEvaluator {
    fn evaluate(&self, genome: &NetworkGenome, budget: &EvalBudget) -> Result<NetworkMetrics, EvalError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let req = WorkerRequest {
            id: format!("{}-{n}", genome.id),
            genome_source: genome.source.clone(),
            epochs: budget.epochs,
            learning_rate: self.cfg.learning_rate,
            momentum: self.cfg.momentum,
            train_subset: budget.train_subset,
            test_subset: budget.test_subset,
            device: self.cfg.device.clone(),
        };
        let slot = self.checkout();
        let out = self.run_on(slot, &req, Duration::from_secs_f64(budget.timeout_s));
        self.checkin(slot);
        out
    }

    fn parallelism(&self) -> usize {
        self.slots.len()
    }
}
