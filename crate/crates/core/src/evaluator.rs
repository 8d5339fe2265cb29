//! External black-box objective bridge. Requests and responses are
//! line-delimited JSON records over the child's standard streams:
//! `{"id":0,"x":[0.2,0.3]}` in, `{"id":0,"f":0.5}` out, one newline per
//! record. Reals serialize with round-trip-exact precision.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{Bounds, ConstraintSet, Problem};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorMode {
    /// Spawn a fresh child process for every evaluation.
    PerCall,
    /// Keep one child alive across evaluations to amortize startup.
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    /// Program and arguments, whitespace-separated.
    pub command: String,
    pub timeout: Duration,
    pub mode: EvaluatorMode,
}

impl EvaluatorSpec {
    pub fn new(command: impl Into<String>, timeout: Duration, mode: EvaluatorMode) -> Result<Self, Error> {
        if timeout.is_zero() {
            return Err(Error::InvalidConfig("evaluator timeout must be positive".into()));
        }
        let spec = Self { command: command.into(), timeout, mode };
        if spec.command.split_whitespace().next().is_none() {
            return Err(Error::InvalidConfig("evaluator command is empty".into()));
        }
        Ok(spec)
    }
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: u64,
    x: &'a [f64],
}

#[derive(Debug, Deserialize)]
struct Response {
    id: u64,
    f: f64,
}

struct ChildHandle {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
}

impl ChildHandle {
    fn spawn(spec: &EvaluatorSpec) -> Result<Self, Error> {
        let mut parts = spec.command.split_whitespace();
        let program = parts.next().expect("validated nonempty");
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ChildFailure { message: format!("spawn failed: {e}") })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            for line in BufReader::new(stderr_pipe).lines().map_while(Result::ok) {
                let mut buf = sink.lock().unwrap();
                buf.push_str(&line);
                buf.push('\n');
            }
        });
        Ok(Self { child, stdin: Some(stdin), lines, stderr })
    }

    fn failure(&mut self, context: &str) -> Error {
        let _ = self.child.kill();
        let status = self.child.wait().ok();
        let stderr = self.stderr.lock().unwrap().clone();
        Error::ChildFailure {
            message: format!(
                "{context}; exit status {:?}; stderr: {}",
                status,
                if stderr.is_empty() { "<empty>" } else { stderr.trim_end() }
            ),
        }
    }
}

impl Drop for ChildHandle {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Single-consumer bridge to an external evaluator process. One request
/// is outstanding at a time; request ids are unique within the bridge's
/// lifetime.
pub struct ExternalEvaluator {
    spec: EvaluatorSpec,
    persistent: Option<ChildHandle>,
    next_id: u64,
}

impl ExternalEvaluator {
    pub fn new(spec: EvaluatorSpec) -> Self {
        Self { spec, persistent: None, next_id: 0 }
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64, Error> {
        let id = self.next_id;
        self.next_id += 1;

        match self.spec.mode {
            EvaluatorMode::PerCall => {
                let mut handle = ChildHandle::spawn(&self.spec)?;
                let result = exchange(&mut handle, id, x, self.spec.timeout);
                // a per-call child must also exit cleanly
                if result.is_ok() {
                    drop(handle.stdin.take());
                    let status = handle
                        .child
                        .wait()
                        .map_err(|e| Error::ChildFailure { message: e.to_string() })?;
                    if !status.success() {
                        return Err(handle.failure("nonzero exit after response"));
                    }
                }
                result
            }
            EvaluatorMode::Persistent => {
                if self.persistent.is_none() {
                    self.persistent = Some(ChildHandle::spawn(&self.spec)?);
                }
                let handle = self.persistent.as_mut().expect("just ensured");
                let result = exchange(handle, id, x, self.spec.timeout);
                if result.is_err() {
                    // drop a broken child so the next call respawns
                    self.persistent = None;
                }
                result
            }
        }
    }
}

fn exchange(handle: &mut ChildHandle, id: u64, x: &[f64], timeout: Duration) -> Result<f64, Error> {
    let request = serde_json::to_string(&Request { id, x }).expect("request serialization");
    let write_ok = match handle.stdin.as_mut() {
        Some(stdin) => {
            stdin.write_all(request.as_bytes()).is_ok()
                && stdin.write_all(b"\n").is_ok()
                && stdin.flush().is_ok()
        }
        None => false,
    };
    if !write_ok {
        return Err(handle.failure("could not write request"));
    }
    let line = match handle.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => line,
        Ok(Err(e)) => return Err(handle.failure(&format!("read error: {e}"))),
        Err(RecvTimeoutError::Timeout) => {
            let _ = handle.child.kill();
            return Err(Error::EvaluatorTimeout { id, timeout_secs: timeout.as_secs_f64() });
        }
        Err(RecvTimeoutError::Disconnected) => {
            return Err(handle.failure("child closed stdout before responding"))
        }
    };
    let response: Response =
        serde_json::from_str(&line).map_err(|_| Error::Protocol { line: line.clone() })?;
    if response.id != id {
        return Err(Error::Protocol { line });
    }
    Ok(response.f)
}

/// Wrap an external evaluator as a `Problem` objective. In strict mode
/// the optimizer guarantees that every `x` reaching the child satisfies
/// the constraint set.
pub fn external_problem(
    spec: EvaluatorSpec,
    bounds: Bounds,
    constraints: ConstraintSet,
    label: impl Into<String>,
) -> Problem {
    let bridge = Mutex::new(ExternalEvaluator::new(spec));
    Problem::new(
        label,
        bounds,
        constraints,
        Arc::new(move |x: &[f64]| bridge.lock().unwrap().evaluate(x)),
    )
}
