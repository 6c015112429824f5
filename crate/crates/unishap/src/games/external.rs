//! Game evaluated by a subprocess speaking the [`wire`](super::wire) protocol.

use super::{require_finite, Game, Subset, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

/// Tuning knobs for [`ExternalGame::spawn`].
#[derive(Debug, Clone)]
pub struct ExternalOptions {
    /// Maximum subsets per `EVAL` request; larger batches are split.
    pub batch_size: usize,
    /// Longest wait for any single line from the subprocess.
    pub timeout: Duration,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        ExternalOptions {
            batch_size: DEFAULT_BATCH_SIZE,
            timeout: Duration::from_secs(60),
        }
    }
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    /// 1-based count of lines received, for protocol error reports.
    lineno: usize,
    timeout: Duration,
}

impl Session {
    fn next_line(&mut self) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => {
                self.lineno += 1;
                Ok(line)
            }
            Ok(Err(e)) => Err(Error::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Subprocess(
                "subprocess closed its stdout".into(),
            )),
        }
    }

    fn request(&mut self, batch: &[Subset]) -> Result<Vec<f64>> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Subprocess("session already closed".into()))?;
        writeln!(stdin, "{}", super::wire::eval_header(batch.len()))?;
        for subset in batch {
            writeln!(stdin, "{}", subset.to_base64())?;
        }
        stdin.flush()?;
        let header = self.next_line()?;
        let k = super::wire::parse_values_header(&header, self.lineno)?;
        if k != batch.len() {
            return Err(Error::Protocol {
                line: self.lineno,
                message: format!("requested {} values, subprocess offered {k}", batch.len()),
            });
        }
        let mut values = Vec::with_capacity(k);
        for subset in batch {
            let line = self.next_line()?;
            let value = super::wire::parse_value(&line, self.lineno)?;
            require_finite(value, subset)?;
            values.push(value);
        }
        Ok(values)
    }

    fn shutdown(&mut self) {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = writeln!(stdin, "{}", super::wire::BYE);
            let _ = stdin.flush();
        }
        for _ in 0..50 {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(_) => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Cooperative game whose characteristic function lives in another process.
///
/// The subprocess is spawned once and reused for every batch; its stderr
/// passes through. Requests are serialized through an internal lock and
/// [`Game::concurrent`] reports `false`, so evaluation stays single-stream.
pub struct ExternalGame {
    d: usize,
    v_empty: f64,
    v_full: f64,
    batch_size: usize,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalGame")
            .field("d", &self.d)
            .field("batch_size", &self.batch_size)
            .finish()
    }
}

impl ExternalGame {
    /// Spawns `command` (program plus arguments), waits for its `HELLO`, and
    /// evaluates the empty and full coalitions up front.
    pub fn spawn(command: &[String], options: ExternalOptions) -> Result<ExternalGame> {
        if command.is_empty() {
            return Err(Error::InvalidArgument("external command is empty".into()));
        }
        if options.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Subprocess(format!("failed to spawn '{}': {e}", command[0])))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    return;
                }
            }
        });
        let mut session = Session {
            child,
            stdin: Some(stdin),
            lines: rx,
            lineno: 0,
            timeout: options.timeout,
        };
        let hello = session.next_line()?;
        let d = super::wire::parse_hello(&hello, session.lineno)?;
        let endpoints = session.request(&[Subset::empty(d), Subset::full(d)])?;
        Ok(ExternalGame {
            d,
            v_empty: endpoints[0],
            v_full: endpoints[1],
            batch_size: options.batch_size,
            session: Mutex::new(session),
        })
    }
}

impl Game for ExternalGame {
    fn d(&self) -> usize {
        self.d
    }

    fn evaluate_batch(&self, subsets: &[Subset]) -> Result<Vec<f64>> {
        let mut session = self.session.lock().expect("session lock poisoned");
        let mut values = Vec::with_capacity(subsets.len());
        for chunk in subsets.chunks(self.batch_size) {
            values.extend(session.request(chunk)?);
        }
        Ok(values)
    }

    fn v_empty(&self) -> f64 {
        self.v_empty
    }

    fn v_full(&self) -> f64 {
        self.v_full
    }

    fn concurrent(&self) -> bool {
        false
    }
}
