use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{OracleError, WakeOracle};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct Handle {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// A detector behind a long-running process speaking a line protocol: each
/// request is the word followed by a newline, each reply is `1` or `0`.
///
/// Queries on one handle are serialized.
pub struct ExternalOracle {
    command: String,
    timeout: Duration,
    handle: Mutex<Handle>,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle").field("command", &self.command).finish()
    }
}

impl ExternalOracle {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or(OracleError::Closed)?;
        let stdout = child.stdout.take().ok_or(OracleError::Closed)?;
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { command: command.to_string(), timeout, handle: Mutex::new(Handle { child, stdin, lines }) })
    }
}

impl WakeOracle for ExternalOracle {
    fn query(&self, word: &str) -> Result<bool, OracleError> {
        let mut h = self.handle.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(h.stdin, "{word}")?;
        h.stdin.flush()?;
        match h.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => match line.trim_end_matches('\r') {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(OracleError::Protocol(other.to_string())),
            },
            Ok(Err(e)) => Err(OracleError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(OracleError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(OracleError::Closed),
        }
    }

    fn describe(&self) -> String {
        format!("exec:{}", self.command)
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        let h = self.handle.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = h.child.kill();
        let _ = h.child.wait();
    }
}
