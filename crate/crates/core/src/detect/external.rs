use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::Raster64;

use super::protocol::{truncate, Message};
use super::{Detection, Detector};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Session with a detector adapter process speaking the stdio protocol.
///
/// One request is in flight at a time. Responses to requests that already
/// timed out are recognized by id and discarded.
pub struct ExternalDetector {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    name: String,
    classes: Vec<String>,
    timeout: Duration,
    next_id: u64,
}

impl ExternalDetector {
    /// Starts `command` through `sh -c` and waits for its hello.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::AdapterDead(format!("cannot start {command:?}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut det = Self {
            child,
            stdin,
            lines,
            name: String::new(),
            classes: Vec::new(),
            timeout,
            next_id: 0,
        };
        let line = det.next_line(Instant::now() + timeout)?;
        match Message::parse(&line)? {
            Message::Hello { name, classes } => {
                det.name = name;
                det.classes = classes;
                Ok(det)
            }
            _ => Err(Error::Protocol {
                message: "expected hello handshake".into(),
                raw: truncate(&line),
            }),
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn next_line(&mut self, deadline: Instant) -> Result<String> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.lines.recv_timeout(wait) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => Err(Error::AdapterTimeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(self.dead("closed its output")),
        }
    }

    fn dead(&mut self, what: &str) -> Error {
        // give a crashing process a moment to be reaped so the status is known
        let deadline = Instant::now() + Duration::from_millis(200);
        let status = loop {
            match self.child.try_wait() {
                Ok(Some(s)) => break Some(s),
                Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                _ => break None,
            }
        };
        match status {
            Some(s) => Error::AdapterDead(format!("adapter {what} ({s})")),
            None => Error::AdapterDead(format!("adapter {what}")),
        }
    }

    fn request(&mut self, image: &Raster64) -> Result<Vec<Detection>> {
        let id = self.next_id;
        self.next_id += 1;
        let line = Message::detect(id, image)?.to_line();
        let sent = match self.stdin.as_mut() {
            Some(stdin) => writeln!(stdin, "{line}").and_then(|_| stdin.flush()).is_ok(),
            None => false,
        };
        if !sent {
            return Err(self.dead("stopped reading requests"));
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let raw = self.next_line(deadline)?;
            match Message::parse(&raw)? {
                Message::Detections { id: got, .. } | Message::Error { id: Some(got), .. } if got < id => {
                    log::debug!("discarding stale response {got}");
                }
                Message::Detections { id: got, detections } if got == id => {
                    for d in &detections {
                        d.validate().map_err(|m| Error::Protocol {
                            message: format!("invalid detection: {m}"),
                            raw: truncate(&raw),
                        })?;
                    }
                    return Ok(detections);
                }
                Message::Error { message, .. } => {
                    return Err(Error::Protocol {
                        message: format!("adapter reported error: {message}"),
                        raw: truncate(&raw),
                    })
                }
                _ => {
                    return Err(Error::Protocol {
                        message: format!("unexpected message for request {id}"),
                        raw: truncate(&raw),
                    })
                }
            }
        }
    }
}

impl Detector for ExternalDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn detect(&mut self, image: &Raster64) -> Result<Vec<Detection>> {
        self.request(image)
    }
}

impl Drop for ExternalDetector {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved adapter exit on its own
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_millis(100);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
