use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Episode, ExecutionError, Sut, Trajectory};
use crate::config::{config_to_json, ConfigSchema, EnvConfiguration};

const STDERR_EXCERPT: usize = 2000;

/// External simulator speaking one JSON line per request and reply:
/// `{"config": {...}, "seed": n}` in, `{"failure": bool, "trajectory": [[...], ...]}` out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalParams {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub timeout_secs: f64,
    #[serde(default)]
    pub deterministic: bool,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
}

impl Process {
    fn stderr_excerpt(&self) -> String {
        // Give the stderr reader a moment to catch up with a dying process.
        thread::sleep(Duration::from_millis(20));
        let text = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        let start = text.len().saturating_sub(STDERR_EXCERPT);
        let start = (start..=text.len())
            .find(|&i| text.is_char_boundary(i))
            .unwrap_or(text.len());
        text[start..].trim().to_string()
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Adapter for an external simulator; the process is started on first use
/// and restarted after a failed run.
pub struct ExternalSut {
    schema: ConfigSchema,
    params: ExternalParams,
    process: Option<Process>,
}

impl ExternalSut {
    pub fn new(schema: ConfigSchema, params: ExternalParams) -> Self {
        Self {
            schema,
            params,
            process: None,
        }
    }

    fn spawn(&self) -> Result<Process, ExecutionError> {
        let (program, args) =
            self.params
                .command
                .split_first()
                .ok_or_else(|| ExecutionError::Spawn {
                    command: String::new(),
                    message: "empty command line".into(),
                })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ExecutionError::Spawn {
                command: self.params.command.join(" "),
                message: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

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
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                if let Ok(mut s) = sink.lock() {
                    s.push_str(&String::from_utf8_lossy(&buf[..n]));
                    if s.len() > 4 * STDERR_EXCERPT {
                        let cut = s.len() - 2 * STDERR_EXCERPT;
                        let cut = (cut..s.len()).find(|&i| s.is_char_boundary(i)).unwrap_or(0);
                        s.drain(..cut);
                    }
                }
            }
        });
        Ok(Process {
            child,
            stdin,
            lines,
            stderr,
        })
    }

    fn exchange(&mut self, request: &str, run: usize) -> Result<String, ExecutionError> {
        if self.process.is_none() {
            self.process = Some(self.spawn()?);
        }
        let timeout = Duration::from_secs_f64(self.params.timeout_secs.max(0.0));
        let proc = self.process.as_mut().expect("process started above");
        let sent = writeln!(proc.stdin, "{request}").and_then(|_| proc.stdin.flush());
        if sent.is_err() {
            return Err(ExecutionError::Exited {
                run,
                stderr: proc.stderr_excerpt(),
            });
        }
        match proc.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ExecutionError::Protocol {
                run,
                message: e.to_string(),
                stderr: proc.stderr_excerpt(),
            }),
            Err(RecvTimeoutError::Timeout) => Err(ExecutionError::Timeout {
                run,
                seconds: self.params.timeout_secs,
                stderr: proc.stderr_excerpt(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(ExecutionError::Exited {
                run,
                stderr: proc.stderr_excerpt(),
            }),
        }
    }

    fn parse_reply(&self, line: &str, run: usize) -> Result<Episode, String> {
        let _ = run;
        let reply: Value =
            serde_json::from_str(line).map_err(|e| format!("malformed reply: {e}"))?;
        let failure = reply
            .get("failure")
            .and_then(Value::as_bool)
            .ok_or("reply lacks boolean `failure`")?;
        let raw = reply.get("trajectory").ok_or("reply lacks `trajectory`")?;
        let samples: Vec<Vec<f64>> =
            serde_json::from_value(raw.clone()).map_err(|e| format!("bad trajectory: {e}"))?;
        let trajectory = Trajectory::new(samples)?;
        Ok(Episode {
            failure,
            trajectory,
        })
    }
}

impl Sut for ExternalSut {
    fn schema(&self) -> &ConfigSchema {
        &self.schema
    }

    fn is_deterministic(&self) -> bool {
        self.params.deterministic
    }

    fn episode(
        &mut self,
        config: &EnvConfiguration,
        seed: u64,
        run: usize,
    ) -> Result<Episode, ExecutionError> {
        let request =
            json!({ "config": config_to_json(&self.schema, config)?, "seed": seed }).to_string();
        let result = self.exchange(&request, run).and_then(|line| {
            self.parse_reply(&line, run)
                .map_err(|message| ExecutionError::Protocol {
                    run,
                    message,
                    stderr: self
                        .process
                        .as_ref()
                        .map(Process::stderr_excerpt)
                        .unwrap_or_default(),
                })
        });
        if result.is_err() {
            // A misbehaving process is not trusted for later runs.
            self.process = None;
        }
        result
    }
}
