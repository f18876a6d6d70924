//! Line-delimited JSON protocol for external models.
//!
//! ```text
//! request:  {"id":<int>,"points":[[f64,...],...]}
//! response: {"id":<int>,"values":[f64,...]}
//! error:    {"id":<int>,"error":"<message>"}
//! ```
//!
//! The same bodies travel over a child process's stdin/stdout (one message
//! per line) or as HTTP `POST /predict`. A connection opens with the empty
//! handshake `{"id":0,"points":[]}`, which must be answered with
//! `{"id":0,"values":[]}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BlackBoxError, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: u64,
    pub points: Vec<Vec<f64>>,
}

/// A reply line. Values are optional so that a `null` (how many encoders
/// write NaN) surfaces as a non-finite prediction instead of a parse error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictResponse {
    Values { id: u64, values: Vec<Option<f64>> },
    Error { id: Option<u64>, error: String },
}

impl PredictResponse {
    /// Checks the id echo and converts to plain values. `null` entries map
    /// to NaN so the caller's finiteness check reports their index.
    fn into_values(self, expected_id: u64) -> Result<Vec<f64>, BlackBoxError> {
        match self {
            PredictResponse::Values { id, values } => {
                if id != expected_id {
                    return Err(BlackBoxError::Protocol(format!(
                        "response id {id} does not match request id {expected_id}"
                    )));
                }
                Ok(values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            }
            PredictResponse::Error { error, .. } => Err(BlackBoxError::Adapter(error)),
        }
    }
}

/// Serves one request line against `model` and returns the reply line
/// (without the trailing newline). Malformed input yields
/// `{"id":null,"error":"parse"}`.
pub fn respond(model: &dyn Model, line: &str) -> String {
    let reply = match serde_json::from_str::<PredictRequest>(line) {
        Err(_) => PredictResponse::Error {
            id: None,
            error: "parse".to_string(),
        },
        Ok(req) => match model.predict(&req.points) {
            Ok(values) => PredictResponse::Values {
                id: req.id,
                values: values
                    .into_iter()
                    .map(|v| v.is_finite().then_some(v))
                    .collect(),
            },
            Err(e) => PredictResponse::Error {
                id: Some(req.id),
                error: e.to_string(),
            },
        },
    };
    serde_json::to_string(&reply).expect("reply serializes")
}

fn handshake_check(reply: Result<Vec<f64>, BlackBoxError>) -> Result<(), BlackBoxError> {
    match reply {
        Ok(values) if values.is_empty() => Ok(()),
        Ok(values) => Err(BlackBoxError::Protocol(format!(
            "handshake answered with {} values",
            values.len()
        ))),
        Err(e) => Err(BlackBoxError::Protocol(format!("handshake failed: {e}"))),
    }
}

struct StdioChannel {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

impl StdioChannel {
    fn exchange(&mut self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&PredictRequest {
            id,
            points: points.to_vec(),
        })
        .map_err(|e| BlackBoxError::Protocol(e.to_string()))?;
        line.push('\n');
        let transport = |e: std::io::Error| BlackBoxError::Transport(e.to_string());
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| BlackBoxError::Transport("adapter stdin closed".into()))?;
        stdin.write_all(line.as_bytes()).map_err(transport)?;
        stdin.flush().map_err(transport)?;

        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(transport)? == 0 {
            return Err(BlackBoxError::Transport(
                "adapter closed its output".to_string(),
            ));
        }
        let parsed: PredictResponse = serde_json::from_str(reply.trim_end())
            .map_err(|e| BlackBoxError::Protocol(format!("unparseable reply: {e}")))?;
        parsed.into_values(id)
    }
}

/// A model served by a child process over stdin/stdout.
pub struct StdioAdapter {
    channel: Mutex<StdioChannel>,
    command: String,
}

impl std::fmt::Debug for StdioAdapter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StdioAdapter")
            .field("command", &self.command)
            .finish()
    }
}

impl StdioAdapter {
    /// Runs `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str) -> Result<Self, BlackBoxError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BlackBoxError::Transport(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut channel = StdioChannel {
            child,
            stdin,
            stdout,
            next_id: 0,
        };
        handshake_check(channel.exchange(&[]))?;
        Ok(Self {
            channel: Mutex::new(channel),
            command: command.to_string(),
        })
    }
}

impl Drop for StdioAdapter {
    fn drop(&mut self) {
        if let Ok(channel) = self.channel.get_mut() {
            // EOF on stdin is the shutdown signal.
            channel.stdin.take();
            if !matches!(channel.child.try_wait(), Ok(Some(_))) {
                std::thread::sleep(Duration::from_millis(20));
                if !matches!(channel.child.try_wait(), Ok(Some(_))) {
                    let _ = channel.child.kill();
                }
            }
            let _ = channel.child.wait();
        }
    }
}

impl Model for StdioAdapter {
    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        let mut channel = self
            .channel
            .lock()
            .map_err(|_| BlackBoxError::Transport("adapter channel poisoned".into()))?;
        channel.exchange(points)
    }
}

/// A model served over HTTP `POST /predict`.
pub struct HttpAdapter {
    agent: ureq::Agent,
    url: String,
    next_id: Mutex<u64>,
}

impl std::fmt::Debug for HttpAdapter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpAdapter")
            .field("url", &self.url)
            .finish()
    }
}

impl HttpAdapter {
    /// `base` is either the service root or the full `/predict` URL.
    pub fn connect(base: &str) -> Result<Self, BlackBoxError> {
        let url = if base.trim_end_matches('/').ends_with("/predict") {
            base.to_string()
        } else {
            format!("{}/predict", base.trim_end_matches('/'))
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(600)))
            .http_status_as_error(false)
            .build()
            .into();
        let adapter = Self {
            agent,
            url,
            next_id: Mutex::new(0),
        };
        handshake_check(adapter.predict(&[]))?;
        Ok(adapter)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Model for HttpAdapter {
    fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, BlackBoxError> {
        let id = {
            let mut next = self
                .next_id
                .lock()
                .map_err(|_| BlackBoxError::Transport("id counter poisoned".into()))?;
            let id = *next;
            *next += 1;
            id
        };
        let request = PredictRequest {
            id,
            points: points.to_vec(),
        };
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&request)
            .map_err(|e| BlackBoxError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| BlackBoxError::Transport(e.to_string()))?;
        match serde_json::from_str::<PredictResponse>(&text) {
            Ok(parsed) => parsed.into_values(id),
            Err(_) if !status.is_success() => Err(BlackBoxError::Transport(format!(
                "HTTP {status}: {}",
                text.trim()
            ))),
            Err(e) => Err(BlackBoxError::Protocol(format!("unparseable reply: {e}"))),
        }
    }
}
