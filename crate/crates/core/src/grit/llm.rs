//! Chat prompts and a pluggable text-completion client.
//!
//! The endpoint is chosen by `FERRET_LLM_ENDPOINT`:
//! `file:PATH` replays canned responses (one JSON string per line),
//! `cmd:PROGRAM` pipes the prompt JSON to an external program and reads its
//! stdout. Retries and the per-call timeout come from `FERRET_LLM_RETRIES`
//! and `FERRET_LLM_TIMEOUT_SECS`.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_ENDPOINT: &str = "FERRET_LLM_ENDPOINT";
pub const ENV_RETRIES: &str = "FERRET_LLM_RETRIES";
pub const ENV_TIMEOUT: &str = "FERRET_LLM_TIMEOUT_SECS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub messages: Vec<ChatMessage>,
}

impl ChatPrompt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, role: &str, content: impl Into<String>) -> &mut Self {
        self.messages.push(ChatMessage {
            role: role.to_string(),
            content: content.into(),
        });
        self
    }

    pub fn system(&mut self, content: impl Into<String>) -> &mut Self {
        self.push("system", content)
    }

    pub fn user(&mut self, content: impl Into<String>) -> &mut Self {
        self.push("user", content)
    }

    pub fn assistant(&mut self, content: impl Into<String>) -> &mut Self {
        self.push("assistant", content)
    }

    /// Human-readable transcript.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&format!("[{}]\n{}\n\n", m.role, m.content));
        }
        out
    }
}

pub trait LlmClient {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String>;
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String> {
        (**self).complete(prompt)
    }
}

/// Answers from a queue of canned responses; errors once exhausted.
#[derive(Debug, Default)]
pub struct StubClient {
    responses: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<ChatPrompt>>,
}

impl StubClient {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            prompts: Mutex::default(),
        }
    }

    pub fn from_file(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = std::fs::File::open(&path)?;
        let mut responses = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            responses.push(serde_json::from_str::<String>(&line)?);
        }
        Ok(Self::new(responses))
    }

    /// Prompts received so far.
    pub fn seen(&self) -> Vec<ChatPrompt> {
        self.prompts.lock().expect("poisoned").clone()
    }
}

impl LlmClient for StubClient {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String> {
        self.prompts.lock().expect("poisoned").push(prompt.clone());
        self.responses
            .lock()
            .expect("poisoned")
            .pop_front()
            .ok_or_else(|| Error::Llm("stub has no responses left".into()))
    }
}

/// Runs a program per request: prompt JSON on stdin, completion on stdout.
#[derive(Debug, Clone)]
pub struct CommandClient {
    pub program: String,
    pub timeout: Duration,
}

impl LlmClient for CommandClient {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String> {
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Llm(format!("spawn {}: {e}", self.program)))?;
        let body = serde_json::to_vec(prompt)?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let _ = stdin.write_all(&body);
            drop(stdin);
            let mut out = String::new();
            let r = stdout.read_to_string(&mut out).map(|_| out);
            let _ = tx.send(r);
        });
        match rx.recv_timeout(self.timeout) {
            Ok(Ok(out)) => {
                let status = child.wait()?;
                if !status.success() {
                    return Err(Error::Llm(format!("{} exited with {status}", self.program)));
                }
                Ok(out.trim_end().to_string())
            }
            Ok(Err(e)) => {
                let _ = child.kill();
                Err(Error::Llm(format!("reading {}: {e}", self.program)))
            }
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(Error::Llm(format!(
                    "{} timed out after {:?}",
                    self.program, self.timeout
                )))
            }
        }
    }
}

/// Retries the inner client up to `retries` extra times.
pub struct RetryingClient<C> {
    pub inner: C,
    pub retries: u32,
}

impl<C: LlmClient> LlmClient for RetryingClient<C> {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String> {
        let mut last = None;
        for _ in 0..=self.retries {
            match self.inner.complete(prompt) {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmSettings {
    pub endpoint: Option<String>,
    pub retries: u32,
    pub timeout: Duration,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            retries: 2,
            timeout: Duration::from_secs(60),
        }
    }
}

impl LlmSettings {
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut s = Self::default();
        s.endpoint = get(ENV_ENDPOINT).filter(|v| !v.trim().is_empty());
        if let Some(v) = get(ENV_RETRIES) {
            s.retries = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{ENV_RETRIES}={v}")))?;
        }
        if let Some(v) = get(ENV_TIMEOUT) {
            let secs: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{ENV_TIMEOUT}={v}")))?;
            if !(secs.is_finite() && secs > 0.0) {
                return Err(Error::InvalidConfig(format!("{ENV_TIMEOUT}={v}")));
            }
            s.timeout = Duration::from_secs_f64(secs);
        }
        Ok(s)
    }

    pub fn connect(&self) -> Result<Box<dyn LlmClient>> {
        let endpoint = self
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("{ENV_ENDPOINT} is not set")))?;
        let retries = self.retries;
        if let Some(path) = endpoint.strip_prefix("file:") {
            // replaying canned responses has nothing to retry
            Ok(Box::new(StubClient::from_file(path)?))
        } else if let Some(program) = endpoint.strip_prefix("cmd:") {
            Ok(Box::new(RetryingClient {
                inner: CommandClient {
                    program: program.to_string(),
                    timeout: self.timeout,
                },
                retries,
            }))
        } else {
            Err(Error::InvalidConfig(format!(
                "unsupported endpoint `{endpoint}`; use file:PATH or cmd:PROGRAM"
            )))
        }
    }
}
