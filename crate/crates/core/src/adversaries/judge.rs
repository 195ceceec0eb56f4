//! Remote LLM judge speaking a chat-completion HTTP API.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{AuditError, Result};
use crate::sampling::CandidateSet;
use crate::types::{Corpus, TextRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteJudgeConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself is
    /// never stored or logged.
    #[serde(default = "default_key_var")]
    pub api_key_env_var: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_key_var() -> String {
    "JUDGE_API_KEY".to_string()
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

fn default_in_flight() -> usize {
    8
}

impl RemoteJudgeConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env_var: default_key_var(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(AuditError::config(format!(
                "judge timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        if self.max_in_flight == 0 {
            return Err(AuditError::config("judge max_in_flight must be at least 1"));
        }
        if self.base_url.is_empty() || self.model_name.is_empty() {
            return Err(AuditError::config("judge base_url and model_name are required"));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Renders the attribution prompt for an output and its numbered candidates.
pub fn render_judge_prompt(y_text: &str, candidates: &[String]) -> String {
    let k = candidates.len();
    let mut prompt = String::new();
    prompt.push_str(
        "You are given a rewritten text Y and several candidate original texts. \
         Your task is to identify which candidate is the most likely original text \
         that was rewritten to produce Y.\n\n",
    );
    prompt.push_str("Output format.\n");
    prompt.push_str("Answer with exactly the following format on a single line:\n");
    prompt.push_str(&format!("answer: [[N]], where N ∈ {{1,…,{k}}}.\n"));
    prompt.push_str("Do not include analysis or any additional text.\n\n");
    prompt.push_str("Rewritten text Y:\n");
    prompt.push_str(y_text);
    prompt.push_str("\n\nCandidate original texts:\n");
    for (i, c) in candidates.iter().enumerate() {
        prompt.push_str(&format!("{}. {}\n", i + 1, c));
    }
    prompt.push_str("\nWhich candidate is most likely the original?");
    prompt
}

fn answer_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)answer:\s*\[\[\s*(\d+)\s*\]\]").expect("valid regex"))
}

/// Zero-based position from the first `answer: [[N]]` in `response`.
pub fn parse_judge_answer(response: &str, k: usize) -> Result<usize> {
    let caps = answer_pattern()
        .captures(response)
        .ok_or_else(|| AuditError::JudgeParse {
            message: "no `answer: [[N]]` found".to_string(),
            raw: response.to_string(),
        })?;
    let n: usize = caps[1].parse().map_err(|_| AuditError::JudgeParse {
        message: format!("answer {:?} is not a number", &caps[1]),
        raw: response.to_string(),
    })?;
    if n == 0 || n > k {
        return Err(AuditError::JudgeParse {
            message: format!("answer {n} outside 1..={k}"),
            raw: response.to_string(),
        });
    }
    Ok(n - 1)
}

/// Counting semaphore bounding requests in flight.
struct Gate {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.available.lock().expect("gate poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("gate poisoned") += 1;
        self.0.freed.notify_one();
    }
}

/// HTTP client for the judge, safe to share across worker threads.
pub struct RemoteJudge {
    config: RemoteJudgeConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteJudge {
    pub fn new(config: RemoteJudgeConfig) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(true)
            .build()
            .into();
        let gate = Gate::new(config.max_in_flight);
        Ok(Self {
            config,
            agent,
            gate,
        })
    }

    pub fn config(&self) -> &RemoteJudgeConfig {
        &self.config
    }

    fn request_once(&self, body: &serde_json::Value) -> std::result::Result<String, String> {
        let _slot = self.gate.acquire();
        let mut req = self.agent.post(self.config.endpoint());
        if let Ok(key) = std::env::var(&self.config.api_key_env_var) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("invalid response body: {e}"))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }

    /// Sends the prompt and returns the first choice's message content,
    /// retrying transport failures up to `max_retries` times.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        });
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.request_once(&body) {
                Ok(content) => return Ok(content),
                Err(e) => {
                    log::warn!("judge request attempt {} failed: {e}", attempt + 1);
                    last = e;
                    if attempt + 1 < attempts {
                        std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                    }
                }
            }
        }
        Err(AuditError::JudgeNetwork {
            attempts,
            message: last,
        })
    }
}

/// Asks the judge which candidate produced `output`.
pub fn attack_remote_judge(
    output: &TextRecord,
    candidates: &CandidateSet,
    corpus: &Corpus,
    judge: &RemoteJudge,
) -> Result<usize> {
    let y_text = corpus
        .render(output)
        .ok_or_else(|| AuditError::domain("output has no text and no vocabulary to render it"))?;
    let texts = candidates
        .members
        .iter()
        .map(|&id| {
            corpus.render(corpus.record(id)).ok_or_else(|| {
                AuditError::domain(format!("candidate {id} has no text to show the judge"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let prompt = render_judge_prompt(&y_text, &texts);
    let response = judge.complete(&prompt)?;
    parse_judge_answer(&response, candidates.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_contract() {
        assert_eq!(parse_judge_answer("answer: [[2]]", 2).unwrap(), 1);
        assert_eq!(
            parse_judge_answer("I think the first.\nanswer: [[1]]\nanswer: [[2]]", 2).unwrap(),
            0
        );
        assert!(matches!(
            parse_judge_answer("answer: [[5]]", 2),
            Err(AuditError::JudgeParse { .. })
        ));
        assert!(parse_judge_answer("answer: [[0]]", 2).is_err());
        let err = parse_judge_answer("no idea", 2).unwrap_err();
        assert!(err.to_string().contains("no idea"));
    }

    #[test]
    fn prompt_layout() {
        let p = render_judge_prompt("the cat", &["a cat".into(), "a dog".into()]);
        assert!(p.starts_with("You are given a rewritten text Y"));
        assert!(p.contains("answer: [[N]], where N ∈ {1,…,2}."));
        assert!(p.contains("Rewritten text Y:\nthe cat\n"));
        assert!(p.contains("Candidate original texts:\n1. a cat\n2. a dog\n"));
        assert!(p.ends_with("Which candidate is most likely the original?"));
    }

    #[test]
    fn config_validation() {
        let mut c = RemoteJudgeConfig::new("http://localhost:1", "m");
        assert!(c.validate().is_ok());
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
        assert_eq!(
            RemoteJudgeConfig::new("http://h/v1/", "m").endpoint(),
            "http://h/v1/chat/completions"
        );
    }
}
