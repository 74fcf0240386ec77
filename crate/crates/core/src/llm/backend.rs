use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{parse_program, pretty_print, RewardProgram};
use crate::seed;

use super::prompt::{PromptBundle, FEEDBACK_SECTION, REPAIR_SECTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    /// Candidate slot and attempt, so stateless backends can key randomness on them.
    pub slot: usize,
    pub attempt: usize,
}

impl CompletionRequest {
    pub fn from_bundle(bundle: &PromptBundle, temperature: f64, slot: usize, attempt: usize) -> Self {
        Self { system: bundle.system_text.clone(), user: bundle.user_text(), temperature, slot, attempt }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("malformed response: {0}")]
    Response(String),
}

/// Text in, completion out. Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
    /// Number of network requests issued so far.
    fn network_requests(&self) -> usize {
        0
    }
}

/// Offline stand-in for a language model.
///
/// Output depends only on `(seed, slot, attempt, prompt text)`. Without a
/// best-program section in the prompt it samples from a fixed family of
/// survival, tracking, balance, and effort terms; with one it perturbs that
/// program. `fault_rate` of fresh completions are malformed; a repair prompt
/// that carries an error diagnostic is answered correctly with probability
/// `repair_rate`.
#[derive(Debug)]
pub struct MockBackend {
    pub seed: u64,
    pub fault_rate: f64,
    pub repair_rate: f64,
    calls: AtomicUsize,
}

pub const BEST_PROGRAM_HEADER: &str = "Best program so far:";

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_faults(seed, 0.0, 0.9)
    }

    pub fn with_faults(seed: u64, fault_rate: f64, repair_rate: f64) -> Self {
        Self { seed, fault_rate, repair_rate, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn program_text(&self, rng: &mut impl Rng, user: &str) -> String {
        match find_best_program(user) {
            Some(best) => pretty_print(&perturb(&best, rng)),
            None => template_program(rng),
        }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        format!("mock(seed={}, fault_rate={}, repair_rate={})", self.seed, self.fault_rate, self.repair_rate)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let digest = Sha256::digest(format!("{}\u{0}{}", request.system, request.user).as_bytes());
        let prompt_key = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = seed::rng(self.seed, &[seed::GENERATION, request.slot as u64, request.attempt as u64, prompt_key]);

        let repair = repair_diagnostic(&request.user);
        let ok = match repair {
            Some(diag) if !diag.trim().is_empty() => rng.random_bool(self.repair_rate.clamp(0.0, 1.0)),
            _ => !rng.random_bool(self.fault_rate.clamp(0.0, 1.0)),
        };
        let body = self.program_text(&mut rng, &request.user);
        if ok {
            Ok(format!("Here is a reward program for the task.\n\n```reward\n{body}```\n"))
        } else {
            Ok(corrupt(&body, &mut rng))
        }
    }
}

/// Text of the error part of a repair section, if the prompt has one.
fn repair_diagnostic(user: &str) -> Option<&str> {
    let start = user.find(&format!("## {REPAIR_SECTION}"))?;
    let rest = &user[start..];
    let err = rest.find("Error:\n")?;
    Some(&rest[err + 7..])
}

/// Program following the last best-program header inside feedback.
pub fn find_best_program(user: &str) -> Option<RewardProgram> {
    let fb = user.find(&format!("## {FEEDBACK_SECTION}"))?;
    let text = &user[fb..];
    let pos = text.rfind(BEST_PROGRAM_HEADER)?;
    let after = &text[pos..];
    let open = after.find("```")?;
    let body_start = open + after[open..].find('\n')? + 1;
    let close = after[body_start..].find("```")?;
    parse_program(&after[body_start..body_start + close]).ok()
}

struct TemplateTerm {
    name: &'static str,
    /// `{s}` is replaced by a sampled width parameter.
    expr: &'static str,
    scale: (f64, f64),
}

const FAMILY: [TemplateTerm; 8] = [
    TemplateTerm { name: "survival", expr: "survival_dt", scale: (20.0, 80.0) },
    TemplateTerm { name: "track_lin_vel", expr: "exp(-norm2(base_lin_vel - cmd_lin_vel) / {s})", scale: (0.5, 2.0) },
    TemplateTerm { name: "track_ang_vel", expr: "exp(-norm2(base_ang_vel - cmd_ang_vel) / {s})", scale: (0.2, 1.0) },
    TemplateTerm { name: "balance", expr: "square(pitch)", scale: (-4.0, -0.5) },
    TemplateTerm { name: "torque", expr: "square(applied_torque)", scale: (-0.05, -0.005) },
    TemplateTerm { name: "action_rate", expr: "square(last_action - applied_torque)", scale: (-0.05, -0.005) },
    TemplateTerm { name: "pitch_rate", expr: "square(base_ang_vel)", scale: (-0.2, -0.01) },
    TemplateTerm {
        name: "success",
        expr: "survival_dt * (2 * exp(-norm2(base_lin_vel - cmd_lin_vel) / {s}) + exp(-norm2(base_ang_vel - cmd_ang_vel) / {s}))",
        scale: (5.0, 20.0),
    },
];

fn sample_term(t: &TemplateTerm, rng: &mut impl Rng) -> String {
    let scale = round4(rng.random_range(t.scale.0..=t.scale.1));
    let sigma = round4(rng.random_range(0.1..=0.5));
    format!("{}: {} * {}\n", t.name, scale, t.expr.replace("{s}", &sigma.to_string()))
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn template_program(rng: &mut impl Rng) -> String {
    let mut out = String::new();
    for (i, t) in FAMILY.iter().enumerate() {
        // survival and velocity tracking always, the rest at random
        if i < 2 || rng.random_bool(0.4) {
            out.push_str(&sample_term(t, rng));
        }
    }
    out
}

/// Scale jitter of up to 20% on every term, then one term dropped or added.
fn perturb(best: &RewardProgram, rng: &mut impl Rng) -> RewardProgram {
    let mut p = best.clone();
    for t in &mut p.terms {
        t.scale = round4(t.scale * rng.random_range(0.8..=1.2));
    }
    let missing: Vec<&TemplateTerm> = FAMILY.iter().filter(|f| p.terms.iter().all(|t| t.name != f.name)).collect();
    let drop = p.terms.len() > 2 && (missing.is_empty() || rng.random_bool(0.5));
    if drop {
        let i = rng.random_range(0..p.terms.len());
        p.terms.remove(i);
    } else if !missing.is_empty() {
        let t = missing[rng.random_range(0..missing.len())];
        let extra = parse_program(&sample_term(t, rng)).expect("template terms parse");
        p.terms.extend(extra.terms);
    }
    p
}

fn corrupt(body: &str, rng: &mut impl Rng) -> String {
    match rng.random_range(0..5) {
        0 => {
            // unbalanced parenthesis
            let broken = body.replacen(')', "", 1);
            let broken = if broken == body { format!("{body}broken: (1 + pitch\n") } else { broken };
            format!("```reward\n{broken}```\n")
        }
        1 => format!("```reward\n{body}foot_clearance: -1 * square(foot_height)\n```\n"),
        2 => {
            let first = body.lines().next().unwrap_or("survival: survival_dt");
            format!("```reward\n{body}{first}\n```\n")
        }
        3 => "I would reward the robot for staying upright and following the command.".to_string(),
        _ => format!("```reward\n{}\n```\n", body.replacen(':', " $", 1)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: usize,
    pub backoff_ms: u64,
    pub max_concurrent: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "REWARDLOOP_API_KEY".into(),
            timeout_secs: 120,
            max_attempts: 4,
            backoff_ms: 1000,
            max_concurrent: 4,
        }
    }
}

/// Chat-completion client with bounded concurrency and exponential backoff.
pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
    requests: AtomicUsize,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        if cfg.max_concurrent == 0 || cfg.max_attempts == 0 {
            return Err(BackendError::Config("max_concurrent and max_attempts must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, agent, in_flight: Mutex::new(0), slot_free: Condvar::new(), requests: AtomicUsize::new(0) })
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("semaphore lock");
        while *n >= self.cfg.max_concurrent {
            n = self.slot_free.wait(n).expect("semaphore lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("semaphore lock") -= 1;
        self.slot_free.notify_one();
    }

    fn post_once(&self, key: &str, body: &Value) -> Result<String, (bool, String)> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retry = status == 429 || status >= 500;
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((retry, format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| (false, e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (false, "missing choices[0].message.content".to_string()))
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http({}, {})", self.cfg.base_url, self.cfg.model)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let key = std::env::var(&self.cfg.api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable {} is not set", self.cfg.api_key_env)))?;
        let body = json!({
            "model": self.cfg.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut last = String::new();
        for attempt in 0..self.cfg.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms << (attempt - 1).min(10)));
            }
            self.acquire();
            let result = self.post_once(&key, &body);
            self.release();
            match result {
                Ok(text) => return Ok(text),
                Err((false, msg)) => return Err(BackendError::Response(msg)),
                Err((true, msg)) => last = msg,
            }
        }
        Err(BackendError::Transport { attempts: self.cfg.max_attempts, message: last })
    }

    fn network_requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}
