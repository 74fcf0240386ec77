use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::HomomorphismMap;
use crate::env::{default_homomorphism, deployment_schema, training_schema, EnvConfig, TaskLimits};
use crate::eval::{CriterionWeights, EvalGrid, SafetyMetric, SafetyRule};
use crate::llm::{GenerationConfig, HttpConfig};
use crate::policy::{PpoConfig, TeacherPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Probability that a first attempt is malformed.
    pub fault_rate: f64,
    /// Probability that a repair prompt yields a valid program.
    pub repair_rate: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { fault_rate: 0.0, repair_rate: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock: MockConfig,
    pub http: HttpConfig,
    pub generation: GenerationConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            mock: MockConfig::default(),
            http: HttpConfig::default(),
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSet {
    pub training: EnvConfig,
    pub gazebo_like: EnvConfig,
    pub real_like: EnvConfig,
}

impl Default for EnvSet {
    fn default() -> Self {
        Self { training: EnvConfig::training(), gazebo_like: EnvConfig::gazebo_like(), real_like: EnvConfig::real_like() }
    }
}

pub const DEFAULT_TASK: &str = "Write a reward program that makes the wheeled inverted pendulum track the \
commanded forward velocity while staying upright for the whole episode. Prefer smooth, low-torque behavior.";

pub const DEFAULT_ENV_DESCRIPTION: &str = "A two-wheeled balancing robot: a pendulum body on a wheel axle, \
driven by one wheel torque in [-3, 3] N*m. Control runs at 50 Hz. An episode lasts up to 10 s and ends early \
when |pitch| exceeds 0.6 rad. Commanded forward velocity is sampled in [-1, 1] m/s. Physical parameters are \
randomized during training.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub task: String,
    pub env_description: String,
    /// Reward program file used as the initial reference; relative to the config file.
    pub reference: Option<PathBuf>,
    pub token_budget: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            task: DEFAULT_TASK.into(),
            env_description: DEFAULT_ENV_DESCRIPTION.into(),
            reference: None,
            token_budget: 6000,
        }
    }
}

pub fn default_safety_rules() -> Vec<SafetyRule> {
    vec![
        SafetyRule { name: "pitch".into(), metric: SafetyMetric::MaxAbsPitch, limit: 0.35 },
        SafetyRule { name: "velocity".into(), metric: SafetyMetric::VelocityError, limit: 0.5 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameworkConfig {
    /// Outer loop iterations.
    pub iterations: usize,
    /// Reward candidates per iteration.
    pub candidates: usize,
    pub beta: f64,
    pub seed: u64,
    /// PPO iterations per candidate.
    pub ppo_iterations: usize,
    /// Replace the reference with each iteration's pick instead of keeping the historical best.
    pub strict_alg1: bool,
    /// Worker threads for candidate training and evaluation; 0 uses all cores.
    pub workers: usize,
    pub criterion: CriterionWeights,
    pub ppo: PpoConfig,
    pub limits: TaskLimits,
    pub envs: EnvSet,
    pub homomorphism: HomomorphismMap,
    pub safety: Vec<SafetyRule>,
    pub backend: BackendConfig,
    pub prompt: PromptConfig,
    /// Initial reference policy; its successors are the selected policies.
    /// Written as `kind = "none"` when absent.
    #[serde(with = "teacher_field")]
    pub teacher: Option<TeacherPolicy>,
    pub eval: EvalGrid,
}

mod teacher_field {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::policy::TeacherPolicy;

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
    enum Off {
        None,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Field {
        Off(Off),
        On(TeacherPolicy),
    }

    pub fn serialize<S: Serializer>(t: &Option<TeacherPolicy>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(p) => p.serialize(s),
            None => Off::None.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<TeacherPolicy>, D::Error> {
        Ok(match Field::deserialize(d)? {
            Field::Off(_) => None,
            Field::On(p) => Some(p),
        })
    }
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            candidates: 8,
            beta: 5.0,
            seed: 0,
            ppo_iterations: 100,
            strict_alg1: false,
            workers: 0,
            criterion: CriterionWeights::default(),
            ppo: PpoConfig::default(),
            limits: TaskLimits::default(),
            envs: EnvSet::default(),
            homomorphism: default_homomorphism(),
            safety: default_safety_rules(),
            backend: BackendConfig::default(),
            prompt: PromptConfig::default(),
            teacher: Some(TeacherPolicy::default_pd()),
            eval: EvalGrid::default(),
        }
    }
}

impl FrameworkConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: FrameworkConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Loads and validates; a relative reference path is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(r) = &cfg.prompt.reference {
            if r.is_relative() {
                cfg.prompt.reference = Some(path.parent().unwrap_or(Path::new(".")).join(r));
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| ConfigError::Io { path: path.into(), source })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.candidates == 0 {
            return bad("candidates must be at least 1".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        self.criterion.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo.validate().map_err(ConfigError::Invalid)?;
        self.homomorphism
            .check(&training_schema(), &deployment_schema())
            .map_err(|e| ConfigError::Invalid(format!("homomorphism: {e}")))?;
        for (name, env) in
            [("training", &self.envs.training), ("gazebo_like", &self.envs.gazebo_like), ("real_like", &self.envs.real_like)]
        {
            if env.substeps == 0 || !env.params.is_valid() {
                return bad(format!("envs.{name}: invalid physics parameters"));
            }
        }
        if self.eval.seeds.is_empty() || self.eval.commands.is_empty() {
            return bad("eval grid needs at least one seed and one command".into());
        }
        for r in &self.safety {
            if !r.limit.is_finite() {
                return bad(format!("safety rule `{}` has a non-finite limit", r.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = FrameworkConfig::default();
        cfg.criterion.c_obs.insert("max_abs_pitch".into(), -0.5);
        cfg.prompt.reference = Some("ref.reward".into());
        let text = cfg.to_toml().unwrap();
        let back = FrameworkConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
        let none = FrameworkConfig { teacher: None, ..FrameworkConfig::default() };
        assert!(none.to_toml().unwrap().contains("[teacher]\nkind = \"none\""));
        assert_eq!(FrameworkConfig::from_toml(&none.to_toml().unwrap()).unwrap(), none);
    }

    #[test]
    fn partial_files_take_defaults_and_unknown_keys_fail() {
        let cfg = FrameworkConfig::from_toml("iterations = 1\ncandidates = 4\n[ppo]\nnum_envs = 4\n").unwrap();
        assert_eq!(cfg.candidates, 4);
        assert_eq!(cfg.ppo.num_envs, 4);
        assert_eq!(cfg.ppo.epochs, PpoConfig::default().epochs);
        assert!(FrameworkConfig::from_toml("iteration = 1").is_err());
        assert!(FrameworkConfig::from_toml("[backend]\nkind = \"mock\"\nurl = 1").is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        for bad in ["iterations = 0", "candidates = 0", "beta = -1.0", "[criterion]\nc_e = 1.0\nc_bs = 1.5"] {
            assert!(matches!(FrameworkConfig::from_toml(bad), Err(ConfigError::Invalid(_))), "{bad}");
        }
    }
}
