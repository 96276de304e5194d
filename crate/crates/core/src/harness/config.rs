use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    ActorAdvisor,
    DqnOnly,
    VanillaPg,
    DpgAdvice,
    OverrideAdvice,
    RewardShaping,
    TransferFresh,
    TransferSeeded,
    TransferAdvised,
    HumanAdvice,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::ActorAdvisor,
        ExperimentKind::DqnOnly,
        ExperimentKind::VanillaPg,
        ExperimentKind::DpgAdvice,
        ExperimentKind::OverrideAdvice,
        ExperimentKind::RewardShaping,
        ExperimentKind::TransferFresh,
        ExperimentKind::TransferSeeded,
        ExperimentKind::TransferAdvised,
        ExperimentKind::HumanAdvice,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ActorAdvisor => "actor_advisor",
            ExperimentKind::DqnOnly => "dqn_only",
            ExperimentKind::VanillaPg => "vanilla_pg",
            ExperimentKind::DpgAdvice => "dpg_advice",
            ExperimentKind::OverrideAdvice => "override_advice",
            ExperimentKind::RewardShaping => "reward_shaping",
            ExperimentKind::TransferFresh => "transfer_fresh",
            ExperimentKind::TransferSeeded => "transfer_seeded",
            ExperimentKind::TransferAdvised => "transfer_advised",
            ExperimentKind::HumanAdvice => "human_advice",
        }
    }

    pub fn uses_transfer_source(&self) -> bool {
        matches!(self, ExperimentKind::TransferSeeded | ExperimentKind::TransferAdvised)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvId {
    Table,
    Grid1,
    Grid2,
    FiveRooms,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Table => "table",
            EnvId::Grid1 => "grid1",
            EnvId::Grid2 => "grid2",
            EnvId::FiveRooms => "fiverooms",
        }
    }

    pub fn is_grid(&self) -> bool {
        !matches!(self, EnvId::Table)
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(EnvId::Table),
            "grid1" => Ok(EnvId::Grid1),
            "grid2" => Ok(EnvId::Grid2),
            "fiverooms" => Ok(EnvId::FiveRooms),
            other => Err(Error::Config(format!("unknown env '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvisorId {
    None,
    Backup,
    Heuristic,
    Combined,
    Human,
    Transfer,
    Critic,
    Teacher,
}

impl AdvisorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdvisorId::None => "none",
            AdvisorId::Backup => "backup",
            AdvisorId::Heuristic => "heuristic",
            AdvisorId::Combined => "combined",
            AdvisorId::Human => "human",
            AdvisorId::Transfer => "transfer",
            AdvisorId::Critic => "critic",
            AdvisorId::Teacher => "teacher",
        }
    }

    fn is_table(&self) -> bool {
        matches!(self, AdvisorId::Backup | AdvisorId::Heuristic | AdvisorId::Combined)
    }
}

impl fmt::Display for AdvisorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdvisorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AdvisorId::None,
            AdvisorId::Backup,
            AdvisorId::Heuristic,
            AdvisorId::Combined,
            AdvisorId::Human,
            AdvisorId::Transfer,
            AdvisorId::Critic,
            AdvisorId::Teacher,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown advisor '{s}'")))
    }
}

/// Declarative description of one experiment. `kinds` may list several
/// arms that share everything else; `arms()` splits them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kinds: Vec<ExperimentKind>,
    pub env: EnvId,
    pub advisor: Option<AdvisorId>,
    pub options: Option<bool>,
    pub runs: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Availability L of the human or the teacher.
    pub availability: Option<f64>,
    pub p_right: f64,
    pub budget: Option<u64>,
    pub wrong_option: Option<usize>,
    pub temperature: f64,
    pub actor_lr: f64,
    pub actor_hidden: usize,
    pub update_period: usize,
    pub critic_lr: f64,
    pub critic_hidden: usize,
    pub batch_size: usize,
    pub train_period: u64,
    pub target_sync: u64,
    pub buffer_capacity: usize,
    pub source: Option<PathBuf>,
    pub source_env: EnvId,
    pub source_seed: Option<u64>,
    pub source_episodes: usize,
    pub source_entropy: f64,
    pub source_lr: f64,
    pub source_update_period: usize,
    /// Inclusive 1-based episode window for summaries.
    pub window: Option<(usize, usize)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kinds: vec![ExperimentKind::VanillaPg],
            env: EnvId::Grid1,
            advisor: None,
            options: None,
            runs: 8,
            episodes: 1000,
            gamma: 0.99,
            seed: 0,
            availability: None,
            p_right: 1.0,
            budget: None,
            wrong_option: None,
            temperature: 0.1,
            actor_lr: 1e-4,
            actor_hidden: 100,
            update_period: 16,
            critic_lr: 1e-3,
            critic_hidden: 100,
            batch_size: 512,
            train_period: 16,
            target_sync: 1000,
            buffer_capacity: 20_000,
            source: None,
            source_env: EnvId::Grid1,
            source_seed: None,
            source_episodes: 40_000,
            source_entropy: 0.05,
            source_lr: 1e-3,
            source_update_period: 1,
            window: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "kind",
    "env",
    "advisor",
    "options",
    "runs",
    "episodes",
    "gamma",
    "seed",
    "availability",
    "p_right",
    "budget",
    "wrong_option",
    "temperature",
    "actor_lr",
    "actor_hidden",
    "update_period",
    "critic_lr",
    "critic_hidden",
    "batch_size",
    "train_period",
    "target_sync",
    "buffer_capacity",
    "source",
    "source_env",
    "source_seed",
    "source_episodes",
    "source_entropy",
    "source_lr",
    "source_update_period",
    "window",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

pub fn parse_window(value: &str) -> Result<(usize, usize)> {
    let (a, b) = value
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("window must be A:B, got '{value}'")))?;
    let a: usize = num("window", a.trim())?;
    let b: usize = num("window", b.trim())?;
    if a == 0 || b < a {
        return Err(Error::Config(format!("window {a}:{b} is empty or not 1-based")));
    }
    Ok((a, b))
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses, then applies `overrides` in order, then validates.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        for (k, v) in overrides {
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kind" => {
                self.kinds = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<_>>>()?;
            }
            "env" => self.env = value.parse()?,
            "advisor" => self.advisor = Some(value.parse()?),
            "options" => self.options = Some(num(key, value)?),
            "runs" => self.runs = num(key, value)?,
            "episodes" => self.episodes = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "availability" => self.availability = Some(num(key, value)?),
            "p_right" => self.p_right = num(key, value)?,
            "budget" => self.budget = optional(key, value)?,
            "wrong_option" => self.wrong_option = Some(num(key, value)?),
            "temperature" => self.temperature = num(key, value)?,
            "actor_lr" => self.actor_lr = num(key, value)?,
            "actor_hidden" => self.actor_hidden = num(key, value)?,
            "update_period" => self.update_period = num(key, value)?,
            "critic_lr" => self.critic_lr = num(key, value)?,
            "critic_hidden" => self.critic_hidden = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "train_period" => self.train_period = num(key, value)?,
            "target_sync" => self.target_sync = num(key, value)?,
            "buffer_capacity" => self.buffer_capacity = num(key, value)?,
            "source" => self.source = if value == "none" { None } else { Some(PathBuf::from(value)) },
            "source_env" => self.source_env = value.parse()?,
            "source_seed" => self.source_seed = optional(key, value)?,
            "source_episodes" => self.source_episodes = num(key, value)?,
            "source_entropy" => self.source_entropy = num(key, value)?,
            "source_lr" => self.source_lr = num(key, value)?,
            "source_update_period" => self.source_update_period = num(key, value)?,
            "window" => self.window = if value == "none" { None } else { Some(parse_window(value)?) },
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// One single-kind config per arm.
    pub fn arms(&self) -> Vec<ExperimentConfig> {
        self.kinds
            .iter()
            .map(|k| ExperimentConfig {
                kinds: vec![*k],
                ..self.clone()
            })
            .collect()
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        match self.kinds.as_slice() {
            [k] => Ok(*k),
            _ => Err(Error::Config("expected exactly one experiment kind".into())),
        }
    }

    pub fn uses_options(&self) -> bool {
        self.options.unwrap_or(self.env == EnvId::FiveRooms)
    }

    /// The advice source each kind is wired to. Only `dpg_advice` and
    /// `override_advice` read the `advisor` key; other kinds fix their own.
    pub fn resolved_advisor(&self, kind: ExperimentKind) -> Result<AdvisorId> {
        let implied = match kind {
            ExperimentKind::ActorAdvisor => Some(AdvisorId::Critic),
            ExperimentKind::DqnOnly
            | ExperimentKind::VanillaPg
            | ExperimentKind::TransferFresh
            | ExperimentKind::TransferSeeded => Some(AdvisorId::None),
            ExperimentKind::RewardShaping => Some(AdvisorId::Teacher),
            ExperimentKind::TransferAdvised => Some(AdvisorId::Transfer),
            ExperimentKind::HumanAdvice => Some(AdvisorId::Human),
            ExperimentKind::DpgAdvice | ExperimentKind::OverrideAdvice => None,
        };
        match (implied, self.advisor) {
            (Some(a), _) => Ok(a),
            (None, Some(b)) => Ok(b),
            (None, None) => Ok(if self.env.is_grid() {
                AdvisorId::Human
            } else {
                AdvisorId::Combined
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("no experiment kind given".into()));
        }
        if self.runs == 0 || self.episodes == 0 {
            return Err(Error::Config("runs and episodes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        for (k, p) in [("availability", self.availability.unwrap_or(0.0)), ("p_right", self.p_right)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{k} must be in [0, 1], got {p}")));
            }
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) || !(self.source_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.actor_hidden == 0 || self.critic_hidden == 0 {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if self.update_period == 0 || self.source_update_period == 0 || self.batch_size == 0 || self.train_period == 0 || self.target_sync == 0 {
            return Err(Error::Config("periods and batch size must be positive".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Config("buffer_capacity must be at least batch_size".into()));
        }
        if self.options == Some(true) && !self.env.is_grid() {
            return Err(Error::Config("options exist only on grid environments".into()));
        }
        if let Some((_, b)) = self.window {
            if b > self.episodes {
                return Err(Error::Config(format!(
                    "window end {b} exceeds episode count {}",
                    self.episodes
                )));
            }
        }
        for kind in &self.kinds {
            let advisor = self.resolved_advisor(*kind)?;
            let env_ok = match advisor {
                a if a.is_table() => !self.env.is_grid(),
                AdvisorId::Human | AdvisorId::Teacher | AdvisorId::Transfer => self.env.is_grid(),
                _ => true,
            };
            if !env_ok {
                return Err(Error::Config(format!("advisor {advisor} does not apply to env {}", self.env)));
            }
            if matches!(kind, ExperimentKind::DpgAdvice | ExperimentKind::OverrideAdvice)
                && matches!(advisor, AdvisorId::None | AdvisorId::Critic | AdvisorId::Teacher)
            {
                return Err(Error::Config(format!("kind {kind} needs a direct advisor, got {advisor}")));
            }
            if advisor == AdvisorId::Teacher && self.uses_options() {
                return Err(Error::Config("the reward-shaping teacher works on primitive actions only".into()));
            }
            if kind.uses_transfer_source() || advisor == AdvisorId::Transfer {
                if !self.env.is_grid() || !self.source_env.is_grid() {
                    return Err(Error::Config("transfer needs grid source and target environments".into()));
                }
                if self.uses_options() {
                    return Err(Error::Config("transfer works on primitive actions only".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical `key = value` text; parsing it yields an equal config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.as_str()).collect();
        line("kind", kinds.join(","));
        line("env", self.env.to_string());
        if let Some(a) = self.advisor {
            line("advisor", a.to_string());
        }
        if let Some(o) = self.options {
            line("options", o.to_string());
        }
        line("runs", self.runs.to_string());
        line("episodes", self.episodes.to_string());
        line("gamma", self.gamma.to_string());
        line("seed", self.seed.to_string());
        if let Some(l) = self.availability {
            line("availability", l.to_string());
        }
        line("p_right", self.p_right.to_string());
        line("budget", self.budget.map_or("none".into(), |b| b.to_string()));
        if let Some(w) = self.wrong_option {
            line("wrong_option", w.to_string());
        }
        line("temperature", self.temperature.to_string());
        line("actor_lr", self.actor_lr.to_string());
        line("actor_hidden", self.actor_hidden.to_string());
        line("update_period", self.update_period.to_string());
        line("critic_lr", self.critic_lr.to_string());
        line("critic_hidden", self.critic_hidden.to_string());
        line("batch_size", self.batch_size.to_string());
        line("train_period", self.train_period.to_string());
        line("target_sync", self.target_sync.to_string());
        line("buffer_capacity", self.buffer_capacity.to_string());
        line("source", self.source.as_ref().map_or("none".into(), |p| p.display().to_string()));
        line("source_env", self.source_env.to_string());
        line("source_seed", self.source_seed.map_or("none".into(), |s| s.to_string()));
        line("source_episodes", self.source_episodes.to_string());
        line("source_entropy", self.source_entropy.to_string());
        line("source_lr", self.source_lr.to_string());
        line("source_update_period", self.source_update_period.to_string());
        line("window", self.window.map_or("none".into(), |(a, b)| format!("{a}:{b}")));
        out
    }

    /// The configured window, or the last 100 episodes.
    pub fn summary_window(&self) -> (usize, usize) {
        self.window
            .unwrap_or((self.episodes.saturating_sub(99).max(1), self.episodes))
    }
}
