//! Plain-text `key = value` configuration shared by the simulator, trainer,
//! executor and CLI.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so a
//! typo never silently falls back to a default.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment parameters. Physical quantities are given in metres and
/// seconds and normalized by `arena_side_m` when the world is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_robots: usize,
    pub n_tasks: usize,
    pub arena_side_m: f64,
    pub tau_s: f64,
    pub robot_speed_min: f64,
    pub robot_speed_max: f64,
    pub task_speed_min: f64,
    pub task_speed_max: f64,
    pub d_bind_m: f64,
    pub alpha_max: usize,
    pub max_steps: usize,
    pub phi1: f64,
    pub phi2_mag: f64,
    pub phi3: f64,
    /// Overrides the default per-task capacity of ceil(N / M).
    pub task_capacity: Option<usize>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_robots: 30,
            n_tasks: 5,
            arena_side_m: 1000.0,
            tau_s: 1.0,
            robot_speed_min: 2.0,
            robot_speed_max: 5.0,
            task_speed_min: 0.5,
            task_speed_max: 1.0,
            d_bind_m: 30.0,
            alpha_max: 10,
            max_steps: 150,
            phi1: 10.0,
            phi2_mag: 0.001,
            phi3: 1.0,
            task_capacity: None,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_robots == 0 {
            return bad("n_robots must be positive");
        }
        if self.n_tasks == 0 {
            return bad("n_tasks must be positive");
        }
        if !(self.arena_side_m > 0.0) {
            return bad("arena_side_m must be positive");
        }
        if !(self.tau_s > 0.0) {
            return bad("tau_s must be positive");
        }
        if !(self.robot_speed_min > 0.0) || self.robot_speed_max < self.robot_speed_min {
            return bad("robot speeds must satisfy 0 < robot_speed_min <= robot_speed_max");
        }
        if self.task_speed_min < 0.0 || self.task_speed_max < self.task_speed_min {
            return bad("task speeds must satisfy 0 <= task_speed_min <= task_speed_max");
        }
        if !(self.d_bind_m > 0.0) {
            return bad("d_bind_m must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.task_capacity == Some(0) {
            return bad("task_capacity must be positive");
        }
        if !self.phi1.is_finite() || !self.phi2_mag.is_finite() || !self.phi3.is_finite() {
            return bad("reward coefficients must be finite");
        }
        Ok(())
    }

    /// Per-task capacity h̄.
    pub fn capacity(&self) -> usize {
        self.task_capacity
            .unwrap_or_else(|| self.n_robots.div_ceil(self.n_tasks))
    }

    pub fn d_bind(&self) -> f64 {
        self.d_bind_m / self.arena_side_m
    }

    /// Observation width: 5 + 6M + 5α + α.
    pub fn obs_dim(&self) -> usize {
        crate::world::ObsLayout::new(self.n_tasks, self.alpha_max).dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub eta: f64,
    pub episodes: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the run over which ε decays linearly.
    pub eps_decay_fraction: f64,
    pub prioritized: bool,
    pub hidden_dims: Vec<usize>,
    pub residual: bool,
    pub batch_norm: bool,
    /// LIA distance exponent.
    pub beta: f64,
    /// Environment steps per update round; 1 runs a round after every step.
    pub update_every: usize,
    /// Weight of the entropy bonus in the actor objective (0 = off).
    pub entropy_coef: f64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            batch_size: 64,
            actor_lr: 0.002,
            critic_lr: 0.001,
            eta: 0.01,
            episodes: 3000,
            buffer_capacity: 5000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.5,
            prioritized: false,
            hidden_dims: vec![128, 128],
            residual: true,
            batch_norm: false,
            beta: -1.0,
            update_every: 1,
            entropy_coef: 0.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be positive");
        }
        for eps in [self.eps_start, self.eps_end] {
            if !(0.0..=1.0).contains(&eps) {
                return bad("exploration rates must lie in [0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.eps_decay_fraction) {
            return bad("eps_decay_fraction must lie in [0, 1]");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be non-negative");
        }
        if self.update_every == 0 {
            return bad("update_every must be positive");
        }
        Ok(())
    }

    /// Linear decay from `eps_start` to `eps_end` over the first
    /// `eps_decay_fraction` of the run, constant afterwards.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = self.eps_decay_fraction * self.episodes as f64;
        if horizon <= 0.0 {
            return self.eps_end;
        }
        let frac = (episode as f64 / horizon).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Multiplier applied to arena-unit distances in the fallback and greedy
    /// scores so they are commensurate with φ₁·r.
    pub distance_scale: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            distance_scale: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub world: WorldConfig,
    pub trainer: TrainerConfig,
    pub exec: ExecConfig,
    pub seed: u64,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.world;
        let t = &mut self.trainer;
        match key {
            "n_robots" => w.n_robots = parse_num(key, value)?,
            "n_tasks" => w.n_tasks = parse_num(key, value)?,
            "arena_side_m" => w.arena_side_m = parse_num(key, value)?,
            "tau_s" => w.tau_s = parse_num(key, value)?,
            "robot_speed_min" => w.robot_speed_min = parse_num(key, value)?,
            "robot_speed_max" => w.robot_speed_max = parse_num(key, value)?,
            "task_speed_min" => w.task_speed_min = parse_num(key, value)?,
            "task_speed_max" => w.task_speed_max = parse_num(key, value)?,
            "d_bind_m" => w.d_bind_m = parse_num(key, value)?,
            "alpha_max" => w.alpha_max = parse_num(key, value)?,
            "max_steps" => w.max_steps = parse_num(key, value)?,
            "phi1" => w.phi1 = parse_num(key, value)?,
            "phi2_mag" => w.phi2_mag = parse_num(key, value)?,
            "phi3" => w.phi3 = parse_num(key, value)?,
            "task_capacity" => {
                w.task_capacity = match value {
                    "auto" | "" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "gamma" => t.gamma = parse_num(key, value)?,
            "batch_size" => t.batch_size = parse_num(key, value)?,
            "actor_lr" => t.actor_lr = parse_num(key, value)?,
            "critic_lr" => t.critic_lr = parse_num(key, value)?,
            "eta" => t.eta = parse_num(key, value)?,
            "episodes" => t.episodes = parse_num(key, value)?,
            "buffer_capacity" => t.buffer_capacity = parse_num(key, value)?,
            "eps_start" => t.eps_start = parse_num(key, value)?,
            "eps_end" => t.eps_end = parse_num(key, value)?,
            "eps_decay_fraction" => t.eps_decay_fraction = parse_num(key, value)?,
            "prioritized" => t.prioritized = parse_bool(key, value)?,
            "hidden_dims" => {
                t.hidden_dims = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?
            }
            "residual" => t.residual = parse_bool(key, value)?,
            "batch_norm" => t.batch_norm = parse_bool(key, value)?,
            "beta" => t.beta = parse_num(key, value)?,
            "update_every" => t.update_every = parse_num(key, value)?,
            "entropy_coef" => t.entropy_coef = parse_num(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse_num(key, value)?,
            "distance_scale" => self.exec.distance_scale = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.trainer.validate()?;
        if !(self.exec.distance_scale >= 0.0) {
            return Err(Error::Config("distance_scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Render back to the `key = value` form accepted by [`Config::parse`].
    pub fn to_text(&self) -> String {
        let w = &self.world;
        let t = &self.trainer;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("n_robots", w.n_robots.to_string());
        kv("n_tasks", w.n_tasks.to_string());
        kv("arena_side_m", w.arena_side_m.to_string());
        kv("tau_s", w.tau_s.to_string());
        kv("robot_speed_min", w.robot_speed_min.to_string());
        kv("robot_speed_max", w.robot_speed_max.to_string());
        kv("task_speed_min", w.task_speed_min.to_string());
        kv("task_speed_max", w.task_speed_max.to_string());
        kv("d_bind_m", w.d_bind_m.to_string());
        kv("alpha_max", w.alpha_max.to_string());
        kv("max_steps", w.max_steps.to_string());
        kv("phi1", w.phi1.to_string());
        kv("phi2_mag", w.phi2_mag.to_string());
        kv("phi3", w.phi3.to_string());
        kv(
            "task_capacity",
            w.task_capacity.map_or("auto".to_string(), |c| c.to_string()),
        );
        kv("seed", self.seed.to_string());
        kv("gamma", t.gamma.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("actor_lr", t.actor_lr.to_string());
        kv("critic_lr", t.critic_lr.to_string());
        kv("eta", t.eta.to_string());
        kv("episodes", t.episodes.to_string());
        kv("buffer_capacity", t.buffer_capacity.to_string());
        kv("eps_start", t.eps_start.to_string());
        kv("eps_end", t.eps_end.to_string());
        kv("eps_decay_fraction", t.eps_decay_fraction.to_string());
        kv("prioritized", t.prioritized.to_string());
        kv(
            "hidden_dims",
            t.hidden_dims
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("residual", t.residual.to_string());
        kv("batch_norm", t.batch_norm.to_string());
        kv("beta", t.beta.to_string());
        kv("update_every", t.update_every.to_string());
        kv("entropy_coef", t.entropy_coef.to_string());
        kv("checkpoint_every", t.checkpoint_every.to_string());
        kv("distance_scale", self.exec.distance_scale.to_string());
        s
    }
}
