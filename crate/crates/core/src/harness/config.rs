//! Experiment configuration: a small sectioned `key = value` text format
//! with typo-safe parsing (unknown keys are errors), full defaults, and an
//! exact round-trip through [`ExperimentConfig::to_text`].

use super::HarnessError;
use crate::heads::EntropyWeights;
use crate::learner::LearnerSettings;
use crate::world::{Scenario, ScenarioConfig};
use std::path::Path;

/// Which learner variant a team trains with: `mahsac` critics condition on
/// every agent's observations and actions, `ihsac` critics see only their
/// own agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mahsac,
    Ihsac,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mahsac => "mahsac",
            Algorithm::Ihsac => "ihsac",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        match s {
            "mahsac" => Some(Algorithm::Mahsac),
            "ihsac" => Some(Algorithm::Ihsac),
            _ => None,
        }
    }

    pub fn centralized(self) -> bool {
        matches!(self, Algorithm::Mahsac)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // [experiment]
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub predator_algorithm: Algorithm,
    pub prey_algorithm: Algorithm,
    pub episodes: u64,
    pub seed: u64,
    pub eval_episodes: u64,
    // [learner]
    pub gamma: f64,
    pub tau: f64,
    pub alpha_d: f64,
    pub alpha_c: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub update_period: u64,
    pub hidden: usize,
    // [env]
    pub episode_length: u32,
    pub dt: f64,
    pub damping: f64,
    pub max_force: f64,
    pub contact_stiffness: f64,
    pub agent_radius: f64,
    pub landmark_radius: f64,
    pub predator_radius: f64,
    pub prey_radius: f64,
    pub obstacle_radius: f64,
    pub predator_max_speed: f64,
    pub prey_max_speed: f64,
    // [output]
    pub metrics_path: String,
    pub checkpoint_path: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = ScenarioConfig::new(Scenario::CoopNav);
        ExperimentConfig {
            scenario: Scenario::CoopNav,
            algorithm: Algorithm::Mahsac,
            predator_algorithm: Algorithm::Mahsac,
            prey_algorithm: Algorithm::Mahsac,
            episodes: 20_000,
            seed: 0,
            eval_episodes: 1_000,
            gamma: 0.95,
            tau: 0.01,
            alpha_d: 0.2,
            alpha_c: 0.2,
            lr: 3e-4,
            batch_size: 128,
            buffer_capacity: 1_000_000,
            warmup: 1_024,
            update_period: 5,
            hidden: 64,
            episode_length: env.episode_length,
            dt: env.dt,
            damping: env.damping,
            max_force: env.max_force,
            contact_stiffness: env.contact_stiffness,
            agent_radius: env.agent_radius,
            landmark_radius: env.landmark_radius,
            predator_radius: env.predator_radius,
            prey_radius: env.prey_radius,
            obstacle_radius: env.obstacle_radius,
            predator_max_speed: env.predator_max_speed,
            prey_max_speed: env.prey_max_speed,
            metrics_path: "metrics.csv".to_string(),
            checkpoint_path: "checkpoint.txt".to_string(),
        }
    }
}

fn bad_value(key: &str, line: usize, detail: &str) -> HarnessError {
    HarnessError::Config(format!(
        "invalid value for '{key}' at line {line}: {detail}"
    ))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| bad_value(key, line, &e.to_string()))
}

impl ExperimentConfig {
    /// Parses a config file.  A missing or empty file is every default.
    pub fn parse_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        let mut predator_explicit = false;
        let mut prey_explicit = false;
        let mut section: Option<&str> = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    HarnessError::Config(format!(
                        "malformed section header at line {line_no}: '{line}'"
                    ))
                })?;
                section = Some(match name {
                    "experiment" => "experiment",
                    "learner" => "learner",
                    "env" => "env",
                    "output" => "output",
                    other => {
                        return Err(HarnessError::Config(format!(
                            "unknown section '[{other}]' at line {line_no}"
                        )))
                    }
                });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!(
                    "malformed line {line_no}: expected 'key = value', got '{line}'"
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let section = section.ok_or_else(|| {
                HarnessError::Config(format!(
                    "key '{key}' outside any section at line {line_no}"
                ))
            })?;

            match (section, key) {
                ("experiment", "scenario") => {
                    cfg.scenario = Scenario::parse(value).ok_or_else(|| {
                        bad_value(key, line_no, "expected coop_nav or predator_prey")
                    })?;
                }
                ("experiment", "algorithm") => {
                    cfg.algorithm = Algorithm::parse(value)
                        .ok_or_else(|| bad_value(key, line_no, "expected mahsac or ihsac"))?;
                }
                ("experiment", "predator_algorithm") => {
                    cfg.predator_algorithm = Algorithm::parse(value)
                        .ok_or_else(|| bad_value(key, line_no, "expected mahsac or ihsac"))?;
                    predator_explicit = true;
                }
                ("experiment", "prey_algorithm") => {
                    cfg.prey_algorithm = Algorithm::parse(value)
                        .ok_or_else(|| bad_value(key, line_no, "expected mahsac or ihsac"))?;
                    prey_explicit = true;
                }
                ("experiment", "episodes") => cfg.episodes = parse_num(key, value, line_no)?,
                ("experiment", "seed") => cfg.seed = parse_num(key, value, line_no)?,
                ("experiment", "eval_episodes") => {
                    cfg.eval_episodes = parse_num(key, value, line_no)?
                }
                ("learner", "gamma") => cfg.gamma = parse_num(key, value, line_no)?,
                ("learner", "tau") => cfg.tau = parse_num(key, value, line_no)?,
                ("learner", "alpha_d") => cfg.alpha_d = parse_num(key, value, line_no)?,
                ("learner", "alpha_c") => cfg.alpha_c = parse_num(key, value, line_no)?,
                ("learner", "lr") => cfg.lr = parse_num(key, value, line_no)?,
                ("learner", "batch_size") => cfg.batch_size = parse_num(key, value, line_no)?,
                ("learner", "buffer_capacity") => {
                    cfg.buffer_capacity = parse_num(key, value, line_no)?
                }
                ("learner", "warmup") => cfg.warmup = parse_num(key, value, line_no)?,
                ("learner", "update_period") => {
                    cfg.update_period = parse_num(key, value, line_no)?
                }
                ("learner", "hidden") => cfg.hidden = parse_num(key, value, line_no)?,
                ("env", "episode_length") => cfg.episode_length = parse_num(key, value, line_no)?,
                ("env", "dt") => cfg.dt = parse_num(key, value, line_no)?,
                ("env", "damping") => cfg.damping = parse_num(key, value, line_no)?,
                ("env", "max_force") => cfg.max_force = parse_num(key, value, line_no)?,
                ("env", "contact_stiffness") => {
                    cfg.contact_stiffness = parse_num(key, value, line_no)?
                }
                ("env", "agent_radius") => cfg.agent_radius = parse_num(key, value, line_no)?,
                ("env", "landmark_radius") => {
                    cfg.landmark_radius = parse_num(key, value, line_no)?
                }
                ("env", "predator_radius") => {
                    cfg.predator_radius = parse_num(key, value, line_no)?
                }
                ("env", "prey_radius") => cfg.prey_radius = parse_num(key, value, line_no)?,
                ("env", "obstacle_radius") => {
                    cfg.obstacle_radius = parse_num(key, value, line_no)?
                }
                ("env", "predator_max_speed") => {
                    cfg.predator_max_speed = parse_num(key, value, line_no)?
                }
                ("env", "prey_max_speed") => {
                    cfg.prey_max_speed = parse_num(key, value, line_no)?
                }
                ("output", "metrics_path") => cfg.metrics_path = value.to_string(),
                ("output", "checkpoint_path") => cfg.checkpoint_path = value.to_string(),
                (section, key) => {
                    return Err(HarnessError::Config(format!(
                        "unknown key '{key}' in section [{section}] at line {line_no}"
                    )))
                }
            }
        }

        // Team algorithms follow the main algorithm unless set explicitly.
        if !predator_explicit {
            cfg.predator_algorithm = cfg.algorithm;
        }
        if !prey_explicit {
            cfg.prey_algorithm = cfg.algorithm;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.episodes == 0 {
            return fail("episodes must be positive".into());
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if !(self.alpha_d >= 0.0 && self.alpha_d.is_finite()) {
            return fail(format!("alpha_d must be finite and >= 0, got {}", self.alpha_d));
        }
        if !(self.alpha_c >= 0.0 && self.alpha_c.is_finite()) {
            return fail(format!("alpha_c must be finite and >= 0, got {}", self.alpha_c));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be finite and positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return fail(format!(
                "buffer_capacity {} is smaller than batch_size {}",
                self.buffer_capacity, self.batch_size
            ));
        }
        if self.warmup == 0 {
            return fail("warmup must be positive".into());
        }
        if self.update_period == 0 {
            return fail("update_period must be positive".into());
        }
        if self.hidden == 0 {
            return fail("hidden must be positive".into());
        }
        if self.metrics_path.is_empty() || self.checkpoint_path.is_empty() {
            return fail("output paths must be non-empty".into());
        }
        self.scenario_config().validate()?;
        Ok(())
    }

    /// The world parameters this experiment runs with.
    pub fn scenario_config(&self) -> ScenarioConfig {
        let mut env = ScenarioConfig::new(self.scenario);
        env.episode_length = self.episode_length;
        env.dt = self.dt;
        env.damping = self.damping;
        env.max_force = self.max_force;
        env.contact_stiffness = self.contact_stiffness;
        env.agent_radius = self.agent_radius;
        env.landmark_radius = self.landmark_radius;
        env.predator_radius = self.predator_radius;
        env.prey_radius = self.prey_radius;
        env.obstacle_radius = self.obstacle_radius;
        env.predator_max_speed = self.predator_max_speed;
        env.prey_max_speed = self.prey_max_speed;
        env
    }

    pub fn learner_settings(&self) -> LearnerSettings {
        LearnerSettings {
            gamma: self.gamma,
            weights: EntropyWeights {
                alpha_d: self.alpha_d,
                alpha_c: self.alpha_c,
            },
            lr: self.lr,
            hidden: self.hidden,
        }
    }

    /// Which algorithm drives each agent slot.  Cooperative navigation has
    /// one team; predator-prey splits at the prey index.
    pub fn algorithm_for_agent(&self, agent: usize, prey_index: Option<usize>) -> Algorithm {
        match self.scenario {
            Scenario::CoopNav => self.algorithm,
            Scenario::PredatorPrey => {
                if Some(agent) == prey_index {
                    self.prey_algorithm
                } else {
                    self.predator_algorithm
                }
            }
        }
    }

    /// The exact text form that re-parses to this config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[experiment]\n");
        s.push_str(&format!("scenario = {}\n", self.scenario.name()));
        s.push_str(&format!("algorithm = {}\n", self.algorithm.name()));
        s.push_str(&format!(
            "predator_algorithm = {}\n",
            self.predator_algorithm.name()
        ));
        s.push_str(&format!("prey_algorithm = {}\n", self.prey_algorithm.name()));
        s.push_str(&format!("episodes = {}\n", self.episodes));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("eval_episodes = {}\n", self.eval_episodes));
        s.push_str("\n[learner]\n");
        s.push_str(&format!("gamma = {:?}\n", self.gamma));
        s.push_str(&format!("tau = {:?}\n", self.tau));
        s.push_str(&format!("alpha_d = {:?}\n", self.alpha_d));
        s.push_str(&format!("alpha_c = {:?}\n", self.alpha_c));
        s.push_str(&format!("lr = {:?}\n", self.lr));
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("buffer_capacity = {}\n", self.buffer_capacity));
        s.push_str(&format!("warmup = {}\n", self.warmup));
        s.push_str(&format!("update_period = {}\n", self.update_period));
        s.push_str(&format!("hidden = {}\n", self.hidden));
        s.push_str("\n[env]\n");
        s.push_str(&format!("episode_length = {}\n", self.episode_length));
        s.push_str(&format!("dt = {:?}\n", self.dt));
        s.push_str(&format!("damping = {:?}\n", self.damping));
        s.push_str(&format!("max_force = {:?}\n", self.max_force));
        s.push_str(&format!("contact_stiffness = {:?}\n", self.contact_stiffness));
        s.push_str(&format!("agent_radius = {:?}\n", self.agent_radius));
        s.push_str(&format!("landmark_radius = {:?}\n", self.landmark_radius));
        s.push_str(&format!("predator_radius = {:?}\n", self.predator_radius));
        s.push_str(&format!("prey_radius = {:?}\n", self.prey_radius));
        s.push_str(&format!("obstacle_radius = {:?}\n", self.obstacle_radius));
        s.push_str(&format!(
            "predator_max_speed = {:?}\n",
            self.predator_max_speed
        ));
        s.push_str(&format!("prey_max_speed = {:?}\n", self.prey_max_speed));
        s.push_str("\n[output]\n");
        s.push_str(&format!("metrics_path = {}\n", self.metrics_path));
        s.push_str(&format!("checkpoint_path = {}\n", self.checkpoint_path));
        s
    }
}
