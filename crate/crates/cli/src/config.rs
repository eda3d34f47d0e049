//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. A file is resolved in three
//! layers: the profile's defaults, then the file, then command-line
//! overrides. `RunConfig::to_text` writes every key, so an echoed file
//! parses back to the same config.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;
use toc_core::agent::{Learner, SacConfig, TrainerConfig};
use toc_core::curiosity::FeatureMode;
use toc_core::env::{ObjectSource, ShapeSplit, Task};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Invalid { origin: Origin, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Where an offending value came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Line(usize),
    Flag(String),
    Resolved,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag(name) => write!(f, "--{name}"),
            Origin::Resolved => f.write_str("config"),
        }
    }
}

fn invalid(origin: &Origin, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        origin: origin.clone(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Full-size images and the published training budget.
    Paper,
    /// 42x42 images and a 50k-step budget that fits on a workstation.
    Desk,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile `{other}` (expected paper or desk)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objects {
    Cube,
    TrainShapes,
    EvalShapes,
}

impl Objects {
    pub fn name(self) -> &'static str {
        match self {
            Objects::Cube => "cube",
            Objects::TrainShapes => "train-shapes",
            Objects::EvalShapes => "eval-shapes",
        }
    }

    pub fn source(self, shape_seed: u64) -> ObjectSource {
        match self {
            Objects::Cube => ObjectSource::Cube,
            Objects::TrainShapes => ObjectSource::Bank {
                master_seed: shape_seed,
                split: ShapeSplit::Train,
            },
            Objects::EvalShapes => ObjectSource::Bank {
                master_seed: shape_seed,
                split: ShapeSplit::Eval,
            },
        }
    }
}

impl FromStr for Objects {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cube" => Ok(Objects::Cube),
            "train-shapes" => Ok(Objects::TrainShapes),
            "eval-shapes" => Ok(Objects::EvalShapes),
            other => Err(format!("unknown object source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub task: Task,
    pub variants: Vec<Learner>,
    pub seeds: Vec<u64>,
    /// Relative to the output root.
    pub output_dir: String,
    pub image_size: usize,
    pub horizon: usize,
    pub objects: Objects,
    pub shape_seed: u64,
    pub lambda: f64,
    pub feature_mode: FeatureMode,
    pub total_steps: u64,
    pub exploration_steps: u64,
    pub warmup_steps: u64,
    pub update_every: u64,
    pub curiosity_lr: f64,
    pub adaptation_lr: Option<f64>,
    pub adaptation_alpha: Option<f64>,
    pub log_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub sac: SacConfig,
}

/// Every key, in echo order.
pub const KEYS: [&str; 32] = [
    "profile",
    "task",
    "variant",
    "seeds",
    "output_dir",
    "image_size",
    "horizon",
    "objects",
    "shape_seed",
    "lambda",
    "feature_mode",
    "total_steps",
    "exploration_steps",
    "warmup_steps",
    "update_every",
    "curiosity_lr",
    "adaptation_lr",
    "adaptation_alpha",
    "log_interval",
    "eval_interval",
    "eval_episodes",
    "lr",
    "batch",
    "reward_scale",
    "buffer_capacity",
    "hidden_units",
    "hidden_layers",
    "gamma",
    "tau",
    "target_entropy",
    "initial_alpha",
    "learn_alpha",
];

impl RunConfig {
    pub fn defaults(profile: Profile) -> Self {
        let task = Task::Pushing;
        let base = TrainerConfig::new(task, Learner::Curious(toc_core::curiosity::Variant::Toc), 84);
        let mut c = Self {
            profile,
            task,
            variants: vec![base.learner],
            seeds: vec![0],
            output_dir: task.name().to_string(),
            image_size: base.env.image_size,
            horizon: base.env.horizon,
            objects: Objects::Cube,
            shape_seed: 0,
            lambda: base.lambda,
            feature_mode: base.feature_mode,
            total_steps: base.total_steps,
            exploration_steps: base.exploration_steps,
            warmup_steps: base.warmup_steps,
            update_every: base.update_every,
            curiosity_lr: base.curiosity_lr,
            adaptation_lr: base.adaptation_lr,
            adaptation_alpha: base.adaptation_alpha,
            log_interval: base.log_interval,
            eval_interval: base.eval_interval,
            eval_episodes: base.eval_episodes,
            sac: base.sac,
        };
        if profile == Profile::Desk {
            c.image_size = 42;
            c.total_steps = 50_000;
            c.exploration_steps = 20_000;
            c.update_every = 2;
            c.sac.batch = 32;
            c.sac.lr = 3e-4;
            c.curiosity_lr = 3e-4;
            c.sac.buffer_capacity = 50_000;
            c.log_interval = 1_000;
            c.eval_interval = 5_000;
            c.eval_episodes = 10;
        }
        c
    }

    /// Resolves `text` on top of its profile defaults, then applies
    /// `overrides` (flag name, key, value) in order. A `profile` override
    /// wins over the file's.
    pub fn resolve(text: &str, overrides: &[(String, String, String)]) -> Result<Self, ConfigError> {
        let entries = parse_lines(text)?;
        let mut profile = Profile::Paper;
        for (origin, key, value) in entries.iter().chain(&flag_entries(overrides)) {
            if key == "profile" {
                profile = value.parse().map_err(|e| invalid(origin, e))?;
            }
        }
        let mut c = Self::defaults(profile);
        let mut output_dir_set = false;
        for (origin, key, value) in entries.iter().chain(&flag_entries(overrides)) {
            c.set(key, value).map_err(|e| invalid(origin, e))?;
            output_dir_set |= key == "output_dir";
        }
        if !output_dir_set {
            c.output_dir = c.task.name().to_string();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::resolve(&text, overrides)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "profile" => self.profile = v.parse()?,
            "task" => self.task = v.parse().map_err(|e| format!("{e}"))?,
            "variant" => self.variants = parse_variants(v)?,
            "seeds" => self.seeds = parse_list(v)?,
            "output_dir" => {
                if v.is_empty() {
                    return Err("output_dir must not be empty".into());
                }
                self.output_dir = v.to_string();
            }
            "image_size" => self.image_size = num(v)?,
            "horizon" => self.horizon = num(v)?,
            "objects" => self.objects = v.parse()?,
            "shape_seed" => self.shape_seed = num(v)?,
            "lambda" => {
                let l: f64 = num(v)?;
                if !(0.0..=1.0).contains(&l) {
                    return Err(format!("lambda must lie in [0, 1], got {v}"));
                }
                self.lambda = l;
            }
            "feature_mode" => self.feature_mode = v.parse().map_err(|e| format!("{e}"))?,
            "total_steps" => self.total_steps = num(v)?,
            "exploration_steps" => self.exploration_steps = num(v)?,
            "warmup_steps" => self.warmup_steps = num(v)?,
            "update_every" => self.update_every = num(v)?,
            "curiosity_lr" => self.curiosity_lr = num(v)?,
            "adaptation_lr" => self.adaptation_lr = optional(v)?,
            "adaptation_alpha" => self.adaptation_alpha = optional(v)?,
            "log_interval" => self.log_interval = num(v)?,
            "eval_interval" => self.eval_interval = num(v)?,
            "eval_episodes" => self.eval_episodes = num(v)?,
            "lr" => self.sac.lr = num(v)?,
            "batch" => self.sac.batch = num(v)?,
            "reward_scale" => self.sac.reward_scale = num(v)?,
            "buffer_capacity" => self.sac.buffer_capacity = num(v)?,
            "hidden_units" => self.sac.hidden_units = num(v)?,
            "hidden_layers" => self.sac.hidden_layers = num(v)?,
            "gamma" => self.sac.gamma = num(v)?,
            "tau" => self.sac.tau = num(v)?,
            "target_entropy" => self.sac.target_entropy = optional(v)?,
            "initial_alpha" => self.sac.initial_alpha = num(v)?,
            "learn_alpha" => self.sac.learn_alpha = num(v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| v.to_string());
        match key {
            "profile" => self.profile.name().into(),
            "task" => self.task.name().into(),
            "variant" => join(self.variants.iter().map(|l| l.name())),
            "seeds" => join(self.seeds.iter()),
            "output_dir" => self.output_dir.clone(),
            "image_size" => self.image_size.to_string(),
            "horizon" => self.horizon.to_string(),
            "objects" => self.objects.name().into(),
            "shape_seed" => self.shape_seed.to_string(),
            "lambda" => self.lambda.to_string(),
            "feature_mode" => self.feature_mode.name().into(),
            "total_steps" => self.total_steps.to_string(),
            "exploration_steps" => self.exploration_steps.to_string(),
            "warmup_steps" => self.warmup_steps.to_string(),
            "update_every" => self.update_every.to_string(),
            "curiosity_lr" => self.curiosity_lr.to_string(),
            "adaptation_lr" => opt(self.adaptation_lr),
            "adaptation_alpha" => opt(self.adaptation_alpha),
            "log_interval" => self.log_interval.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "lr" => self.sac.lr.to_string(),
            "batch" => self.sac.batch.to_string(),
            "reward_scale" => self.sac.reward_scale.to_string(),
            "buffer_capacity" => self.sac.buffer_capacity.to_string(),
            "hidden_units" => self.sac.hidden_units.to_string(),
            "hidden_layers" => self.sac.hidden_layers.to_string(),
            "gamma" => self.sac.gamma.to_string(),
            "tau" => self.sac.tau.to_string(),
            "target_entropy" => opt(self.sac.target_entropy),
            "initial_alpha" => self.sac.initial_alpha.to_string(),
            "learn_alpha" => self.sac.learn_alpha.to_string(),
            _ => unreachable!("keys come from KEYS"),
        }
    }

    /// Every key with its resolved value. `f64` uses the shortest
    /// round-trip representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        out
    }

    /// The same config narrowed to one variant and one seed.
    pub fn single(&self, learner: Learner, seed: u64) -> Self {
        Self {
            variants: vec![learner],
            seeds: vec![seed],
            ..self.clone()
        }
    }

    pub fn trainer(&self, learner: Learner, seed: u64) -> TrainerConfig {
        let mut t = TrainerConfig::new(self.task, learner, self.image_size);
        t.env.horizon = self.horizon;
        t.env.objects = self.objects.source(self.shape_seed);
        t.lambda = self.lambda;
        t.feature_mode = self.feature_mode;
        t.total_steps = self.total_steps;
        t.exploration_steps = self.exploration_steps;
        t.warmup_steps = self.warmup_steps;
        t.update_every = self.update_every;
        t.curiosity_lr = self.curiosity_lr;
        t.adaptation_lr = self.adaptation_lr;
        t.adaptation_alpha = self.adaptation_alpha;
        t.log_interval = self.log_interval;
        t.eval_interval = self.eval_interval;
        t.eval_episodes = self.eval_episodes;
        t.sac = self.sac;
        t.seed = seed;
        t
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let origin = Origin::Resolved;
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(invalid(&origin, "at least one variant and one seed are required"));
        }
        if self.horizon == 0 || self.total_steps == 0 {
            return Err(invalid(&origin, "horizon and total_steps must be positive"));
        }
        for &l in &self.variants {
            let t = self.trainer(l, self.seeds[0]);
            t.validate().map_err(|e| invalid(&origin, e.to_string()))?;
            toc_core::curiosity::encoder_spec(self.image_size).map_err(|e| invalid(&origin, e.to_string()))?;
        }
        Ok(())
    }
}

fn parse_lines(text: &str) -> Result<Vec<(Origin, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(&origin, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(invalid(&origin, format!("unknown key `{key}`")));
        }
        out.push((origin, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn flag_entries(overrides: &[(String, String, String)]) -> Vec<(Origin, String, String)> {
    overrides
        .iter()
        .map(|(flag, k, v)| (Origin::Flag(flag.clone()), k.clone(), v.clone()))
        .collect()
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse()
        .map_err(|_| format!("cannot parse `{v}` as {}", std::any::type_name::<T>()))
}

fn optional(v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn parse_list(v: &str) -> Result<Vec<u64>, String> {
    v.split(',').map(|s| num(s.trim())).collect()
}

fn parse_variants(v: &str) -> Result<Vec<Learner>, String> {
    if v == "all" {
        return Ok(Learner::all());
    }
    v.split(',')
        .map(|s| s.trim().parse::<Learner>().map_err(|e| e.to_string()))
        .collect()
}

fn join<T: fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}
