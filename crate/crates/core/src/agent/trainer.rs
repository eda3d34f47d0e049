use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, Transition};
use super::sac::{ActionMode, Sac, SacBatch, SacConfig};
use super::{AgentError, Phase, Result};
use crate::curiosity::{
    curiosity_update, encode, encode_batch, CuriosityBatch, CuriosityConfig, CuriosityModel, FeatureMode, Variant,
    DEFAULT_LAMBDA, LATENT_DIM,
};
use crate::env::{self, EnvConfig, EnvState, Observation, Task, TraceStep};
use crate::metrics::{EpisodeSummary, EpisodeTrace, LogRow, RunLog, WindowStats};
use crate::numerics::{load_checkpoint, save_checkpoint, AdamConfig};

pub const CHECKPOINT_KIND: &str = "toc-run";

const INIT_SALT: u64 = 0x1a2b_3c4d_5e6f_7081;
const EVAL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// What drives the policy during exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Learner {
    Curious(Variant),
    /// Plain SAC on the task reward for the whole budget, on a frozen random
    /// encoder.
    Sac,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Curious(v) => v.name(),
            Learner::Sac => "sac",
        }
    }

    pub fn all() -> Vec<Learner> {
        let mut out: Vec<Learner> = Variant::ALL.into_iter().map(Learner::Curious).collect();
        out.push(Learner::Sac);
        out
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Learner {
    type Err = crate::curiosity::CuriosityError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("sac") {
            return Ok(Learner::Sac);
        }
        s.parse().map(Learner::Curious)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardStream {
    Intrinsic,
    Extrinsic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub env: EnvConfig,
    pub learner: Learner,
    pub lambda: f64,
    pub feature_mode: FeatureMode,
    pub total_steps: u64,
    pub exploration_steps: u64,
    /// Uniform random actions before the first update.
    pub warmup_steps: u64,
    /// Env steps per gradient update.
    pub update_every: u64,
    pub sac: SacConfig,
    pub curiosity_lr: f64,
    pub adaptation_lr: Option<f64>,
    pub adaptation_alpha: Option<f64>,
    pub log_interval: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Zeroes one reward stream before it reaches the learner.
    pub ablate: Option<RewardStream>,
}

impl TrainerConfig {
    pub fn new(task: Task, learner: Learner, image_size: usize) -> Self {
        let sac = SacConfig::default();
        Self {
            env: EnvConfig::new(task, image_size),
            learner,
            lambda: DEFAULT_LAMBDA,
            feature_mode: FeatureMode::Learned,
            total_steps: 1_000_000,
            exploration_steps: 200_000,
            warmup_steps: 1_000,
            update_every: 1,
            curiosity_lr: sac.lr,
            sac,
            adaptation_lr: None,
            adaptation_alpha: None,
            log_interval: 1_000,
            eval_interval: 5_000,
            eval_episodes: 20,
            seed: 0,
            ablate: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sac.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(AgentError::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.update_every == 0 || self.log_interval == 0 || self.eval_interval == 0 {
            return Err(AgentError::Config("update, log and eval intervals must be positive".into()));
        }
        if !(self.curiosity_lr.is_finite() && self.curiosity_lr > 0.0) {
            return Err(AgentError::Config("curiosity_lr must be positive".into()));
        }
        for (name, v) in [("adaptation_lr", self.adaptation_lr), ("adaptation_alpha", self.adaptation_alpha)] {
            if v.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
                return Err(AgentError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Steps spent exploring: none for plain SAC, the whole run on tasks
    /// without a goal, otherwise `exploration_steps` capped by the budget.
    pub fn exploration_budget(&self) -> u64 {
        match self.learner {
            Learner::Sac => 0,
            Learner::Curious(_) if !self.env.task.has_goal() => self.total_steps,
            Learner::Curious(_) => self.exploration_steps.min(self.total_steps),
        }
    }

    fn curiosity_config(&self) -> CuriosityConfig {
        let variant = match self.learner {
            Learner::Curious(v) => v,
            Learner::Sac => Variant::Toc,
        };
        let mut c = CuriosityConfig::new(variant, self.env.image_size, self.env.task.action_dim());
        c.lambda = self.lambda;
        c.feature_mode = match self.learner {
            Learner::Sac => FeatureMode::RandomFixed,
            Learner::Curious(_) => self.feature_mode,
        };
        c.adam = AdamConfig::with_lr(self.curiosity_lr);
        c
    }
}

/// Receives log rows and, optionally, finished episode traces.
pub trait LogSink {
    fn row(&mut self, row: &LogRow) -> Result<()>;

    fn episode(&mut self, _trace: &EpisodeTrace) -> Result<()> {
        Ok(())
    }
}

impl LogSink for Vec<LogRow> {
    fn row(&mut self, row: &LogRow) -> Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

impl<W: Write> LogSink for RunLog<W> {
    fn row(&mut self, row: &LogRow) -> Result<()> {
        Ok(self.log(row)?)
    }
}

/// Visual features fed to the policy: the encoded image only.
pub fn policy_input(obs: &Observation, curiosity: &CuriosityModel) -> Result<Vec<f64>> {
    Ok(encode(curiosity, &obs.image.to_unit())?)
}

/// Accumulators for the current logging interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Interval {
    episodes: Vec<EpisodeSummary>,
    r_int: (f64, u64),
    l_touch: (f64, u64),
    l_fdm: (f64, u64),
    l_critic: (f64, u64),
    l_actor: (f64, u64),
}

fn mean((sum, n): (f64, u64)) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

fn add(acc: &mut (f64, u64), v: f64) {
    acc.0 += v;
    acc.1 += 1;
}

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub config: TrainerConfig,
    pub sac: Sac,
    pub curiosity: CuriosityModel,
    pub buffer: ReplayBuffer,
    pub env: EnvState,
    pub obs: Observation,
    pub rng: ChaCha8Rng,
    pub step: u64,
    /// Finished training episodes.
    pub episode: u64,
    pub phase: Phase,
    trace: EpisodeTrace,
    interval: Interval,
}

impl AgentState {
    pub fn new(config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed ^ INIT_SALT);
        let curiosity = CuriosityModel::new(config.curiosity_config(), &mut init)?;
        let sac = Sac::new(config.sac, LATENT_DIM, config.env.task.action_dim(), &mut init)?;
        let buffer = ReplayBuffer::new(config.sac.buffer_capacity)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (env, obs) = env::reset(&config.env, rng.random());
        let phase = if config.exploration_budget() > 0 {
            Phase::Exploration
        } else {
            Phase::Adaptation
        };
        let trace = EpisodeTrace::new(config.env.task, phase, TraceStep::capture(&env, &obs.touch, 0.0, false));
        let mut state = Self {
            config,
            sac,
            curiosity,
            buffer,
            env,
            obs,
            rng,
            step: 0,
            episode: 0,
            phase,
            trace,
            interval: Interval::default(),
        };
        if phase == Phase::Adaptation {
            state.apply_adaptation_overrides()?;
        }
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(save_checkpoint(path, CHECKPOINT_KIND, self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(load_checkpoint(path, CHECKPOINT_KIND)?)
    }

    fn apply_adaptation_overrides(&mut self) -> Result<()> {
        if let Some(lr) = self.config.adaptation_lr {
            self.sac.set_lr(lr);
        }
        if let Some(alpha) = self.config.adaptation_alpha {
            self.sac.set_alpha(alpha)?;
        }
        Ok(())
    }

    /// Switches to the task reward, keeping every network and the buffer.
    pub fn begin_adaptation(&mut self) -> Result<()> {
        if self.phase == Phase::Exploration {
            self.phase = Phase::Adaptation;
            self.apply_adaptation_overrides()?;
        }
        Ok(())
    }

    /// Runs env steps until `self.step == until`, switching phase when the
    /// exploration budget is used up.
    pub fn train_until(&mut self, until: u64, sink: &mut dyn LogSink) -> Result<()> {
        let until = until.min(self.config.total_steps);
        while self.step < until {
            if self.phase == Phase::Exploration && self.step >= self.config.exploration_budget() {
                self.begin_adaptation()?;
            }
            self.env_step(sink)?;
        }
        Ok(())
    }

    fn env_step(&mut self, sink: &mut dyn LogSink) -> Result<()> {
        let action_dim = self.config.env.task.action_dim();
        let action: Vec<f64> = if self.step < self.config.warmup_steps {
            (0..action_dim).map(|_| self.rng.random_range(-1.0..1.0)).collect()
        } else {
            let features = policy_input(&self.obs, &self.curiosity)?;
            self.sac.sample_action(&features, 1, ActionMode::Stochastic, &mut self.rng)?
        };
        let out = env::step(&mut self.env, &action)?;
        self.buffer.push(Transition {
            image: self.obs.image.pixels.clone(),
            touch: self.obs.touch.to_vec(),
            action,
            extrinsic_reward: out.reward,
            next_image: out.observation.image.pixels.clone(),
            next_touch: out.observation.touch.to_vec(),
            done: out.done && !out.info.truncated,
        });
        self.trace
            .push(TraceStep::capture(&self.env, &out.observation.touch, out.reward, out.done));
        self.obs = out.observation;
        if out.done {
            self.interval.episodes.push(EpisodeSummary::of(&self.trace));
            sink.episode(&self.trace)?;
            self.episode += 1;
            let (env, obs) = env::reset(&self.config.env, self.rng.random());
            self.trace = EpisodeTrace::new(
                self.config.env.task,
                self.phase,
                TraceStep::capture(&env, &obs.touch, 0.0, false),
            );
            self.env = env;
            self.obs = obs;
        }
        self.step += 1;

        if self.step >= self.config.warmup_steps
            && self.step % self.config.update_every == 0
            && self.buffer.len() >= self.config.sac.batch
        {
            self.update()?;
        }
        if self.step % self.config.log_interval == 0 {
            self.log_training(sink)?;
        }
        if self.config.eval_episodes > 0 && self.step % self.config.eval_interval == 0 {
            self.log_evaluation(sink)?;
        }
        Ok(())
    }

    fn update(&mut self) -> Result<()> {
        let n = self.config.sac.batch;
        let idx = self.buffer.sample_indices(n, &mut self.rng)?;
        let mut cb = CuriosityBatch {
            n,
            ..CuriosityBatch::default()
        };
        let unit = |px: &[u8], out: &mut Vec<f64>| out.extend(px.iter().map(|&p| p as f64 / 255.0));
        let mut extrinsic = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for &i in &idx {
            let t = self.buffer.get(i).expect("sampled index in range");
            unit(&t.image, &mut cb.images);
            unit(&t.next_image, &mut cb.next_images);
            cb.touch.extend_from_slice(&t.touch);
            cb.next_touch.extend_from_slice(&t.next_touch);
            cb.actions.extend_from_slice(&t.action);
            extrinsic.push(t.extrinsic_reward);
            dones.push(if t.done { 1.0 } else { 0.0 });
        }

        let curious = matches!(self.config.learner, Learner::Curious(_));
        let (features, next_features, intrinsic) = if curious && self.phase == Phase::Exploration {
            let rep = curiosity_update(&mut self.curiosity, &cb)?;
            add(&mut self.interval.l_touch, rep.losses.l_touch);
            add(&mut self.interval.l_fdm, rep.losses.l_fdm);
            let r: Vec<f64> = rep.evaluation.records.iter().map(|r| r.r_int).collect();
            for &v in &r {
                add(&mut self.interval.r_int, v);
            }
            (rep.evaluation.features, rep.evaluation.next_features, r)
        } else {
            (
                encode_batch(&self.curiosity, &cb.images, n)?,
                encode_batch(&self.curiosity, &cb.next_images, n)?,
                vec![0.0; n],
            )
        };

        let (mut stream, active) = match self.phase {
            Phase::Exploration => (intrinsic, RewardStream::Intrinsic),
            _ => (extrinsic, RewardStream::Extrinsic),
        };
        if self.config.ablate == Some(active) {
            stream.iter_mut().for_each(|r| *r = 0.0);
        }
        let scale = self.config.sac.reward_scale;
        let batch = SacBatch {
            n,
            features,
            actions: cb.actions,
            rewards: stream.iter().map(|r| scale * r).collect(),
            next_features,
            dones,
        };
        let rep = self.sac.update(&batch, &mut self.rng)?;
        add(&mut self.interval.l_critic, rep.l_critic);
        add(&mut self.interval.l_actor, rep.l_actor);
        Ok(())
    }

    fn base_row(&self, phase: Phase) -> LogRow {
        LogRow {
            step: self.step,
            episode: self.episode,
            phase,
            variant: self.config.learner.name().to_string(),
            seed: self.config.seed,
            r_int_mean: None,
            extrinsic_return: None,
            success: None,
            episode_steps: None,
            touch_var: None,
            touch_events: None,
            obj_move: None,
            l_touch: None,
            l_fdm: None,
            l_critic: None,
            l_actor: None,
            alpha: None,
        }
    }

    fn fill_window(row: &mut LogRow, w: WindowStats) {
        row.extrinsic_return = w.extrinsic_return;
        row.success = w.success;
        row.episode_steps = w.episode_steps;
        row.touch_var = w.touch_var;
        row.touch_events = w.touch_events;
        row.obj_move = w.obj_move;
    }

    fn log_training(&mut self, sink: &mut dyn LogSink) -> Result<()> {
        let iv = std::mem::take(&mut self.interval);
        let mut row = self.base_row(self.phase);
        Self::fill_window(&mut row, WindowStats::of(&iv.episodes, self.config.env.horizon));
        row.r_int_mean = mean(iv.r_int);
        row.l_touch = mean(iv.l_touch);
        row.l_fdm = mean(iv.l_fdm);
        row.l_critic = mean(iv.l_critic);
        row.l_actor = mean(iv.l_actor);
        row.alpha = Some(self.sac.alpha());
        sink.row(&row)
    }

    fn log_evaluation(&mut self, sink: &mut dyn LogSink) -> Result<()> {
        let episodes = self.evaluate(self.config.eval_episodes)?;
        let mut row = self.base_row(Phase::Evaluation);
        Self::fill_window(&mut row, WindowStats::of(&episodes, self.config.env.horizon));
        sink.row(&row)
    }

    /// Deterministic-policy episodes on a fixed set of reset seeds. Touches
    /// no training state.
    pub fn evaluate(&self, episodes: usize) -> Result<Vec<EpisodeSummary>> {
        self.evaluate_on(&self.config.env, episodes)
    }

    /// `evaluate` in another environment of the same task and image size,
    /// e.g. a held-out object split.
    pub fn evaluate_on(&self, env_config: &EnvConfig, episodes: usize) -> Result<Vec<EpisodeSummary>> {
        if env_config.task != self.config.env.task || env_config.image_size != self.config.env.image_size {
            return Err(AgentError::Config("evaluation env must keep the task and image size".into()));
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(self.config.seed ^ EVAL_SALT);
        let mut out = Vec::with_capacity(episodes);
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..episodes {
            let (mut s, mut obs) = env::reset(env_config, seeds.random());
            let mut trace = EpisodeTrace::new(
                env_config.task,
                Phase::Evaluation,
                TraceStep::capture(&s, &obs.touch, 0.0, false),
            );
            while !s.done {
                let f = policy_input(&obs, &self.curiosity)?;
                let a = self.sac.sample_action(&f, 1, ActionMode::Deterministic, &mut unused)?;
                let o = env::step(&mut s, &a)?;
                trace.push(TraceStep::capture(&s, &o.observation.touch, o.reward, o.done));
                obs = o.observation;
            }
            out.push(EpisodeSummary::of(&trace));
        }
        Ok(out)
    }
}

/// Fresh run through the exploration budget.
pub fn run_exploration_phase(config: &TrainerConfig, sink: &mut dyn LogSink) -> Result<AgentState> {
    let mut state = AgentState::new(config.clone())?;
    let budget = config.exploration_budget();
    state.train_until(budget, sink)?;
    Ok(state)
}

/// Continues an exploration checkpoint on the task reward until the total
/// budget.
pub fn run_adaptation_phase(
    config: &TrainerConfig,
    mut checkpoint: AgentState,
    sink: &mut dyn LogSink,
) -> Result<AgentState> {
    if checkpoint.config != *config {
        return Err(AgentError::CheckpointMismatch("configuration differs".into()));
    }
    if checkpoint.step != config.exploration_budget() {
        return Err(AgentError::CheckpointMismatch(format!(
            "checkpoint is at step {}, exploration ends at {}",
            checkpoint.step,
            config.exploration_budget()
        )));
    }
    if config.total_steps > checkpoint.step {
        checkpoint.begin_adaptation()?;
    }
    checkpoint.train_until(config.total_steps, sink)?;
    Ok(checkpoint)
}

/// Both phases back to back.
pub fn train(config: &TrainerConfig, sink: &mut dyn LogSink) -> Result<AgentState> {
    let explored = run_exploration_phase(config, sink)?;
    run_adaptation_phase(config, explored, sink)
}
