use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AgentError, Result};
use crate::numerics::{
    adam_step, Activation, AdamConfig, AdamState, Network, NetworkSpec, ParamArray, ParamSet, Tape, Trainable,
};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub lr: f64,
    pub batch: usize,
    /// Multiplies whichever reward stream drives the current phase.
    pub reward_scale: f64,
    pub buffer_capacity: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub gamma: f64,
    /// Polyak rate of the target critics.
    pub tau: f64,
    /// Defaults to `-action_dim`.
    pub target_entropy: Option<f64>,
    pub initial_alpha: f64,
    pub learn_alpha: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            batch: 128,
            reward_scale: 100.0,
            buffer_capacity: 1_000_000,
            hidden_units: 128,
            hidden_layers: 2,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: None,
            initial_alpha: 1.0,
            learn_alpha: true,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("reward_scale", self.reward_scale),
            ("tau", self.tau),
            ("initial_alpha", self.initial_alpha),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(AgentError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) || self.tau > 1.0 {
            return Err(AgentError::Config("gamma must lie in [0, 1] and tau must not exceed 1".into()));
        }
        if self.batch == 0 || self.buffer_capacity == 0 || self.hidden_units == 0 || self.hidden_layers == 0 {
            return Err(AgentError::Config("batch, buffer and hidden sizes must be positive".into()));
        }
        if self.target_entropy.is_some_and(|h| !h.is_finite()) {
            return Err(AgentError::Config("target entropy must be finite".into()));
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }

    fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_units; self.hidden_layers]
    }
}

/// Features to `[mean | raw log-std]` per action dimension.
pub fn policy_spec(feature_dim: usize, action_dim: usize, config: &SacConfig) -> NetworkSpec {
    NetworkSpec::mlp(feature_dim, &config.hidden(), 2 * action_dim, Activation::Identity)
}

/// `[features; action]` to a scalar value.
pub fn critic_spec(feature_dim: usize, action_dim: usize, config: &SacConfig) -> NetworkSpec {
    NetworkSpec::mlp(feature_dim + action_dim, &config.hidden(), 1, Activation::Identity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    /// `tanh(mean)`.
    Deterministic,
}

/// Replay minibatch in learner form: encoder features and already-scaled
/// rewards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SacBatch {
    pub n: usize,
    pub features: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_features: Vec<f64>,
    /// 1.0 for terminal transitions.
    pub dones: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SacReport {
    pub l_critic: f64,
    pub l_actor: f64,
    pub l_alpha: f64,
    pub alpha: f64,
    /// `-mean log pi` on the actor batch.
    pub entropy: f64,
}

/// `log(1 - tanh(u)^2)`, stable for large `|u|`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Log-density of `tanh(u)` where `u ~ N(mean, exp(log_std))`, summed over
/// dimensions and evaluated at the pre-squash sample `u`.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u)
        })
        .sum()
}

fn concat_rows(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

fn normal_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AgentError::NonFiniteLoss { what, value })
    }
}

struct PolicyHead {
    mean: Vec<f64>,
    log_std: Vec<f64>,
    /// Whether the raw log-std lay inside the clamp (gradient passes).
    inside: Vec<bool>,
}

/// Squashed-Gaussian draws for a batch.
struct Draw {
    action: Vec<f64>,
    log_prob: Vec<f64>,
    noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sac {
    pub config: SacConfig,
    pub feature_dim: usize,
    pub action_dim: usize,
    pub policy: Trainable,
    pub q1: Trainable,
    pub q2: Trainable,
    pub q1_target: Network,
    pub q2_target: Network,
    pub log_alpha: ParamSet,
    pub alpha_adam: AdamState,
}

impl Sac {
    pub fn new<R: Rng + ?Sized>(config: SacConfig, feature_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let adam = AdamConfig::with_lr(config.lr);
        let policy = Trainable::new(policy_spec(feature_dim, action_dim, &config), adam, rng)?;
        let q1 = Trainable::new(critic_spec(feature_dim, action_dim, &config), adam, rng)?;
        let q2 = Trainable::new(critic_spec(feature_dim, action_dim, &config), adam, rng)?;
        let mut log_alpha = ParamSet {
            arrays: vec![ParamArray::zeros("log_alpha", vec![1])],
        };
        log_alpha.arrays[0].data[0] = config.initial_alpha.ln();
        let alpha_adam = AdamState::new(&log_alpha, adam);
        Ok(Self {
            config,
            feature_dim,
            action_dim,
            q1_target: q1.net.clone(),
            q2_target: q2.net.clone(),
            policy,
            q1,
            q2,
            log_alpha,
            alpha_adam,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.arrays[0].data[0].exp()
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(AgentError::Config(format!("alpha must be positive, got {alpha}")));
        }
        self.log_alpha.arrays[0].data[0] = alpha.ln();
        Ok(())
    }

    pub fn set_lr(&mut self, lr: f64) {
        for a in [&mut self.policy.adam, &mut self.q1.adam, &mut self.q2.adam, &mut self.alpha_adam] {
            a.config.lr = lr;
        }
        self.config.lr = lr;
    }

    fn split_head(&self, out: &[f64], n: usize) -> Result<PolicyHead> {
        let a = self.action_dim;
        let mut head = PolicyHead {
            mean: Vec::with_capacity(n * a),
            log_std: Vec::with_capacity(n * a),
            inside: Vec::with_capacity(n * a),
        };
        for row in out.chunks(2 * a) {
            head.mean.extend_from_slice(&row[..a]);
            for &raw in &row[a..] {
                if !raw.is_finite() {
                    return Err(AgentError::NonFiniteLogStd(raw));
                }
                head.log_std.push(raw.clamp(LOG_STD_MIN, LOG_STD_MAX));
                head.inside.push(raw > LOG_STD_MIN && raw < LOG_STD_MAX);
            }
        }
        Ok(head)
    }

    fn head(&self, features: &[f64], n: usize) -> Result<PolicyHead> {
        let out = self.policy.net.predict(features, n)?;
        self.split_head(&out, n)
    }

    fn head_with_tape(&self, features: &[f64], n: usize) -> Result<(PolicyHead, Tape)> {
        let (out, tape) = self.policy.net.forward(features, n)?;
        Ok((self.split_head(&out, n)?, tape))
    }

    fn draw(&self, head: &PolicyHead, noise: Vec<f64>) -> Draw {
        let a = self.action_dim;
        let pre: Vec<f64> = (0..head.mean.len())
            .map(|j| head.mean[j] + head.log_std[j].exp() * noise[j])
            .collect();
        let log_prob = (0..pre.len() / a)
            .map(|i| {
                let r = i * a..(i + 1) * a;
                squashed_log_prob(&pre[r.clone()], &head.mean[r.clone()], &head.log_std[r])
            })
            .collect();
        Draw {
            action: pre.iter().map(|u| u.tanh()).collect(),
            log_prob,
            noise,
        }
    }

    /// Actions for `n` feature rows, each component in `[-1, 1]`.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        n: usize,
        mode: ActionMode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let head = self.head(features, n)?;
        Ok(match mode {
            ActionMode::Deterministic => head.mean.iter().map(|m| m.tanh()).collect(),
            ActionMode::Stochastic => self.draw(&head, normal_noise(head.mean.len(), rng)).action,
        })
    }

    /// Actions with their log-probabilities.
    pub fn sample_with_log_prob<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let head = self.head(features, n)?;
        let d = self.draw(&head, normal_noise(head.mean.len(), rng));
        Ok((d.action, d.log_prob))
    }

    fn check_batch(&self, b: &SacBatch) -> Result<()> {
        let (n, f, a) = (b.n, self.feature_dim, self.action_dim);
        let ok = n > 0
            && b.features.len() == n * f
            && b.next_features.len() == n * f
            && b.actions.len() == n * a
            && b.rewards.len() == n
            && b.dones.len() == n;
        if ok {
            Ok(())
        } else {
            Err(AgentError::Config(format!("malformed SAC batch of {n} rows")))
        }
    }

    /// `r + gamma (1 - done) (min target Q(s', a') - alpha log pi(a'|s'))`
    /// with `a'` drawn from the current policy. Rewards are used as given.
    pub fn soft_q_target<R: Rng + ?Sized>(&self, batch: &SacBatch, rng: &mut R) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let n = batch.n;
        let (next_a, next_logp) = self.sample_with_log_prob(&batch.next_features, n, rng)?;
        let input = concat_rows(&batch.next_features, self.feature_dim, &next_a, self.action_dim, n);
        let t1 = self.q1_target.predict(&input, n)?;
        let t2 = self.q2_target.predict(&input, n)?;
        let alpha = self.alpha();
        Ok((0..n)
            .map(|i| {
                let v = t1[i].min(t2[i]) - alpha * next_logp[i];
                batch.rewards[i] + self.config.gamma * (1.0 - batch.dones[i]) * v
            })
            .collect())
    }

    /// One Adam step on both critics against the soft target, then Polyak
    /// averaging of the targets. Returns the mean squared TD error, halved
    /// and summed over the two critics.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &SacBatch, rng: &mut R) -> Result<f64> {
        let n = batch.n;
        let y = self.soft_q_target(batch, rng)?;
        let input = concat_rows(&batch.features, self.feature_dim, &batch.actions, self.action_dim, n);
        let (q1, tape1) = self.q1.net.forward(&input, n)?;
        let (q2, tape2) = self.q2.net.forward(&input, n)?;
        let mut loss = 0.0;
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        for i in 0..n {
            let (e1, e2) = (q1[i] - y[i], q2[i] - y[i]);
            loss += 0.5 * (e1 * e1 + e2 * e2) / n as f64;
            g1[i] = e1 / n as f64;
            g2[i] = e2 / n as f64;
        }
        check_finite("critic", loss)?;
        let grads1 = self.q1.net.backward_params(tape1, &g1)?;
        let grads2 = self.q2.net.backward_params(tape2, &g2)?;
        self.q1.step(&grads1)?;
        self.q2.step(&grads2)?;
        let tau = self.config.tau;
        self.q1_target.params_mut().polyak_from(self.q1.net.params(), tau);
        self.q2_target.params_mut().polyak_from(self.q2.net.params(), tau);
        Ok(loss)
    }

    /// Actor loss `mean(alpha log pi(a|s) - min Q(s, a))` with `a`
    /// reparameterised through `noise`, and its gradient with respect to the
    /// policy parameters. Also returns per-sample log-probabilities.
    pub fn actor_loss_and_grad(&self, features: &[f64], n: usize, noise: Vec<f64>) -> Result<(f64, ParamSet, Vec<f64>)> {
        let (fd, ad) = (self.feature_dim, self.action_dim);
        let (head, tape) = self.head_with_tape(features, n)?;
        let draw = self.draw(&head, noise);
        let input = concat_rows(features, fd, &draw.action, ad, n);
        let (q1, t1) = self.q1.net.forward(&input, n)?;
        let (q2, t2) = self.q2.net.forward(&input, n)?;
        let mut pick1 = vec![0.0; n];
        let mut pick2 = vec![0.0; n];
        let alpha = self.alpha();
        let mut loss = 0.0;
        for i in 0..n {
            if q1[i] <= q2[i] {
                pick1[i] = 1.0;
            } else {
                pick2[i] = 1.0;
            }
            loss += (alpha * draw.log_prob[i] - q1[i].min(q2[i])) / n as f64;
        }
        check_finite("actor", loss)?;
        let dq1 = self.q1.net.backward(t1, &pick1)?.input;
        let dq2 = self.q2.net.backward(t2, &pick2)?.input;

        let mut grad_out = vec![0.0; n * 2 * ad];
        let scale = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..ad {
                let k = i * ad + j;
                let a = draw.action[k];
                let dqda = dq1[i * (fd + ad) + fd + j] + dq2[i * (fd + ad) + fd + j];
                let dqdu = dqda * (1.0 - a * a);
                let sigma_eps = head.log_std[k].exp() * draw.noise[k];
                // d log pi / du through the squash term is 2a.
                grad_out[i * 2 * ad + j] = scale * (alpha * 2.0 * a - dqdu);
                if head.inside[k] {
                    grad_out[i * 2 * ad + ad + j] = scale * (alpha * (-1.0 + 2.0 * a * sigma_eps) - dqdu * sigma_eps);
                }
            }
        }
        let grads = self.policy.net.backward_params(tape, &grad_out)?;
        Ok((loss, grads, draw.log_prob))
    }

    /// One Adam step on the policy. Returns the loss and the batch
    /// log-probabilities for the temperature update.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &SacBatch, rng: &mut R) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let noise = normal_noise(batch.n * self.action_dim, rng);
        let (loss, grads, log_prob) = self.actor_loss_and_grad(&batch.features, batch.n, noise)?;
        self.policy.step(&grads)?;
        Ok((loss, log_prob))
    }

    /// One Adam step on `log alpha` for `-log alpha * mean(log pi + target)`.
    /// A no-op returning 0 when the temperature is fixed.
    pub fn temperature_update(&mut self, log_probs: &[f64]) -> Result<f64> {
        if !self.config.learn_alpha || log_probs.is_empty() {
            return Ok(0.0);
        }
        let target = self.config.target_entropy_for(self.action_dim);
        let gap = log_probs.iter().map(|lp| lp + target).sum::<f64>() / log_probs.len() as f64;
        let loss = check_finite("temperature", -self.log_alpha.arrays[0].data[0] * gap)?;
        let mut grads = ParamSet::zeros_like(&self.log_alpha);
        grads.arrays[0].data[0] = -gap;
        adam_step(&mut self.log_alpha, &grads, &mut self.alpha_adam)?;
        Ok(loss)
    }

    /// Critic, actor, then temperature.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &SacBatch, rng: &mut R) -> Result<SacReport> {
        let l_critic = self.critic_update(batch, rng)?;
        let (l_actor, log_probs) = self.actor_update(batch, rng)?;
        let l_alpha = self.temperature_update(&log_probs)?;
        Ok(SacReport {
            l_critic,
            l_actor,
            l_alpha,
            alpha: self.alpha(),
            entropy: -log_probs.iter().sum::<f64>() / log_probs.len() as f64,
        })
    }
}
