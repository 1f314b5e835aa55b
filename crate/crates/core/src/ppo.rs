//! Proximal policy optimization: rollout storage, GAE, the clipped surrogate
//! and the minibatch update loop with hand-derived gradients.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{AdamState, GaussianPolicy, Mlp};
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub update_epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.0,
            update_epochs: 4,
            minibatches: 4,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            lr: 3e-4,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str| Err(Error::domain(format!("ppo.{field} out of range")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma");
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return bad("lam");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip");
        }
        if !(self.vf_coef >= 0.0 && self.vf_coef.is_finite()) {
            return bad("vf_coef");
        }
        if !(self.ent_coef >= 0.0 && self.ent_coef.is_finite()) {
            return bad("ent_coef");
        }
        if self.update_epochs == 0 {
            return bad("update_epochs");
        }
        if self.minibatches == 0 {
            return bad("minibatches");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr");
        }
        Ok(())
    }
}

/// One learner's trajectory data for a single update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last record, used when it is not terminal.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            observations: Vec::with_capacity(capacity),
            actions: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            log_probs: Vec::with_capacity(capacity),
            dones: Vec::with_capacity(capacity),
            bootstrap_value: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, observation: Vec<f64>, action: Vec<f64>, value: f64, log_prob: f64) {
        self.observations.push(observation);
        self.actions.push(action);
        self.values.push(value);
        self.log_probs.push(log_prob);
        self.rewards.push(0.0);
        self.dones.push(false);
    }

    /// Sets the reward and terminal flag of the most recent record.
    pub fn record_outcome(&mut self, reward: f64, done: bool) -> Result<()> {
        match (self.rewards.last_mut(), self.dones.last_mut()) {
            (Some(r), Some(d)) => {
                *r = reward;
                *d = done;
                Ok(())
            }
            _ => Err(Error::usage("outcome recorded on an empty buffer")),
        }
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.rewards.clear();
        self.values.clear();
        self.log_probs.clear();
        self.dones.clear();
        self.bootstrap_value = 0.0;
    }

    pub fn check(&self) -> Result<()> {
        let n = self.rewards.len();
        check_len("buffer observations", n, self.observations.len())?;
        check_len("buffer actions", n, self.actions.len())?;
        check_len("buffer values", n, self.values.len())?;
        check_len("buffer log_probs", n, self.log_probs.len())?;
        check_len("buffer dones", n, self.dones.len())?;
        Ok(())
    }
}

/// Generalized advantage estimation, backwards in time.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("gae values", rewards.len(), values.len())?;
    check_len("gae dones", rewards.len(), dones.len())?;
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts to zero mean and scales to unit population sd. A constant batch
/// becomes all zeros.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let sd = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in advantages.iter_mut() {
        *a = if sd > 1e-12 { (*a - mean) / sd } else { 0.0 };
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLosses {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// `policy_loss + vf_coef * value_loss - ent_coef * entropy`
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

pub fn ppo_losses(
    new_log_probs: &[f64],
    old_log_probs: &[f64],
    advantages: &[f64],
    new_values: &[f64],
    returns: &[f64],
    entropies: &[f64],
    config: &PpoConfig,
) -> Result<PpoLosses> {
    let n = new_log_probs.len();
    check_len("old log_probs", n, old_log_probs.len())?;
    check_len("advantages", n, advantages.len())?;
    check_len("values", n, new_values.len())?;
    check_len("returns", n, returns.len())?;
    check_len("entropies", n, entropies.len())?;
    if n == 0 {
        return Err(Error::usage("empty minibatch"));
    }
    let all = [new_log_probs, old_log_probs, advantages, new_values, returns, entropies];
    if all.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("ppo loss inputs"));
    }
    let nf = n as f64;
    let (lo, hi) = (1.0 - config.clip, 1.0 + config.clip);
    let mut policy = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    for i in 0..n {
        let diff = new_log_probs[i] - old_log_probs[i];
        let ratio = diff.exp();
        let a = advantages[i];
        policy -= (ratio * a).min(ratio.clamp(lo, hi) * a);
        if (ratio - 1.0).abs() > config.clip {
            clipped += 1;
        }
        kl += 0.5 * diff * diff;
    }
    let policy_loss = policy / nf;
    let value_loss = new_values.iter().zip(returns).map(|(v, r)| (v - r).powi(2)).sum::<f64>() / nf;
    let entropy = entropies.iter().sum::<f64>() / nf;
    Ok(PpoLosses {
        policy_loss,
        value_loss,
        entropy,
        total: policy_loss + config.vf_coef * value_loss - config.ent_coef * entropy,
        clip_fraction: clipped as f64 / nf,
        approx_kl: kl / nf,
    })
}

/// Gradients of the total PPO loss, laid out like the parameters they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub policy: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.policy.iter().chain(&self.log_std).chain(&self.value).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.policy.iter_mut().chain(&mut self.log_std).chain(&mut self.value) {
            *g *= factor;
        }
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }
}

/// Samples selected for one gradient step. Advantages are used as given.
#[derive(Clone, Debug)]
pub struct Minibatch<'a> {
    pub observations: Vec<&'a [f64]>,
    pub actions: Vec<&'a [f64]>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

pub fn minibatch_gradients(
    policy: &GaussianPolicy,
    value: &Mlp,
    batch: &Minibatch<'_>,
    config: &PpoConfig,
) -> Result<(Gradients, PpoLosses)> {
    let n = batch.observations.len();
    check_len("minibatch actions", n, batch.actions.len())?;
    check_len("minibatch log_probs", n, batch.old_log_probs.len())?;
    check_len("minibatch advantages", n, batch.advantages.len())?;
    check_len("minibatch returns", n, batch.returns.len())?;
    if n == 0 {
        return Err(Error::usage("empty minibatch"));
    }
    let nf = n as f64;
    let dim = policy.log_std.len();
    let mut grads = Gradients {
        policy: vec![0.0; policy.net.num_params()],
        log_std: vec![0.0; dim],
        value: vec![0.0; value.num_params()],
    };
    let mut new_log_probs = Vec::with_capacity(n);
    let mut new_values = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    let (lo, hi) = (1.0 - config.clip, 1.0 + config.clip);

    for i in 0..n {
        let (out, cache) = policy.forward(batch.observations[i])?;
        let action = batch.actions[i];
        let log_prob = out.log_prob(action)?;
        new_log_probs.push(log_prob);
        entropies.push(out.entropy()?);

        let ratio = (log_prob - batch.old_log_probs[i]).exp();
        let a = batch.advantages[i];
        // the clipped branch is constant in the parameters
        let unclipped_active = ratio * a <= ratio.clamp(lo, hi) * a;
        let d_log_prob = if unclipped_active { -a * ratio / nf } else { 0.0 };

        let mut d_mean = vec![0.0; dim];
        for j in 0..dim {
            let z = (action[j] - out.mean[j]) / out.std[j];
            d_mean[j] = d_log_prob * z / out.std[j];
            grads.log_std[j] += d_log_prob * (z * z - 1.0) - config.ent_coef / nf;
        }
        policy.net.backward_accumulate(&cache, &d_mean, &mut grads.policy)?;

        let (v, vcache) = value.forward(batch.observations[i])?;
        new_values.push(v[0]);
        let dv = config.vf_coef * 2.0 * (v[0] - batch.returns[i]) / nf;
        value.backward_accumulate(&vcache, &[dv], &mut grads.value)?;
    }
    let losses = ppo_losses(
        &new_log_probs,
        &batch.old_log_probs,
        &batch.advantages,
        &new_values,
        &batch.returns,
        &entropies,
        config,
    )?;
    Ok((grads, losses))
}

/// Adam states for one learner's policy network, log-std vector and value network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoOptimizer {
    pub policy: AdamState,
    pub log_std: AdamState,
    pub value: AdamState,
}

impl PpoOptimizer {
    pub fn new(policy: &GaussianPolicy, value: &Mlp, lr: f64) -> Self {
        Self {
            policy: AdamState::new(policy.net.num_params(), lr),
            log_std: AdamState::new(policy.log_std.len(), lr),
            value: AdamState::new(value.num_params(), lr),
        }
    }

    pub fn apply(&mut self, policy: &mut GaussianPolicy, value: &mut Mlp, grads: &Gradients) -> Result<()> {
        self.policy.update(policy.net.params_mut(), &grads.policy)?;
        self.log_std.update(&mut policy.log_std, &grads.log_std)?;
        self.value.update(value.params_mut(), &grads.value)
    }
}

/// Minibatch means of the PPO diagnostics over one update call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Runs `update_epochs` shuffled passes of `minibatches` gradient steps over
/// the buffer. Advantages come from the values stored during the rollout.
pub fn update(
    policy: &mut GaussianPolicy,
    value: &mut Mlp,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    optimizer: &mut PpoOptimizer,
    rng: &mut SplitMix64,
) -> Result<UpdateStats> {
    config.validate()?;
    buffer.check()?;
    if buffer.is_empty() {
        return Err(Error::usage("update called with an empty rollout buffer"));
    }
    let (advantages, returns) = compute_gae(
        &buffer.rewards,
        &buffer.values,
        &buffer.dones,
        buffer.bootstrap_value,
        config.gamma,
        config.lam,
    )?;
    let n = buffer.len();
    let chunk = n.div_ceil(config.minibatches.min(n));
    let mut indices: Vec<usize> = (0..n).collect();
    let mut sum = UpdateStats::default();
    let mut count = 0usize;
    for _ in 0..config.update_epochs {
        rng.shuffle(&mut indices);
        for part in indices.chunks(chunk) {
            let mut batch = Minibatch {
                observations: part.iter().map(|&i| buffer.observations[i].as_slice()).collect(),
                actions: part.iter().map(|&i| buffer.actions[i].as_slice()).collect(),
                old_log_probs: part.iter().map(|&i| buffer.log_probs[i]).collect(),
                advantages: part.iter().map(|&i| advantages[i]).collect(),
                returns: part.iter().map(|&i| returns[i]).collect(),
            };
            if config.normalize_advantages {
                normalize_advantages(&mut batch.advantages);
            }
            let (mut grads, losses) = minibatch_gradients(policy, value, &batch, config)?;
            grads.clip_global_norm(config.max_grad_norm);
            optimizer.apply(policy, value, &grads)?;
            sum.policy_loss += losses.policy_loss;
            sum.value_loss += losses.value_loss;
            sum.entropy += losses.entropy;
            sum.clip_fraction += losses.clip_fraction;
            sum.approx_kl += losses.approx_kl;
            count += 1;
        }
    }
    let c = count as f64;
    let stats = UpdateStats {
        policy_loss: sum.policy_loss / c,
        value_loss: sum.value_loss / c,
        entropy: sum.entropy / c,
        clip_fraction: sum.clip_fraction / c,
        approx_kl: sum.approx_kl / c,
    };
    if [stats.policy_loss, stats.value_loss, stats.entropy, stats.approx_kl].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("update statistics"));
    }
    Ok(stats)
}

/// One-step continuous bandit: constant observation, reward `-(a - 0.5)^2`
/// on the sampled action, whose expectation peaks at mean 0.5 for any std. Runs `updates` PPO updates, each on
/// `episodes_per_update` single-step episodes, and returns the final policy mean.
pub fn train_bandit(seed: u64, updates: usize, episodes_per_update: usize) -> Result<f64> {
    let mut policy = GaussianPolicy::init(1, 1, seed)?;
    let mut value = Mlp::init(1, 1, crate::nn::VALUE_OUTPUT_GAIN, crate::rng::derive_seed(seed, 1))?;
    let config = PpoConfig::default();
    let mut optimizer = PpoOptimizer::new(&policy, &value, config.lr);
    let mut rng = SplitMix64::new(crate::rng::derive_seed(seed, 2));
    let obs = vec![1.0];
    let mut buffer = RolloutBuffer::with_capacity(episodes_per_update);
    for _ in 0..updates {
        buffer.clear();
        let (out, _) = policy.forward(&obs)?;
        let v = value.forward(&obs)?.0[0];
        for _ in 0..episodes_per_update {
            let action = out.sample(&mut rng);
            let log_prob = out.log_prob(&action)?;
            let a = action[0];
            buffer.push(obs.clone(), action, v, log_prob);
            buffer.record_outcome(-(a - 0.5).powi(2), true)?;
        }
        update(&mut policy, &mut value, &buffer, &config, &mut optimizer, &mut rng)?;
    }
    Ok(policy.forward(&obs)?.0.mean[0])
}
