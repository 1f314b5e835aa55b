//! The two controller architectures, the training loop and checkpoints.
//!
//! A centralized agent is one learner mapping the 84-dim observation to all
//! 18 joint actions. A decentralized agent is six independent learners, one
//! per leg, each mapping its 42-dim local observation to its 3 joints. Both
//! share one act/record/update contract, so the training loop and evaluation
//! do not care which is which.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{GaussianPolicy, Mlp, VALUE_OUTPUT_GAIN};
use crate::observation::{build_central_obs, build_local_obs, LastActions, NeighborTopology, CENTRAL_OBS_DIM, LOCAL_OBS_DIM};
use crate::physics::{Action, Controller, EnvConfig, Environment, WorldState};
use crate::ppo::{update, PpoConfig, PpoOptimizer, RolloutBuffer, UpdateStats};
use crate::rng::{derive_seed, SplitMix64};
use crate::robot::{LegId, RobotGeometry, JOINTS_PER_LEG, NUM_JOINTS, NUM_LEGS};
use crate::terrain::TerrainSpec;

pub const CHECKPOINT_EVERY: usize = 100;
pub const RUNNING_MEAN_WINDOW: usize = 100;
pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "central")]
    Centralized,
    #[serde(rename = "decentral")]
    Decentralized,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Centralized, Architecture::Decentralized];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Centralized => "central",
            Architecture::Decentralized => "decentral",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::Centralized => "Central",
            Architecture::Decentralized => "Decentral",
        }
    }

    pub fn num_learners(self) -> usize {
        match self {
            Architecture::Centralized => 1,
            Architecture::Decentralized => NUM_LEGS,
        }
    }

    /// (observation, action) sizes of each learner.
    pub fn learner_dims(self) -> (usize, usize) {
        match self {
            Architecture::Centralized => (CENTRAL_OBS_DIM, NUM_JOINTS),
            Architecture::Decentralized => (LOCAL_OBS_DIM, JOINTS_PER_LEG),
        }
    }

    /// Trainable parameters: policy net, log-std and value net of every learner.
    pub fn closed_form_param_count(self) -> usize {
        let (i, o) = self.learner_dims();
        let policy = i * 64 + 64 + 64 * 64 + 64 + 64 * o + o;
        let value = i * 64 + 64 + 64 * 64 + 64 + 64 + 1;
        self.num_learners() * (policy + o + value)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "central" | "centralized" => Ok(Architecture::Centralized),
            "decentral" | "decentralized" => Ok(Architecture::Decentralized),
            other => Err(Error::domain(format!("unknown architecture {other:?}, expected central or decentral"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    /// Sample from the Gaussian policy (training).
    Sample,
    /// Use the policy mean (evaluation).
    Deterministic,
}

/// One policy/value pair with its optimizer, random stream and rollout buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Learner {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub optimizer: PpoOptimizer,
    pub rng: SplitMix64,
    #[serde(skip)]
    pub buffer: RolloutBuffer,
}

/// What one learner saw and did at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerStep {
    pub observation: Vec<f64>,
    /// Unclamped action as sampled (or the mean).
    pub action: Vec<f64>,
    pub value: f64,
    pub log_prob: f64,
}

impl Learner {
    pub fn new(obs_dim: usize, action_dim: usize, seed: u64, lr: f64) -> Result<Self> {
        let policy = GaussianPolicy::init(obs_dim, action_dim, derive_seed(seed, 1))?;
        let value = Mlp::init(obs_dim, 1, VALUE_OUTPUT_GAIN, derive_seed(seed, 2))?;
        let optimizer = PpoOptimizer::new(&policy, &value, lr);
        Ok(Self { policy, value, optimizer, rng: SplitMix64::new(derive_seed(seed, 3)), buffer: RolloutBuffer::default() })
    }

    pub fn num_params(&self) -> usize {
        self.policy.num_params() + self.value.num_params()
    }

    pub fn step(&mut self, observation: Vec<f64>, mode: ActMode) -> Result<LearnerStep> {
        let (out, _) = self.policy.forward(&observation)?;
        let action = match mode {
            ActMode::Sample => out.sample(&mut self.rng),
            ActMode::Deterministic => out.mean.clone(),
        };
        let log_prob = out.log_prob(&action)?;
        let value = self.value.forward(&observation)?.0[0];
        Ok(LearnerStep { observation, action, value, log_prob })
    }

    pub fn update(&mut self, config: &PpoConfig) -> Result<UpdateStats> {
        let mut rng = self.rng.clone();
        let stats = update(&mut self.policy, &mut self.value, &self.buffer, config, &mut self.optimizer, &mut rng)?;
        self.rng = rng;
        self.buffer.clear();
        Ok(stats)
    }
}

/// Either architecture behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub architecture: Architecture,
    pub learners: Vec<Learner>,
    pub topology: NeighborTopology,
}

impl Agent {
    pub fn new(architecture: Architecture, seed: u64, lr: f64) -> Result<Self> {
        let (i, o) = architecture.learner_dims();
        let learners = (0..architecture.num_learners())
            .map(|k| Learner::new(i, o, derive_seed(seed, 100 + k as u64), lr))
            .collect::<Result<_>>()?;
        Ok(Self { architecture, learners, topology: NeighborTopology::default() })
    }

    pub fn centralized(seed: u64, lr: f64) -> Result<Self> {
        Self::new(Architecture::Centralized, seed, lr)
    }

    pub fn decentralized(seed: u64, lr: f64) -> Result<Self> {
        Self::new(Architecture::Decentralized, seed, lr)
    }

    pub fn num_params(&self) -> usize {
        self.learners.iter().map(Learner::num_params).sum()
    }

    /// Observation fed to learner `k`.
    pub fn observation(&self, k: usize, geometry: &RobotGeometry, state: &WorldState, last: &LastActions) -> Result<Vec<f64>> {
        match self.architecture {
            Architecture::Centralized => Ok(build_central_obs(geometry, state, last)?.to_vec()),
            Architecture::Decentralized => {
                let leg = LegId::from_index(k).ok_or_else(|| Error::usage(format!("no leg {k}")))?;
                Ok(build_local_obs(geometry, state, leg, last, &self.topology)?.to_vec())
            }
        }
    }

    /// Queries learners in `order` (indices into `learners`) and assembles the
    /// 18-dim action in leg order. Each learner draws from its own stream, so
    /// the order does not affect the result.
    pub fn act_in_order(
        &mut self,
        geometry: &RobotGeometry,
        state: &WorldState,
        last: &LastActions,
        mode: ActMode,
        order: &[usize],
    ) -> Result<(Action, Vec<LearnerStep>)> {
        check_len("learner order", self.learners.len(), order.len())?;
        let mut steps: Vec<Option<LearnerStep>> = vec![None; self.learners.len()];
        for &k in order {
            let obs = self.observation(k, geometry, state, last)?;
            let learner = self.learners.get_mut(k).ok_or_else(|| Error::usage(format!("no learner {k}")))?;
            steps[k] = Some(learner.step(obs, mode)?);
        }
        let steps: Vec<LearnerStep> = steps
            .into_iter()
            .map(|s| s.ok_or_else(|| Error::usage("learner order must be a permutation")))
            .collect::<Result<_>>()?;
        let mut action = Action::zero();
        match self.architecture {
            Architecture::Centralized => action.0.copy_from_slice(&steps[0].action),
            Architecture::Decentralized => {
                for leg in LegId::ALL {
                    let a = &steps[leg.index()].action;
                    action.set_leg(leg, [a[0], a[1], a[2]]);
                }
            }
        }
        Ok((action, steps))
    }

    pub fn act(&mut self, geometry: &RobotGeometry, state: &WorldState, last: &LastActions, mode: ActMode) -> Result<(Action, Vec<LearnerStep>)> {
        let order: Vec<usize> = (0..self.learners.len()).collect();
        self.act_in_order(geometry, state, last, mode, &order)
    }

    /// Appends each learner's step to its own buffer.
    pub fn store(&mut self, steps: Vec<LearnerStep>) -> Result<()> {
        check_len("learner steps", self.learners.len(), steps.len())?;
        for (learner, s) in self.learners.iter_mut().zip(steps) {
            learner.buffer.push(s.observation, s.action, s.value, s.log_prob);
        }
        Ok(())
    }

    /// Writes the team reward and terminal flag to every buffer.
    pub fn record_outcome(&mut self, reward: f64, done: bool) -> Result<()> {
        self.learners.iter_mut().try_for_each(|l| l.buffer.record_outcome(reward, done))
    }

    /// One PPO update per learner; learners update concurrently. Returns the
    /// per-learner mean of the update statistics.
    pub fn update(&mut self, config: &PpoConfig) -> Result<UpdateStats> {
        let all: Vec<UpdateStats> = self.learners.par_iter_mut().map(|l| l.update(config)).collect::<Result<_>>()?;
        let n = all.len() as f64;
        let mut mean = UpdateStats::default();
        for s in &all {
            mean.policy_loss += s.policy_loss / n;
            mean.value_loss += s.value_loss / n;
            mean.entropy += s.entropy / n;
            mean.clip_fraction += s.clip_fraction / n;
            mean.approx_kl += s.approx_kl / n;
        }
        Ok(mean)
    }

    pub fn controller(&mut self, mode: ActMode) -> AgentController<'_> {
        AgentController { agent: self, mode }
    }
}

/// Adapter running an agent through [`crate::physics::run_episode`].
pub struct AgentController<'a> {
    agent: &'a mut Agent,
    mode: ActMode,
}

impl Controller for AgentController<'_> {
    fn act(&mut self, geometry: &RobotGeometry, state: &WorldState, last: &LastActions) -> Result<Action> {
        Ok(self.agent.act(geometry, state, last, self.mode)?.0)
    }
}

/// Everything a training run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub seed: u64,
    pub epochs: usize,
    #[serde(default)]
    pub terrain: TerrainSpec,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub geometry: RobotGeometry,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_checkpoint_every() -> usize {
    CHECKPOINT_EVERY
}

impl TrainConfig {
    pub fn new(architecture: Architecture, seed: u64, epochs: usize) -> Self {
        Self {
            architecture,
            seed,
            epochs,
            terrain: TerrainSpec::Flat,
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            geometry: RobotGeometry::default(),
            checkpoint_every: CHECKPOINT_EVERY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be at least 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::domain("checkpoint_every must be at least 1"));
        }
        self.env.validate()?;
        self.ppo.validate()?;
        self.geometry.validate()?;
        self.terrain.validate()
    }

    pub fn environment(&self) -> Result<Environment> {
        Environment::new(self.env.clone(), self.geometry.clone(), Arc::new(self.terrain.build()?))
    }
}

/// One row of the training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub episode_return: f64,
    /// Mean return over the last (up to) 100 epochs.
    pub mean_100: f64,
    pub steps: usize,
    pub fell: bool,
    pub stats: UpdateStats,
}

/// Serializable snapshot of an agent and the run that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub architecture: Architecture,
    pub epoch: usize,
    pub config: TrainConfig,
    pub learners: Vec<Learner>,
}

impl Checkpoint {
    pub fn capture(agent: &Agent, config: &TrainConfig, epoch: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            architecture: agent.architecture,
            epoch,
            config: config.clone(),
            learners: agent.learners.clone(),
        }
    }

    pub fn to_agent(&self) -> Result<Agent> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::domain(format!("unsupported checkpoint format {}", self.format)));
        }
        check_len("checkpoint learners", self.architecture.num_learners(), self.learners.len())?;
        let (i, o) = self.architecture.learner_dims();
        for l in &self.learners {
            check_len("policy input", i, l.policy.net.input_dim())?;
            check_len("policy output", o, l.policy.net.output_dim())?;
            check_len("log_std", o, l.policy.log_std.len())?;
            check_len("value input", i, l.value.input_dim())?;
            check_len("value output", 1, l.value.output_dim())?;
            if !l.policy.net.has_standard_shape() || !l.value.has_standard_shape() {
                return Err(Error::domain("checkpoint networks must have two hidden layers of 64 units"));
            }
        }
        Ok(Agent { architecture: self.architecture, learners: self.learners.clone(), topology: NeighborTopology::default() })
    }
}

/// Per-epoch callback payload.
pub struct EpochReport<'a> {
    pub row: &'a CurveRow,
    /// Present on checkpoint epochs (every `checkpoint_every` and the last).
    pub checkpoint: Option<&'a Checkpoint>,
}

pub type EpochHook<'a> = dyn FnMut(&EpochReport<'_>) -> std::result::Result<(), Box<dyn std::error::Error + Send + Sync>> + 'a;

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub curve: Vec<CurveRow>,
    pub checkpoint: Checkpoint,
}

/// Seed of the episode played in training epoch `epoch` (1-based).
pub fn episode_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(seed, epoch as u64)
}

/// Plays one training episode with sampled actions, filling the agent's buffers.
pub fn collect_episode(agent: &mut Agent, env: &Environment, seed: u64) -> Result<(f64, usize, bool)> {
    let mut state = env.reset(seed);
    let mut last: LastActions = [[0.0; 3]; NUM_LEGS];
    let mut total = 0.0;
    loop {
        let (action, steps) = agent.act(&env.geometry, &state, &last, ActMode::Sample)?;
        agent.store(steps)?;
        let applied = action.clamped();
        let out = env.step(&state, &applied)?;
        total += out.reward;
        // time-limit ends are treated as terminal, no bootstrap
        agent.record_outcome(out.reward, out.done)?;
        last = applied.per_leg();
        state = out.state;
        if out.done {
            return Ok((total, state.step_index, state.terminated));
        }
    }
}

/// Runs `config.epochs` epochs of rollout + update. The hook is called after
/// every epoch; an error from it aborts training as [`Error::Hook`].
pub fn train(config: &TrainConfig, hook: &mut EpochHook<'_>) -> Result<TrainOutput> {
    config.validate()?;
    let env = config.environment()?;
    let mut agent = Agent::new(config.architecture, config.seed, config.ppo.lr)?;
    let mut curve: Vec<CurveRow> = Vec::with_capacity(config.epochs);
    let mut last_checkpoint = None;
    for epoch in 1..=config.epochs {
        let (episode_return, steps, fell) = collect_episode(&mut agent, &env, episode_seed(config.seed, epoch))?;
        let stats = agent.update(&config.ppo)?;
        let window = &curve[curve.len().saturating_sub(RUNNING_MEAN_WINDOW - 1)..];
        let mean_100 = (window.iter().map(|r| r.episode_return).sum::<f64>() + episode_return) / (window.len() + 1) as f64;
        curve.push(CurveRow { epoch, episode_return, mean_100, steps, fell, stats });
        let checkpoint = (epoch % config.checkpoint_every == 0 || epoch == config.epochs)
            .then(|| Checkpoint::capture(&agent, config, epoch));
        let report = EpochReport { row: curve.last().expect("row just pushed"), checkpoint: checkpoint.as_ref() };
        hook(&report).map_err(|source| Error::Hook { epoch, source })?;
        if checkpoint.is_some() {
            last_checkpoint = checkpoint;
        }
    }
    let checkpoint = last_checkpoint.expect("the final epoch always checkpoints");
    Ok(TrainOutput { curve, checkpoint })
}

/// First epoch whose running-mean return reaches `threshold`.
pub fn epochs_to_threshold(curve: &[CurveRow], threshold: f64) -> Option<usize> {
    curve.iter().find(|r| r.mean_100 >= threshold).map(|r| r.epoch)
}

/// Same, on a bare running-mean series whose first entry is epoch 1.
pub fn epochs_to_threshold_series(mean_curve: &[f64], threshold: f64) -> Option<usize> {
    mean_curve.iter().position(|&m| m >= threshold).map(|i| i + 1)
}

/// Deterministic-policy episode returns, one per seed `derive_seed(seed, i)`, i = 1..=episodes.
pub fn evaluate(agent: &mut Agent, env: &Environment, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    (1..=episodes as u64)
        .map(|i| {
            let mut ctl = agent.controller(ActMode::Deterministic);
            crate::physics::run_episode(env, &mut ctl, derive_seed(seed, i)).map(|e| e.total_return)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::run_episode;

    fn no_hook() -> impl FnMut(&EpochReport<'_>) -> std::result::Result<(), Box<dyn std::error::Error + Send + Sync>> {
        |_| Ok(())
    }

    fn zero_agent(arch: Architecture) -> Agent {
        let mut agent = Agent::new(arch, 1, 3e-4).unwrap();
        for l in &mut agent.learners {
            l.policy.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        agent
    }

    fn random_state(env: &Environment, rng: &mut SplitMix64) -> (WorldState, LastActions) {
        let mut state = env.reset(rng.next_u64());
        for (i, q) in state.joints.angles.iter_mut().enumerate() {
            *q = env.geometry.joint_limits[i % 3].from_normalized(rng.next_signed());
        }
        let last: LastActions = std::array::from_fn(|_| [rng.next_signed(), rng.next_signed(), rng.next_signed()]);
        (state, last)
    }

    #[test]
    fn zero_nets_give_zero_action() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let state = env.reset(3);
        for arch in Architecture::ALL {
            let mut agent = zero_agent(arch);
            let (action, steps) = agent.act(&env.geometry, &state, &[[0.0; 3]; 6], ActMode::Deterministic).unwrap();
            assert_eq!(action, Action::zero());
            assert_eq!(steps.len(), arch.num_learners());
        }
    }

    #[test]
    fn same_rng_same_action() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let state = env.reset(4);
        for arch in Architecture::ALL {
            let mut a = Agent::new(arch, 9, 3e-4).unwrap();
            let mut b = a.clone();
            let x = a.act(&env.geometry, &state, &[[0.1; 3]; 6], ActMode::Sample).unwrap().0;
            let y = b.act(&env.geometry, &state, &[[0.1; 3]; 6], ActMode::Sample).unwrap().0;
            assert_eq!(x, y);
        }
    }

    #[test]
    fn central_obs_is_fed_verbatim() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let mut rng = SplitMix64::new(5);
        let mut agent = Agent::centralized(2, 3e-4).unwrap();
        for _ in 0..20 {
            let (state, last) = random_state(&env, &mut rng);
            let (_, steps) = agent.act(&env.geometry, &state, &last, ActMode::Sample).unwrap();
            assert_eq!(steps[0].observation, build_central_obs(&env.geometry, &state, &last).unwrap().to_vec());
        }
    }

    #[test]
    fn processing_order_does_not_matter() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let mut rng = SplitMix64::new(6);
        let base = Agent::decentralized(3, 3e-4).unwrap();
        for _ in 0..20 {
            let (state, last) = random_state(&env, &mut rng);
            let mut order: Vec<usize> = (0..6).collect();
            rng.shuffle(&mut order);
            let (mut a, mut b) = (base.clone(), base.clone());
            let x = a.act(&env.geometry, &state, &last, ActMode::Sample).unwrap();
            let y = b.act_in_order(&env.geometry, &state, &last, ActMode::Sample, &order).unwrap();
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
        }
    }

    #[test]
    fn recorded_obs_ignores_non_neighbors() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let mut rng = SplitMix64::new(7);
        let agent = Agent::decentralized(4, 3e-4).unwrap();
        let topo = NeighborTopology::default();
        for _ in 0..50 {
            let (state, last) = random_state(&env, &mut rng);
            for leg in LegId::ALL {
                let (n1, n2) = topo.neighbors(leg);
                let mut perturbed = state.clone();
                for other in LegId::ALL.into_iter().filter(|&o| o != leg && o != n1 && o != n2) {
                    let q: [f64; 3] = std::array::from_fn(|j| env.geometry.joint_limits[j].from_normalized(rng.next_signed()));
                    perturbed.joints.set_leg(other, q);
                }
                let (mut a, mut b) = (agent.clone(), agent.clone());
                let sa = a.act(&env.geometry, &state, &last, ActMode::Sample).unwrap().1;
                let sb = b.act(&env.geometry, &perturbed, &last, ActMode::Sample).unwrap().1;
                assert_eq!(sa[leg.index()].observation, sb[leg.index()].observation);
            }
        }
    }

    #[test]
    fn parameter_counts() {
        for arch in Architecture::ALL {
            let agent = Agent::new(arch, 1, 3e-4).unwrap();
            assert_eq!(agent.num_params(), arch.closed_form_param_count());
        }
        let central_policy = 84 * 64 + 64 + 64 * 64 + 64 + 64 * 18 + 18;
        let central_value = 84 * 64 + 64 + 64 * 64 + 64 + 64 + 1;
        assert_eq!(Architecture::Centralized.closed_form_param_count(), central_policy + central_value + 18);
        let leg_policy = 42 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3;
        let leg_value = 42 * 64 + 64 + 64 * 64 + 64 + 64 + 1;
        assert_eq!(Architecture::Decentralized.closed_form_param_count(), 6 * (leg_policy + leg_value + 3));
    }

    #[test]
    fn both_architectures_run_as_controllers() {
        let env = Environment::flat(EnvConfig { episode_len: 30, ..EnvConfig::default() }).unwrap();
        for arch in Architecture::ALL {
            let mut agent = Agent::new(arch, 5, 3e-4).unwrap();
            let ep = run_episode(&env, &mut agent.controller(ActMode::Sample), 8).unwrap();
            assert!(ep.steps > 0);
            assert!(ep.trajectory.iter().all(|r| r.action.0.len() == 18));
        }
    }

    fn short_config(arch: Architecture, seed: u64, epochs: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(arch, seed, epochs);
        cfg.env.episode_len = 32;
        cfg
    }

    #[test]
    fn training_is_deterministic() {
        for arch in Architecture::ALL {
            let cfg = short_config(arch, 11, 3);
            let a = train(&cfg, &mut no_hook()).unwrap();
            let b = train(&cfg, &mut no_hook()).unwrap();
            assert_eq!(a.curve, b.curve);
            assert_eq!(a.checkpoint, b.checkpoint);
            assert_eq!(a.curve.len(), 3);
        }
    }

    #[test]
    fn running_mean_window() {
        let cfg = short_config(Architecture::Centralized, 2, 4);
        let out = train(&cfg, &mut no_hook()).unwrap();
        let returns: Vec<f64> = out.curve.iter().map(|r| r.episode_return).collect();
        for (k, row) in out.curve.iter().enumerate() {
            let want = returns[..=k].iter().sum::<f64>() / (k + 1) as f64;
            assert!((row.mean_100 - want).abs() < 1e-12);
        }
    }

    #[test]
    fn hook_errors_carry_the_epoch() {
        let cfg = short_config(Architecture::Decentralized, 1, 5);
        let mut hook = |r: &EpochReport<'_>| -> std::result::Result<(), Box<dyn std::error::Error + Send + Sync>> {
            if r.row.epoch == 2 {
                Err("disk full".into())
            } else {
                Ok(())
            }
        };
        match train(&cfg, &mut hook) {
            Err(Error::Hook { epoch, .. }) => assert_eq!(epoch, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checkpoint_cadence() {
        let mut cfg = short_config(Architecture::Centralized, 1, 5);
        cfg.checkpoint_every = 2;
        let mut seen = Vec::new();
        let mut hook = |r: &EpochReport<'_>| -> std::result::Result<(), Box<dyn std::error::Error + Send + Sync>> {
            if let Some(c) = r.checkpoint {
                seen.push(c.epoch);
            }
            Ok(())
        };
        train(&cfg, &mut hook).unwrap();
        assert_eq!(seen, vec![2, 4, 5]);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = short_config(Architecture::Decentralized, 3, 2);
        let out = train(&cfg, &mut no_hook()).unwrap();
        let text = serde_json::to_string(&out.checkpoint).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out.checkpoint);
        let env = cfg.environment().unwrap();
        let mut a = out.checkpoint.to_agent().unwrap();
        let mut b = back.to_agent().unwrap();
        let mut rng = SplitMix64::new(8);
        for _ in 0..1000 {
            let (state, last) = random_state(&env, &mut rng);
            let x = a.act(&env.geometry, &state, &last, ActMode::Deterministic).unwrap().0;
            let y = b.act(&env.geometry, &state, &last, ActMode::Deterministic).unwrap().0;
            assert_eq!(x, y);
        }
        assert_eq!(evaluate(&mut a, &env, 2, 5).unwrap(), evaluate(&mut b, &env, 2, 5).unwrap());
    }

    #[test]
    fn checkpoint_shape_is_checked() {
        let cfg = short_config(Architecture::Centralized, 3, 1);
        let mut ck = train(&cfg, &mut no_hook()).unwrap().checkpoint;
        ck.architecture = Architecture::Decentralized;
        assert!(ck.to_agent().is_err());
    }

    #[test]
    fn threshold_lookup() {
        let rows: Vec<CurveRow> = [1.0, 3.0, 2.0, 5.0]
            .iter()
            .enumerate()
            .map(|(i, &m)| CurveRow { epoch: i + 1, episode_return: m, mean_100: m, steps: 1, fell: false, stats: UpdateStats::default() })
            .collect();
        assert_eq!(epochs_to_threshold(&rows, -1.0), Some(1));
        assert_eq!(epochs_to_threshold(&rows, 2.5), Some(2));
        assert_eq!(epochs_to_threshold(&rows, 9.0), None);
        assert_eq!(epochs_to_threshold_series(&[0.0, 4.0], 4.0), Some(2));
    }

    #[test]
    fn architecture_parsing() {
        assert_eq!("central".parse::<Architecture>().unwrap(), Architecture::Centralized);
        assert_eq!("Decentralized".parse::<Architecture>().unwrap(), Architecture::Decentralized);
        assert!("hybrid".parse::<Architecture>().is_err());
        assert_eq!(serde_json::to_string(&Architecture::Decentralized).unwrap(), "\"decentral\"");
    }
}
