//! Soft actor-critic meta-training of the meta-sampler.
//!
//! The environment is ensemble training itself: the observation is the
//! meta-state of the current ensemble, the action is the Gaussian center
//! `mu`, and the reward is the change in validation AUCPRC caused by the
//! member trained on the resulting meta-sampled subset.
//!
//! Networks: a policy with a shared ReLU hidden layer and two linear heads
//! (mean, log-std), a soft Q-function over `[state, action]`, a state-value
//! function and its Polyak-averaged target. The action is squashed into
//! [0, 1] by `(tanh(u) + 1) / 2`.

use std::f64::consts::{LN_2, PI};

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::ensemble::{EnsembleConfig, EnsembleEnv};
use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::metasampling::{MetaState, DEFAULT_BINS, DEFAULT_SIGMA};
use crate::neural::{
    adam_step, soft_update, AdamState, Gradients, Mlp, MlpDocument, StepDecay,
};
use crate::seeding::{self, Rng, STREAM_AGENT, STREAM_EPISODE, STREAM_INIT};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const SAMPLER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub lr: f64,
    pub lr_decay_steps: u64,
    pub lr_decay_ratio: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Total number of network updates.
    pub gradient_steps: usize,
    /// Environment steps taken with uniform random actions before updates start.
    pub random_steps: usize,
    pub hidden: usize,
    /// Ensemble size of every meta-training episode.
    pub k: usize,
    pub bins: usize,
    pub sigma: f64,
    pub learner: LearnerKind,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.01,
            alpha: 0.1,
            lr: 1e-3,
            lr_decay_steps: 10,
            lr_decay_ratio: 0.99,
            batch_size: 64,
            replay_capacity: 1000,
            gradient_steps: 1000,
            random_steps: 500,
            hidden: 50,
            k: 10,
            bins: DEFAULT_BINS,
            sigma: DEFAULT_SIGMA,
            learner: LearnerKind::Tree,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.gamma) || !unit(self.tau) {
            return Err(Error::invalid("gamma and tau must lie in (0, 1]"));
        }
        // alpha = 0 drops the entropy bonus and is allowed.
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        if !(self.lr > 0.0) || !(self.lr_decay_ratio > 0.0) {
            return Err(Error::invalid("learning rate and decay ratio must be positive"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size || self.hidden == 0 {
            return Err(Error::invalid(
                "batch size and hidden width must be positive; replay must hold a batch",
            ));
        }
        if self.k < 2 {
            return Err(Error::invalid("meta-training episodes need k >= 2"));
        }
        self.ensemble().validate()
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            k: self.k,
            bins: self.bins,
            sigma: self.sigma,
            learner: self.learner,
        }
    }

    pub fn state_size(&self) -> usize {
        2 * self.bins
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: MetaState,
    pub action: f64,
    pub reward: f64,
    pub next_state: MetaState,
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            buf: Vec::with_capacity(capacity),
            capacity,
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (head, tail) = if self.buf.len() < self.capacity {
            (&self.buf[..], &self.buf[..0])
        } else {
            (&self.buf[self.next..], &self.buf[..self.next])
        };
        head.iter().chain(tail)
    }

    /// Uniform minibatch without replacement.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        if self.buf.len() < batch {
            return Err(Error::InsufficientReplay {
                available: self.buf.len(),
                needed: batch,
            });
        }
        Ok(index::sample(rng, self.buf.len(), batch)
            .into_iter()
            .map(|i| &self.buf[i])
            .collect())
    }
}

/// `log(da/du)` for `a = (tanh(u) + 1) / 2`, stable for large `|u|`.
pub fn log_squash_jacobian(u: f64) -> f64 {
    // 1 - tanh(u)^2 = 4 e^{-2|u|} / (1 + e^{-2|u|})^2
    let x = u.abs();
    LN_2 - 2.0 * x - 2.0 * (-2.0 * x).exp().ln_1p()
}

#[inline]
pub fn squash(u: f64) -> f64 {
    0.5 * (u.tanh() + 1.0)
}

fn normal_log_density_std(eps: f64, log_std: f64) -> f64 {
    -0.5 * eps * eps - log_std - 0.5 * (2.0 * PI).ln()
}

/// Squashed-Gaussian policy over `mu` in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSampler {
    policy: Mlp,
    bins: usize,
    sigma: f64,
}

impl MetaSampler {
    /// Randomly initialized policy `{2b, hidden, 2}`.
    pub fn new(bins: usize, sigma: f64, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = seeding::derived_rng(seed, STREAM_INIT, 0);
        let policy = Mlp::relu_network(&[2 * bins, hidden, 2], &mut rng)?;
        Self::from_network(policy, bins, sigma)
    }

    pub fn from_network(policy: Mlp, bins: usize, sigma: f64) -> Result<Self> {
        if policy.input_size() != 2 * bins || policy.output_size() != 2 {
            return Err(Error::Format(format!(
                "policy network maps {} -> {}, expected {} -> 2",
                policy.input_size(),
                policy.output_size(),
                2 * bins
            )));
        }
        if !(sigma > 0.0) {
            return Err(Error::Format("sigma must be positive".into()));
        }
        Ok(Self {
            policy,
            bins,
            sigma,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn network(&self) -> &Mlp {
        &self.policy
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    fn check_state(&self, state: &MetaState) -> Result<()> {
        if state.bins() != self.bins {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.bins,
                got: state.values().len(),
            });
        }
        Ok(())
    }

    /// Pre-squash mean and clamped log-std.
    pub fn heads(&self, state: &MetaState) -> Result<(f64, f64)> {
        self.check_state(state)?;
        let out = self.policy.predict(state.values())?;
        Ok((out[0], out[1].clamp(LOG_STD_MIN, LOG_STD_MAX)))
    }

    /// Draws `a = (tanh(u) + 1) / 2` with `u ~ N(m, exp(l))`; returns the
    /// action and its log-density on [0, 1].
    pub fn sample_action(&self, state: &MetaState, rng: &mut Rng) -> Result<(f64, f64)> {
        let (mean, log_std) = self.heads(state)?;
        let eps: f64 = StandardNormal.sample(rng);
        Ok(squashed_sample(mean, log_std, eps))
    }

    pub fn deterministic_action(&self, state: &MetaState) -> Result<f64> {
        Ok(squash(self.heads(state)?.0))
    }

    pub fn to_document(&self) -> SamplerDocument {
        SamplerDocument {
            format_version: SAMPLER_FORMAT_VERSION,
            bins: self.bins,
            sigma: self.sigma,
            network: self.policy.to_document(),
        }
    }

    pub fn from_document(doc: &SamplerDocument) -> Result<Self> {
        if doc.format_version != SAMPLER_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported sampler format version {}",
                doc.format_version
            )));
        }
        Self::from_network(Mlp::from_document(&doc.network)?, doc.bins, doc.sigma)
    }

    /// Fails if the sampler was trained for a different histogram size.
    pub fn expect_bins(&self, bins: usize) -> Result<()> {
        if self.bins != bins {
            return Err(Error::Format(format!(
                "sampler uses {} bins, configuration asks for {bins}",
                self.bins
            )));
        }
        Ok(())
    }
}

/// Action and log-density for a given standard-normal draw.
pub fn squashed_sample(mean: f64, log_std: f64, eps: f64) -> (f64, f64) {
    let u = mean + log_std.exp() * eps;
    let log_prob = normal_log_density_std(eps, log_std) - log_squash_jacobian(u);
    (squash(u), log_prob)
}

/// Log-density of action `a` in (0, 1) under the squashed Gaussian.
pub fn squashed_log_density(mean: f64, log_std: f64, a: f64) -> f64 {
    let u = (2.0 * a - 1.0).atanh();
    let eps = (u - mean) / log_std.exp();
    normal_log_density_std(eps, log_std) - log_squash_jacobian(u)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplerDocument {
    pub format_version: u32,
    pub bins: usize,
    pub sigma: f64,
    pub network: MlpDocument,
}

pub fn serialize_sampler(sampler: &MetaSampler) -> Result<String> {
    serde_json::to_string_pretty(&sampler.to_document()).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_sampler(document: &str) -> Result<MetaSampler> {
    let doc: SamplerDocument =
        serde_json::from_str(document).map_err(|e| Error::Format(e.to_string()))?;
    MetaSampler::from_document(&doc)
}

fn q_input(state: &MetaState, action: f64) -> Vec<f64> {
    let mut x = state.values().to_vec();
    x.push(action);
    x
}

fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(name.into()))
    }
}

/// `1/2 mean (Q(s, a) - (r + gamma (1 - done) V_target(s')))^2` and its
/// gradient in the Q parameters.
pub fn q_loss(q: &Mlp, v_target: &Mlp, batch: &[&Transition], gamma: f64) -> Result<(f64, Gradients)> {
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(q);
    let mut loss = 0.0;
    for t in batch {
        let bootstrap = if t.terminal {
            0.0
        } else {
            v_target.predict(t.next_state.values())?[0]
        };
        let target = t.reward + gamma * bootstrap;
        let (out, cache) = q.forward(&q_input(&t.state, t.action))?;
        let diff = out[0] - target;
        loss += 0.5 * diff * diff / n;
        q.backward_into(&cache, &[diff / n], &mut grads)?;
    }
    Ok((finite("Q loss", loss)?, grads))
}

/// Reparameterized policy sample for one state, with the pieces the
/// gradients need.
struct PolicySample {
    log_std: f64,
    clamped: bool,
    eps: f64,
    u: f64,
    action: f64,
    log_prob: f64,
}

fn policy_sample(policy: &Mlp, state: &MetaState, eps: f64) -> Result<(PolicySample, crate::neural::ForwardCache)> {
    let (out, cache) = policy.forward(state.values())?;
    let raw = out[1];
    let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
    let u = out[0] + log_std.exp() * eps;
    let (action, log_prob) = squashed_sample(out[0], log_std, eps);
    Ok((
        PolicySample {
            log_std,
            clamped: raw != log_std,
            eps,
            u,
            action,
            log_prob,
        },
        cache,
    ))
}

/// `1/2 mean (V(s) - (Q(s, a~) - alpha log p(a~|s)))^2` with `a~` drawn
/// from the policy by the given standard-normal `noise`; gradient in V only.
pub fn v_loss(
    v: &Mlp,
    q: &Mlp,
    policy: &MetaSampler,
    batch: &[&Transition],
    noise: &[f64],
    alpha: f64,
) -> Result<(f64, Gradients)> {
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(v);
    let mut loss = 0.0;
    for (t, &eps) in batch.iter().zip(noise) {
        let (ps, _) = policy_sample(&policy.policy, &t.state, eps)?;
        let target = q.predict(&q_input(&t.state, ps.action))?[0] - alpha * ps.log_prob;
        let (out, cache) = v.forward(t.state.values())?;
        let diff = out[0] - target;
        loss += 0.5 * diff * diff / n;
        v.backward_into(&cache, &[diff / n], &mut grads)?;
    }
    Ok((finite("V loss", loss)?, grads))
}

/// `mean (alpha log p(a~|s) - Q(s, a~))` through the reparameterized sample;
/// gradient in the policy parameters.
pub fn policy_loss(
    policy: &MetaSampler,
    q: &Mlp,
    batch: &[&Transition],
    noise: &[f64],
    alpha: f64,
) -> Result<(f64, Gradients)> {
    let net = &policy.policy;
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    let action_index = q.input_size() - 1;
    for (t, &eps) in batch.iter().zip(noise) {
        let (ps, cache) = policy_sample(net, &t.state, eps)?;
        let (q_out, q_cache) = q.forward(&q_input(&t.state, ps.action))?;
        loss += (alpha * ps.log_prob - q_out[0]) / n;

        // Q's input gradient gives dQ/da; q's parameter gradient is discarded.
        let mut scratch = Gradients::zeros_like(q);
        let dq_da = q.backward_into(&q_cache, &[1.0], &mut scratch)?[action_index];
        let tanh_u = ps.u.tanh();
        let da_du = 0.5 * (1.0 - tanh_u * tanh_u);
        let dlogp_du = 2.0 * tanh_u;
        let dl_du = alpha * dlogp_du - dq_da * da_du;
        let std = ps.log_std.exp();
        let d_mean = dl_du;
        let d_log_std = if ps.clamped {
            0.0
        } else {
            dl_du * std * ps.eps - alpha
        };
        net.backward_into(&cache, &[d_mean / n, d_log_std / n], &mut grads)?;
    }
    Ok((finite("policy loss", loss)?, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub q_loss: f64,
    pub v_loss: f64,
    pub policy_loss: f64,
}

/// Meta-sampler plus critics and optimizer state.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub sampler: MetaSampler,
    pub q: Mlp,
    pub v: Mlp,
    pub v_target: Mlp,
    pub opt_q: AdamState,
    pub opt_v: AdamState,
    pub opt_policy: AdamState,
    decay: [StepDecay; 3],
    config: SacConfig,
}

impl SacAgent {
    pub fn new(config: &SacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let s = config.state_size();
        let h = config.hidden;
        let sampler = MetaSampler::new(config.bins, config.sigma, h, seed)?;
        let q = Mlp::relu_network(&[s + 1, h, h, 1], &mut seeding::derived_rng(seed, STREAM_INIT, 1))?;
        let v = Mlp::relu_network(&[s, h, h, 1], &mut seeding::derived_rng(seed, STREAM_INIT, 2))?;
        let decay = StepDecay::new(config.lr_decay_steps, config.lr_decay_ratio);
        Ok(Self {
            opt_q: AdamState::new(&q, config.lr),
            opt_v: AdamState::new(&v, config.lr),
            opt_policy: AdamState::new(sampler.network(), config.lr),
            v_target: v.clone(),
            sampler,
            q,
            v,
            decay: [decay; 3],
            config: *config,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    /// One SAC update on a fresh minibatch: Q, then V, then policy, then
    /// the target value network, then one learning-rate decay tick each.
    pub fn update(&mut self, replay: &ReplayMemory, rng: &mut Rng) -> Result<LossReport> {
        let batch = replay.sample(self.config.batch_size, rng)?;
        let noise: Vec<f64> = (0..batch.len()).map(|_| StandardNormal.sample(rng)).collect();
        self.update_on(&batch, &noise)
    }

    /// [`update`](Self::update) on a given minibatch and policy noise.
    pub fn update_on(&mut self, batch: &[&Transition], noise: &[f64]) -> Result<LossReport> {
        let c = self.config;
        let (q_l, q_g) = q_loss(&self.q, &self.v_target, batch, c.gamma)?;
        adam_step(&mut self.q, &q_g, &mut self.opt_q)?;

        let (v_l, v_g) = v_loss(&self.v, &self.q, &self.sampler, batch, noise, c.alpha)?;
        adam_step(&mut self.v, &v_g, &mut self.opt_v)?;

        let (p_l, p_g) = policy_loss(&self.sampler, &self.q, batch, noise, c.alpha)?;
        adam_step(self.sampler.network_mut(), &p_g, &mut self.opt_policy)?;

        soft_update(&mut self.v_target, &self.v, c.tau)?;

        let [dq, dv, dp] = &mut self.decay;
        dq.tick(&mut self.opt_q);
        dv.tick(&mut self.opt_v);
        dp.tick(&mut self.opt_policy);
        Ok(LossReport {
            q_loss: q_l,
            v_loss: v_l,
            policy_loss: p_l,
        })
    }
}

pub fn sac_update(agent: &mut SacAgent, replay: &ReplayMemory, rng: &mut Rng) -> Result<LossReport> {
    agent.update(replay, rng)
}

/// Training and validation split of one meta-training task.
#[derive(Debug, Clone)]
pub struct Task {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub step: usize,
    pub action: f64,
    pub reward: f64,
    /// Validation AUCPRC after the step's member joined.
    pub valid_aucprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub task: usize,
    pub initial_valid_aucprc: f64,
    pub steps: Vec<EpisodeStep>,
}

impl EpisodeTrace {
    pub fn final_valid_aucprc(&self) -> f64 {
        self.steps.last().map_or(self.initial_valid_aucprc, |s| s.valid_aucprc)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Chooses actions during an episode and reacts after each stored transition.
pub trait EpisodeAgent {
    fn act(&mut self, state: &MetaState) -> Result<f64>;

    fn after_step(&mut self, _replay: &ReplayMemory) -> Result<()> {
        Ok(())
    }

    /// Stops the episode early.
    fn finished(&self) -> bool {
        false
    }
}

/// Uniform actions.
pub struct RandomAgent(pub Rng);

impl EpisodeAgent for RandomAgent {
    fn act(&mut self, _: &MetaState) -> Result<f64> {
        Ok(self.0.random::<f64>())
    }
}

/// Stochastic actions from a fixed sampler.
pub struct PolicyAgent<'a> {
    pub sampler: &'a MetaSampler,
    pub rng: Rng,
}

impl EpisodeAgent for PolicyAgent<'_> {
    fn act(&mut self, state: &MetaState) -> Result<f64> {
        Ok(self.sampler.sample_action(state, &mut self.rng)?.0)
    }
}

/// Builds one `k`-member ensemble, storing a transition per step. The
/// transition that completes the ensemble is terminal.
pub fn run_episode(
    task: &Task,
    agent: &mut dyn EpisodeAgent,
    config: &SacConfig,
    replay: &mut ReplayMemory,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut env = EnsembleEnv::new(&task.train, &task.valid, config.ensemble(), seed)?;
    let mut trace = EpisodeTrace {
        episode: 0,
        task: 0,
        initial_valid_aucprc: env.valid_aucprc(),
        steps: Vec::with_capacity(config.k - 1),
    };
    let mut state = env.state()?;
    while !env.is_done() && !agent.finished() {
        let action = agent.act(&state)?;
        if !(0.0..=1.0).contains(&action) {
            return Err(Error::NonFinite(format!("action {action}")));
        }
        let out = env.step(action)?;
        let next_state = env.state()?;
        let reward = out.reward();
        replay.push(Transition {
            state,
            action,
            reward,
            next_state: next_state.clone(),
            terminal: env.is_done(),
        });
        trace.steps.push(EpisodeStep {
            step: env.size() - 1,
            action,
            reward,
            valid_aucprc: out.valid_after,
        });
        state = next_state;
        agent.after_step(replay)?;
    }
    Ok(trace)
}

/// Agent state during meta-training: warm-up with random actions, then
/// policy actions with one SAC update after every environment step.
pub struct MetaTrainer {
    pub agent: SacAgent,
    rng: Rng,
    env_steps: usize,
    updates: usize,
    pub losses: Vec<LossReport>,
}

impl MetaTrainer {
    pub fn new(config: &SacConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            agent: SacAgent::new(config, seed)?,
            rng: seeding::derived_rng(seed, STREAM_AGENT, 0),
            env_steps: 0,
            updates: 0,
            losses: Vec::new(),
        })
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    fn warming_up(&self) -> bool {
        self.env_steps < self.agent.config().random_steps
    }
}

impl EpisodeAgent for MetaTrainer {
    fn act(&mut self, state: &MetaState) -> Result<f64> {
        if self.warming_up() {
            Ok(self.rng.random::<f64>())
        } else {
            Ok(self.agent.sampler.sample_action(state, &mut self.rng)?.0)
        }
    }

    fn after_step(&mut self, replay: &ReplayMemory) -> Result<()> {
        let warm = self.warming_up();
        self.env_steps += 1;
        if warm || replay.len() < self.agent.config().batch_size || self.finished() {
            return Ok(());
        }
        let report = self.agent.update(replay, &mut self.rng)?;
        self.losses.push(report);
        self.updates += 1;
        Ok(())
    }

    fn finished(&self) -> bool {
        self.updates >= self.agent.config().gradient_steps
    }
}

#[derive(Debug, Clone)]
pub struct MetaTrainOutput {
    pub sampler: MetaSampler,
    pub episodes: Vec<EpisodeTrace>,
    pub losses: Vec<LossReport>,
}

/// Episode cap: enough environment steps for the warm-up plus every update,
/// twice over, so a degenerate replay cannot loop forever.
fn max_episodes(config: &SacConfig) -> usize {
    let steps = config.random_steps + config.gradient_steps + config.batch_size;
    2 * steps.div_ceil(config.k - 1) + 1
}

/// Runs episodes round-robin over `tasks` until the update budget is spent.
pub fn meta_train(tasks: &[Task], config: &SacConfig, seed: u64) -> Result<MetaTrainOutput> {
    if tasks.is_empty() {
        return Err(Error::invalid("meta-training needs at least one task"));
    }
    let mut trainer = MetaTrainer::new(config, seed)?;
    let mut replay = ReplayMemory::new(config.replay_capacity);
    let mut episodes = Vec::new();
    let limit = max_episodes(config);
    let mut i = 0;
    while !trainer.finished() && i < limit {
        let task_id = i % tasks.len();
        let episode_seed = seeding::derive(seed, STREAM_EPISODE, i as u64);
        let mut trace = run_episode(&tasks[task_id], &mut trainer, config, &mut replay, episode_seed)?;
        trace.episode = i;
        trace.task = task_id;
        episodes.push(trace);
        i += 1;
    }
    Ok(MetaTrainOutput {
        sampler: trainer.agent.sampler,
        episodes,
        losses: trainer.losses,
    })
}
