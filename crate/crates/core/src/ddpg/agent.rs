use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::buffer::Batch;
use crate::env::DEFAULT_REWARD_SCALE;
use crate::error::{invalid, Error, Result};
use crate::numerics::checkpoint::NetworkDocument;
use crate::numerics::{Adam, Gradients, MlpParameters, Mode, RealMatrix, Trace};

/// Exploration actions are kept strictly inside the tanh range.
pub const ACTION_CLIP: f64 = 1.0 - 1e-6;

/// Per-step multiplicative decay of the Gaussian exploration spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            initial: 0.1,
            decay: 0.9995,
            floor: 0.01,
        }
    }
}

impl NoiseSchedule {
    pub fn next(&self, std: f64) -> f64 {
        (std * self.decay).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub tau: f64,
    pub discount: f64,
    pub hidden: usize,
    pub noise: NoiseSchedule,
    pub reward_scale: f64,
    /// Batch-norm mode of the critic while it differentiates the policy.
    pub actor_update_critic_mode: Mode,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-3,
            critic_lr: 2e-3,
            batch_size: 32,
            buffer_capacity: 10_000,
            tau: 0.005,
            discount: 0.99,
            hidden: 300,
            noise: NoiseSchedule::default(),
            reward_scale: DEFAULT_REWARD_SCALE,
            actor_update_critic_mode: Mode::Train,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return invalid("learning rates must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return invalid("soft-update rate must lie in (0, 1]");
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return invalid("discount must lie in [0, 1)");
        }
        if self.batch_size < 2 || self.batch_size > self.buffer_capacity {
            // batch normalization needs at least two rows
            return invalid("batch size must lie in [2, buffer capacity]");
        }
        if self.hidden == 0 {
            return invalid("hidden width must be at least 1");
        }
        let n = &self.noise;
        if !(n.initial >= 0.0 && n.floor >= 0.0 && n.decay > 0.0 && n.decay <= 1.0) {
            return invalid("noise schedule must be non-negative with decay in (0, 1]");
        }
        if !(self.reward_scale > 0.0) {
            return invalid("reward scale must be positive");
        }
        Ok(())
    }
}

/// Actor, critic, their slowly tracking targets and both optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    pub config: AgentConfig,
    pub actor: MlpParameters,
    pub critic: MlpParameters,
    pub actor_target: MlpParameters,
    pub critic_target: MlpParameters,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub noise_std: f64,
    state_dim: usize,
    action_dim: usize,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: AgentConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return invalid("state and action dimensions must be positive");
        }
        let actor = MlpParameters::actor(state_dim, config.hidden, action_dim, rng);
        let critic = MlpParameters::critic(state_dim, action_dim, config.hidden, rng);
        Ok(Self::from_networks(config, actor, critic))
    }

    /// Targets start as exact copies of the online networks.
    pub fn from_networks(config: AgentConfig, actor: MlpParameters, critic: MlpParameters) -> Self {
        let state_dim = actor.topology.input_dim();
        let action_dim = actor.topology.output_dim();
        Self {
            noise_std: config.noise.initial,
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            config,
            state_dim,
            action_dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Deterministic policy output, optionally perturbed by clipped Gaussian
    /// noise at the current spread.
    pub fn select_action(&self, state: &[f64], explore: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
        if state.len() != self.state_dim {
            return invalid(format!("state has length {}, expected {}", state.len(), self.state_dim));
        }
        let mut a = self
            .actor
            .forward(&RealMatrix::row_vector(state), Mode::Eval)?
            .into_data();
        if explore {
            for x in &mut a {
                let z: f64 = StandardNormal.sample(rng);
                *x = (*x + self.noise_std * z).clamp(-ACTION_CLIP, ACTION_CLIP);
            }
        }
        Ok(a)
    }

    pub fn decay_noise(&mut self) {
        self.noise_std = self.config.noise.next(self.noise_std);
    }

    /// Bootstrapped targets `r̂ + γ Q'(s', μ'(s'))` from the target networks.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Vec<f64>> {
        let next_a = self.actor_target.forward(&batch.next_states, Mode::Eval)?;
        let q_next = self
            .critic_target
            .forward(&batch.next_states.hcat(&next_a)?, Mode::Eval)?;
        Ok(batch
            .rewards
            .iter()
            .zip(q_next.data())
            .map(|(r, q)| r + self.config.discount * q)
            .collect())
    }

    /// Mean squared Bellman residual and its gradient with respect to the
    /// critic parameters (critic in train mode).
    pub fn critic_gradients(&self, batch: &Batch) -> Result<(f64, Gradients, Trace)> {
        self.check_batch(batch)?;
        let y = self.critic_targets(batch)?;
        let input = batch.states.hcat(&batch.actions)?;
        let (q, trace) = self.critic.forward_traced(&input, Mode::Train)?;
        let n = batch.len() as f64;
        let residual: Vec<f64> = q.data().iter().zip(&y).map(|(q, y)| q - y).collect();
        let loss = residual.iter().map(|d| d * d).sum::<f64>() / n;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("critic loss is {loss}")));
        }
        let upstream = RealMatrix::from_vec(batch.len(), 1, residual.iter().map(|d| 2.0 * d / n).collect())?;
        let grads = self.critic.backward(&trace, &upstream)?;
        Ok((loss, grads, trace))
    }

    /// One descent step on the mean squared Bellman residual. Returns the
    /// loss before the step.
    pub fn update_critic(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grads, trace) = self.critic_gradients(batch)?;
        self.critic_opt.update(&mut self.critic, &grads, self.config.critic_lr)?;
        self.critic.update_running_stats(&trace);
        Ok(loss)
    }

    /// Mean `Q(s, μ(s))` over the batch: actor in train mode, critic in
    /// `actor_update_critic_mode`.
    pub fn policy_objective(&self, states: &RealMatrix) -> Result<f64> {
        let a = self.actor.forward(states, Mode::Train)?;
        let q = self
            .critic
            .forward(&states.hcat(&a)?, self.config.actor_update_critic_mode)?;
        Ok(q.data().iter().sum::<f64>() / states.rows() as f64)
    }

    /// Gradient of `−mean Q(s, μ(s))` with respect to the actor parameters.
    pub fn actor_gradients(&self, states: &RealMatrix) -> Result<(f64, Gradients, Trace)> {
        let (a, actor_trace) = self.actor.forward_traced(states, Mode::Train)?;
        let (q, critic_trace) = self
            .critic
            .forward_traced(&states.hcat(&a)?, self.config.actor_update_critic_mode)?;
        let n = states.rows();
        let objective = q.data().iter().sum::<f64>() / n as f64;
        let upstream = RealMatrix::from_vec(n, 1, vec![-1.0 / n as f64; n])?;
        let d_input = self.critic.input_gradient(&critic_trace, &upstream)?;
        let (_, d_action) = d_input.hsplit(self.state_dim)?;
        let grads = self.actor.backward(&actor_trace, &d_action)?;
        Ok((objective, grads, actor_trace))
    }

    /// One ascent step on the sampled policy gradient. The critic is left
    /// untouched. Returns the objective before the step.
    pub fn update_actor(&mut self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let (objective, grads, trace) = self.actor_gradients(&batch.states)?;
        if !objective.is_finite() {
            return Err(Error::NumericOverflow(format!("policy objective is {objective}")));
        }
        self.actor_opt.update(&mut self.actor, &grads, self.config.actor_lr)?;
        self.actor.update_running_stats(&trace);
        Ok(objective)
    }

    /// `target ← τ·online + (1−τ)·target` over every stored tensor, running
    /// batch-norm statistics included.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return invalid("soft-update rate must lie in (0, 1]");
        }
        blend(&mut self.actor_target, &self.actor, tau);
        blend(&mut self.critic_target, &self.critic, tau);
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.len() < 2
            || batch.states.cols() != self.state_dim
            || batch.next_states.cols() != self.state_dim
            || batch.actions.cols() != self.action_dim
        {
            return invalid("batch does not match the agent dimensions");
        }
        Ok(())
    }

    pub fn to_state(&self) -> AgentState {
        AgentState {
            config: self.config.clone(),
            actor: NetworkDocument::from_params(&self.actor),
            critic: NetworkDocument::from_params(&self.critic),
            actor_target: NetworkDocument::from_params(&self.actor_target),
            critic_target: NetworkDocument::from_params(&self.critic_target),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            noise_std: self.noise_std,
        }
    }

    pub fn from_state(state: AgentState) -> Result<Self> {
        state.config.validate()?;
        let actor = state.actor.into_params()?;
        let critic = state.critic.into_params()?;
        let actor_target = state.actor_target.into_params()?;
        let critic_target = state.critic_target.into_params()?;
        if actor.topology != actor_target.topology || critic.topology != critic_target.topology {
            return invalid("target networks differ in shape from the online networks");
        }
        let mut agent = Self::from_networks(state.config, actor, critic);
        agent.actor_target = actor_target;
        agent.critic_target = critic_target;
        agent.actor_opt = state.actor_opt;
        agent.critic_opt = state.critic_opt;
        agent.noise_std = state.noise_std;
        Ok(agent)
    }
}

fn blend(target: &mut MlpParameters, online: &MlpParameters, tau: f64) {
    for ((_, t), (_, _, o)) in target.named_tensors_mut().into_iter().zip(online.named_tensors()) {
        if tau == 1.0 {
            t.copy_from_slice(o);
        } else {
            for (t, o) in t.iter_mut().zip(o) {
                *t += tau * (o - *t);
            }
        }
    }
}

/// Serializable snapshot of everything an agent needs to continue training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub config: AgentConfig,
    pub actor: NetworkDocument,
    pub critic: NetworkDocument,
    pub actor_target: NetworkDocument,
    pub critic_target: NetworkDocument,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub noise_std: f64,
}
