use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{AgentState, DdpgAgent};
use super::buffer::{Experience, ReplayBuffer};
use crate::env::{StarRisEnv, StepResult};
use crate::error::{invalid, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "starris.trainer/v1";

/// Aggregates over the steps of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub mean_scaled_reward: f64,
    /// Unscaled, bits per joule.
    pub mean_ee: f64,
    /// Mean over steps of the smallest user rate, bps/Hz.
    pub min_rate: f64,
    pub mean_power: f64,
    /// Failed constraint checks summed over the episode.
    pub violations: usize,
}

#[derive(Debug, Default)]
pub struct EpisodeAccumulator {
    steps: usize,
    scaled_reward: f64,
    ee: f64,
    min_rate: f64,
    power: f64,
    violations: usize,
}

impl EpisodeAccumulator {
    pub fn push(&mut self, r: &StepResult) {
        self.steps += 1;
        self.scaled_reward += r.scaled_reward;
        self.ee += r.energy_efficiency;
        self.min_rate += r.min_rate;
        self.power += r.transmit_power;
        self.violations += r.constraints.violations();
    }

    pub fn finish(&self, episode: usize) -> EpisodeMetrics {
        let n = self.steps.max(1) as f64;
        EpisodeMetrics {
            episode,
            mean_scaled_reward: self.scaled_reward / n,
            mean_ee: self.ee / n,
            min_rate: self.min_rate / n,
            mean_power: self.power / n,
            violations: self.violations,
        }
    }
}

/// Seeded streams: network initialization, channel draws, and the agent's
/// exploration noise plus minibatch sampling.
pub fn seeded_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng, ChaCha8Rng) {
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        rng
    };
    (stream(0), stream(1), stream(2))
}

/// Everything Algorithm-1 style training mutates, so a run can be
/// checkpointed between episodes and resumed bit-for-bit.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub agent: DdpgAgent,
    pub buffer: ReplayBuffer,
    pub env: StarRisEnv,
    pub env_rng: ChaCha8Rng,
    pub agent_rng: ChaCha8Rng,
    pub episodes_done: usize,
    pub updates: u64,
}

impl Trainer {
    pub fn new(env: StarRisEnv, config: super::AgentConfig, seed: u64) -> Result<Self> {
        if config.reward_scale != env.reward_scale() {
            return invalid("agent and environment disagree on the reward scale");
        }
        let (mut init_rng, env_rng, agent_rng) = seeded_streams(seed);
        let agent = DdpgAgent::new(env.state_dim(), env.action_dim(), config, &mut init_rng)?;
        let buffer = ReplayBuffer::new(agent.config.buffer_capacity, env.state_dim(), env.action_dim())?;
        Ok(Self {
            agent,
            buffer,
            env,
            env_rng,
            agent_rng,
            episodes_done: 0,
            updates: 0,
        })
    }

    /// Reset, then `steps` rounds of explore → step → store → (critic,
    /// actor, soft) updates once the buffer holds a full minibatch.
    pub fn run_episode(&mut self, steps: usize) -> Result<EpisodeMetrics> {
        let mut state = self.env.reset(&mut self.env_rng)?;
        let mut acc = EpisodeAccumulator::default();
        let batch_size = self.agent.config.batch_size;
        for _ in 0..steps {
            let action = self.agent.select_action(&state, true, &mut self.agent_rng)?;
            let result = self.env.step(&action)?;
            self.buffer.store(Experience {
                state,
                action,
                reward: result.scaled_reward,
                next_state: result.state.clone(),
            })?;
            if self.buffer.len() >= batch_size {
                let batch = self.buffer.sample_batch(batch_size, &mut self.agent_rng)?;
                self.agent.update_critic(&batch)?;
                self.agent.update_actor(&batch)?;
                self.agent.soft_update(self.agent.config.tau)?;
                self.updates += 1;
            }
            self.agent.decay_noise();
            acc.push(&result);
            state = result.state;
        }
        let metrics = acc.finish(self.episodes_done);
        self.episodes_done += 1;
        Ok(metrics)
    }

    /// Runs `episodes` more episodes, handing each row to `on_episode` as it
    /// completes (for incremental logging).
    pub fn train(
        &mut self,
        episodes: usize,
        steps: usize,
        mut on_episode: impl FnMut(&EpisodeMetrics, &Trainer) -> Result<()>,
    ) -> Result<Vec<EpisodeMetrics>> {
        let mut log = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let m = self.run_episode(steps)?;
            on_episode(&m, self)?;
            log.push(m);
        }
        Ok(log)
    }

    pub fn checkpoint(&self) -> TrainerCheckpoint {
        TrainerCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            agent: self.agent.to_state(),
            buffer: self.buffer.clone(),
            env_rng: self.env_rng.clone(),
            agent_rng: self.agent_rng.clone(),
            episodes_done: self.episodes_done,
            updates: self.updates,
        }
    }

    /// Rebuilds a trainer around `env`, which must match the dimensions the
    /// checkpoint was trained on.
    pub fn restore(env: StarRisEnv, ckpt: TrainerCheckpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return invalid(format!("unknown checkpoint format `{}`", ckpt.format));
        }
        let agent = DdpgAgent::from_state(ckpt.agent)?;
        if agent.state_dim() != env.state_dim() || agent.action_dim() != env.action_dim() {
            return invalid("checkpoint dimensions do not match the environment");
        }
        Ok(Self {
            agent,
            buffer: ckpt.buffer,
            env,
            env_rng: ckpt.env_rng,
            agent_rng: ckpt.agent_rng,
            episodes_done: ckpt.episodes_done,
            updates: ckpt.updates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub format: String,
    pub agent: AgentState,
    pub buffer: ReplayBuffer,
    pub env_rng: ChaCha8Rng,
    pub agent_rng: ChaCha8Rng,
    pub episodes_done: usize,
    pub updates: u64,
}

impl TrainerCheckpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename so an aborted run keeps the previous checkpoint
        let tmp = path.with_extension("json.partial");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
            _ => e.into(),
        })?;
        Self::from_json(&text)
    }
}

/// Outcome of following the deterministic policy for a number of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub steps: usize,
    pub mean_ee: f64,
    /// Mean punished reward (unscaled); equals `mean_ee` when every step was feasible.
    pub mean_reward: f64,
    pub feasible_fraction: f64,
    pub best_feasible_ee: f64,
    pub last: StepResult,
}

/// Noise-free rollout from a fresh reset.
pub fn greedy_rollout(
    agent: &DdpgAgent,
    env: &mut StarRisEnv,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutSummary> {
    if steps == 0 {
        return invalid("rollout needs at least one step");
    }
    let mut state = env.reset(rng)?;
    let (mut ee, mut reward, mut feasible, mut best) = (0.0, 0.0, 0usize, 0.0f64);
    let mut last = None;
    for _ in 0..steps {
        let action = agent.select_action(&state, false, rng)?;
        let r = env.step(&action)?;
        ee += r.energy_efficiency;
        reward += r.reward;
        if r.constraints.all_pass() {
            feasible += 1;
            best = best.max(r.energy_efficiency);
        }
        state = r.state.clone();
        last = Some(r);
    }
    let n = steps as f64;
    Ok(RolloutSummary {
        steps,
        mean_ee: ee / n,
        mean_reward: reward / n,
        feasible_fraction: feasible as f64 / n,
        best_feasible_ee: best,
        last: last.expect("at least one step"),
    })
}
