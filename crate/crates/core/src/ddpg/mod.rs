//! Deep deterministic policy gradient: replay memory, actor/critic pair with
//! soft-tracking targets, and the episodic training loop.

pub mod agent;
pub mod buffer;
pub mod train;

#[cfg(test)]
mod tests;

pub use agent::{AgentConfig, AgentState, DdpgAgent, NoiseSchedule, ACTION_CLIP};
pub use buffer::{Batch, Experience, ReplayBuffer};
pub use train::{greedy_rollout, seeded_streams, EpisodeMetrics, RolloutSummary, Trainer, TrainerCheckpoint};
