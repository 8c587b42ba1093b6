use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::ChannelConfig;
use crate::env::StarRisEnv;
use crate::numerics::{MlpParameters, Mode, RealMatrix, Topology};
use crate::phy::SystemConfig;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_config(hidden: usize) -> AgentConfig {
    AgentConfig {
        hidden,
        batch_size: 8,
        buffer_capacity: 64,
        ..AgentConfig::default()
    }
}

fn random_batch(rows: usize, sd: usize, ad: usize, r: &mut ChaCha8Rng) -> Batch {
    let mut m = |c| RealMatrix::from_fn(rows, c, |_, _| r.random_range(-1.0..1.0));
    let states = m(sd);
    let actions = m(ad);
    let next_states = m(sd);
    Batch {
        states,
        actions,
        next_states,
        rewards: (0..rows).map(|_| r.random_range(0.0..1.0)).collect(),
    }
}

/// Every trainable entry uniform in ±`bound`, so no layer is near-silent.
fn loud(topology: Topology, bound: f64, r: &mut ChaCha8Rng) -> MlpParameters {
    let mut p = MlpParameters::zeros(topology);
    for t in p.trainable_mut() {
        for x in t.iter_mut() {
            *x = r.random_range(-bound..bound);
        }
    }
    p
}

fn tiny_agent(seed: u64) -> DdpgAgent {
    let mut r = rng(seed);
    let (sd, ad, h) = (3, 2, 6);
    let actor = loud(Topology::Actor { state_dim: sd, hidden: h, action_dim: ad }, 0.8, &mut r);
    let critic = loud(Topology::Critic { state_dim: sd, action_dim: ad, hidden: h }, 0.8, &mut r);
    DdpgAgent::from_networks(small_config(h), actor, critic)
}

fn trainable_snapshot(p: &MlpParameters) -> Vec<Vec<f64>> {
    p.trainable().iter().map(|t| t.to_vec()).collect()
}

#[test]
fn config_validation() {
    AgentConfig::default().validate().unwrap();
    for bad in [
        AgentConfig { tau: 0.0, ..AgentConfig::default() },
        AgentConfig { tau: 1.5, ..AgentConfig::default() },
        AgentConfig { discount: 1.0, ..AgentConfig::default() },
        AgentConfig { actor_lr: 0.0, ..AgentConfig::default() },
        AgentConfig { batch_size: 20_000, ..AgentConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn action_selection() {
    let agent = DdpgAgent::new(5, 4, small_config(16), &mut rng(1)).unwrap();
    let s = [0.3, -0.2, 1.0, 0.0, 2.0];
    let a = agent.select_action(&s, false, &mut rng(2)).unwrap();
    assert_eq!(a, agent.select_action(&s, false, &mut rng(99)).unwrap());
    assert!(a.iter().all(|x| x.abs() < 1.0));

    let mut quiet = agent.clone();
    quiet.noise_std = 0.0;
    assert_eq!(quiet.select_action(&s, true, &mut rng(3)).unwrap(), a);

    let draws = 10_000;
    let mut r = rng(4);
    let mut sums = vec![0.0; 4];
    for _ in 0..draws {
        let noisy = agent.select_action(&s, true, &mut r).unwrap();
        for (k, (n, d)) in noisy.iter().zip(&a).enumerate() {
            assert!(n.abs() <= ACTION_CLIP);
            sums[k] += n - d;
        }
    }
    let se = agent.noise_std / (draws as f64).sqrt();
    for total in sums {
        assert!((total / draws as f64).abs() < 3.0 * se);
    }
    assert!(agent.select_action(&s[..4], false, &mut r).is_err());
}

#[test]
fn noise_decays_to_floor() {
    let mut agent = DdpgAgent::new(2, 2, small_config(4), &mut rng(1)).unwrap();
    agent.decay_noise();
    assert!((agent.noise_std - 0.1 * 0.9995).abs() < 1e-15);
    for _ in 0..20_000 {
        agent.decay_noise();
    }
    assert_eq!(agent.noise_std, 0.01);
}

#[test]
fn critic_loss_matches_recomputation() {
    let mut agent = tiny_agent(5);
    let batch = random_batch(8, 3, 2, &mut rng(6));
    let y: Vec<f64> = {
        let na = agent.actor_target.forward(&batch.next_states, Mode::Eval).unwrap();
        let qn = agent.critic_target.forward(&batch.next_states.hcat(&na).unwrap(), Mode::Eval).unwrap();
        batch.rewards.iter().zip(qn.data()).map(|(r, q)| r + 0.99 * q).collect()
    };
    let q = agent.critic.forward(&batch.states.hcat(&batch.actions).unwrap(), Mode::Train).unwrap();
    let expected = q.data().iter().zip(&y).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / 8.0;
    let actor_before = agent.actor.clone();
    let loss = agent.update_critic(&batch).unwrap();
    assert!((loss - expected).abs() <= 1e-12 * expected.max(1.0));
    assert_eq!(agent.actor, actor_before);
}

#[test]
fn fitted_critic_is_a_fixed_point() {
    let mut agent = tiny_agent(7);
    agent.config.discount = 0.0;
    let r = 0.37;
    // output layer reads nothing and emits the reward through its bias
    let last = agent.critic.layers.last_mut().unwrap();
    last.weight.data_mut().fill(0.0);
    last.bias[0] = r;
    let mut batch = random_batch(8, 3, 2, &mut rng(8));
    batch.rewards = vec![r; 8];
    let before = trainable_snapshot(&agent.critic);
    let loss = agent.update_critic(&batch).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(trainable_snapshot(&agent.critic), before);
}

#[test]
fn critic_overfits_one_batch() {
    let mut agent = DdpgAgent::new(4, 3, AgentConfig { discount: 0.0, ..small_config(32) }, &mut rng(9)).unwrap();
    let batch = random_batch(32, 4, 3, &mut rng(10));
    let mut loss = f64::INFINITY;
    for _ in 0..2000 {
        loss = agent.update_critic(&batch).unwrap();
        if loss < 1e-3 {
            break;
        }
    }
    assert!(loss < 1e-3, "loss {loss}");
}

#[test]
fn non_finite_reward_leaves_critic_untouched() {
    let mut agent = tiny_agent(11);
    let mut batch = random_batch(8, 3, 2, &mut rng(12));
    batch.rewards[3] = f64::NAN;
    let before = agent.critic.clone();
    assert!(matches!(agent.update_critic(&batch), Err(crate::Error::NumericOverflow(_))));
    assert_eq!(agent.critic, before);
}

#[test]
fn action_blind_critic_gives_no_actor_step() {
    let mut agent = tiny_agent(13);
    agent.critic.layers[1].weight.data_mut().fill(0.0);
    let batch = random_batch(8, 3, 2, &mut rng(14));
    let before = trainable_snapshot(&agent.actor);
    let (_, grads, _) = agent.actor_gradients(&batch.states).unwrap();
    assert_eq!(grads.max_abs(), 0.0);
    agent.update_actor(&batch).unwrap();
    assert_eq!(trainable_snapshot(&agent.actor), before);
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let agent = tiny_agent(15);
    let states = random_batch(6, 3, 2, &mut rng(16)).states;
    let (_, grads, _) = agent.actor_gradients(&states).unwrap();
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.iter().map(|g| -g)).collect();
    let h = 1e-6;
    let mut k = 0;
    let n_tensors = agent.actor.trainable().len();
    for ti in 0..n_tensors {
        let len = agent.actor.trainable()[ti].len();
        for i in 0..len {
            let probe = |delta: f64| {
                let mut a = agent.clone();
                a.actor.trainable_mut()[ti][i] += delta;
                a.policy_objective(&states).unwrap()
            };
            let numeric = (probe(h) - probe(-h)) / (2.0 * h);
            let exact = analytic[k];
            let scale = exact.abs().max(numeric.abs());
            assert!(
                (exact - numeric).abs() <= 1e-4 * scale + 1e-9,
                "tensor {ti} entry {i}: {exact} vs {numeric}"
            );
            k += 1;
        }
    }
}

#[test]
fn actor_ascends_frozen_critic() {
    let mut agent = tiny_agent(17);
    let batch = random_batch(8, 3, 2, &mut rng(18));
    let critic = agent.critic.clone();
    let mut values = Vec::new();
    for _ in 0..10 {
        values.push(agent.update_actor(&batch).unwrap());
    }
    values.push(agent.policy_objective(&batch.states).unwrap());
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
    assert!(values[10] > values[0]);
    assert_eq!(agent.critic, critic);
}

#[test]
fn soft_update_cases() {
    let mut agent = tiny_agent(19);
    let mut r = rng(20);
    for (_, t) in agent.actor.named_tensors_mut() {
        t.iter_mut().for_each(|x| *x = r.random_range(-1.0..1.0));
    }
    let mut synced = agent.clone();
    synced.soft_update(1.0).unwrap();
    assert_eq!(synced.actor_target, synced.actor);
    assert_eq!(synced.critic_target, synced.critic);

    let mut scalar = agent.clone();
    for (_, t) in scalar.actor.named_tensors_mut() {
        t.fill(1.0);
    }
    for (_, t) in scalar.actor_target.named_tensors_mut() {
        t.fill(0.0);
    }
    scalar.soft_update(0.005).unwrap();
    assert!(scalar.actor_target.named_tensors().iter().all(|(_, _, d)| d.iter().all(|&x| x == 0.005)));
    assert!(agent.soft_update(0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn soft_update_is_a_contracting_convex_combination(seed in any::<u64>(), tau in 0.001f64..0.9) {
        let mut agent = tiny_agent(seed);
        let mut r = rng(seed ^ 0x5eed);
        for (_, t) in agent.critic.named_tensors_mut() {
            t.iter_mut().for_each(|x| *x = r.random_range(-2.0..2.0));
        }
        let before = agent.critic_target.clone();
        let gap_before = agent.critic_target.max_abs_diff(&agent.critic);
        agent.soft_update(tau).unwrap();
        let gap_after = agent.critic_target.max_abs_diff(&agent.critic);
        prop_assert!(gap_after < gap_before);
        for (((_, _, t), (_, _, o)), (_, _, p)) in agent.critic_target.named_tensors().iter()
            .zip(agent.critic.named_tensors().iter())
            .zip(before.named_tensors().iter())
        {
            for ((t, o), p) in t.iter().zip(o.iter()).zip(p.iter()) {
                prop_assert!(*t >= o.min(*p) && *t <= o.max(*p));
            }
        }
    }
}

#[test]
fn agent_state_round_trips_exactly() {
    let mut agent = tiny_agent(21);
    let batch = random_batch(8, 3, 2, &mut rng(22));
    agent.update_critic(&batch).unwrap();
    agent.update_actor(&batch).unwrap();
    agent.soft_update(0.1).unwrap();
    agent.decay_noise();
    let json = serde_json::to_string(&agent.to_state()).unwrap();
    let back = DdpgAgent::from_state(serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, agent);
}

fn tiny_env() -> StarRisEnv {
    let cfg = SystemConfig {
        channel: ChannelConfig {
            antennas: 2,
            elements: 3,
            users_t: 1,
            users_r: 1,
            ..ChannelConfig::default()
        },
        ..SystemConfig::default()
    };
    StarRisEnv::new(cfg, crate::env::DEFAULT_REWARD_SCALE).unwrap()
}

#[test]
fn warm_up_stores_without_updating() {
    let mut t = Trainer::new(tiny_env(), small_config(8), 1).unwrap();
    let before = t.agent.clone();
    let log = t.train(1, 1, |_, _| Ok(())).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(t.buffer.len(), 1);
    assert_eq!(t.updates, 0);
    assert_eq!(t.agent.actor, before.actor);
    assert_eq!(t.agent.critic, before.critic);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let cfg = small_config(8);
    let mut a = Trainer::new(tiny_env(), cfg.clone(), 42).unwrap();
    let mut b = Trainer::new(tiny_env(), cfg.clone(), 42).unwrap();
    let log_a = a.train(4, 6, |_, _| Ok(())).unwrap();
    let log_b = b.train(4, 6, |_, _| Ok(())).unwrap();
    assert_eq!(log_a, log_b);
    assert!(a.updates > 0);
    assert_eq!(a.agent, b.agent);

    let mut c = Trainer::new(tiny_env(), cfg.clone(), 42).unwrap();
    let mut log_c = c.train(2, 6, |_, _| Ok(())).unwrap();
    let json = c.checkpoint().to_json().unwrap();
    let mut resumed = Trainer::restore(tiny_env(), TrainerCheckpoint::from_json(&json).unwrap()).unwrap();
    log_c.extend(resumed.train(2, 6, |_, _| Ok(())).unwrap());
    assert_eq!(log_c, log_a);
    assert_eq!(resumed.agent, a.agent);

    let other = Trainer::new(tiny_env(), cfg, 43).unwrap().train(4, 6, |_, _| Ok(())).unwrap();
    assert_ne!(other, log_a);
}

#[test]
fn greedy_rollout_is_noise_free() {
    let t = Trainer::new(tiny_env(), small_config(8), 3).unwrap();
    let mut env = tiny_env();
    let a = greedy_rollout(&t.agent, &mut env, 5, &mut rng(1)).unwrap();
    let b = greedy_rollout(&t.agent, &mut env, 5, &mut rng(1)).unwrap();
    assert_eq!(a, b);
    assert!(a.feasible_fraction >= 0.0 && a.feasible_fraction <= 1.0);
    if a.feasible_fraction == 1.0 {
        assert!((a.mean_reward - a.mean_ee).abs() < 1e-9 * a.mean_ee);
    }
}
