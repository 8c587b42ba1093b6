use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::RealMatrix;

/// One transition `(s, a, r̂, s')`. The reward is the scaled learning signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Transitions stacked row-wise for a minibatch update.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: RealMatrix,
    pub actions: RealMatrix,
    pub rewards: Vec<f64>,
    pub next_states: RealMatrix,
}

impl Batch {
    pub fn from_experiences(items: &[&Experience]) -> Result<Self> {
        if items.is_empty() {
            return invalid("empty batch");
        }
        let rows = |f: fn(&Experience) -> &[f64]| {
            RealMatrix::from_rows(&items.iter().map(|e| f(e)).collect::<Vec<_>>())
        };
        Ok(Self {
            states: rows(|e| &e.state)?,
            actions: rows(|e| &e.action)?,
            rewards: items.iter().map(|e| e.reward).collect(),
            next_states: rows(|e| &e.next_state)?,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity FIFO ring of transitions, stored as flat row-major
/// arrays allocated once at full capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    len: usize,
    /// Slot the next insertion overwrites once the ring is full.
    cursor: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return invalid("replay capacity must be at least 1");
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            len: 0,
            cursor: 0,
            states: vec![0.0; capacity * state_dim],
            actions: vec![0.0; capacity * action_dim],
            rewards: vec![0.0; capacity],
            next_states: vec![0.0; capacity * state_dim],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn store(&mut self, e: Experience) -> Result<()> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        if e.state.len() != sd || e.next_state.len() != sd || e.action.len() != ad {
            return invalid(format!(
                "experience shapes (s {}, a {}, s' {}) do not match (s {sd}, a {ad})",
                e.state.len(),
                e.action.len(),
                e.next_state.len(),
            ));
        }
        let slot = if self.len < self.capacity {
            self.len += 1;
            self.len - 1
        } else {
            let slot = self.cursor;
            self.cursor = (self.cursor + 1) % self.capacity;
            slot
        };
        self.states[slot * sd..(slot + 1) * sd].copy_from_slice(&e.state);
        self.actions[slot * ad..(slot + 1) * ad].copy_from_slice(&e.action);
        self.rewards[slot] = e.reward;
        self.next_states[slot * sd..(slot + 1) * sd].copy_from_slice(&e.next_state);
        Ok(())
    }

    fn slot(&self, i: usize) -> Experience {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Experience {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            action: self.actions[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = Experience> + '_ {
        (self.cursor..self.len).chain(0..self.cursor).map(|i| self.slot(i))
    }

    fn sample_slots(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if count == 0 {
            return invalid("sample size must be at least 1");
        }
        if self.len < count {
            return Err(Error::InsufficientData {
                have: self.len,
                need: count,
            });
        }
        Ok(rand::seq::index::sample(rng, self.len, count).into_vec())
    }

    /// `count` distinct transitions drawn uniformly.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<Experience>> {
        Ok(self.sample_slots(count, rng)?.into_iter().map(|i| self.slot(i)).collect())
    }

    /// Same draw as [`sample`](Self::sample), stacked straight into matrices.
    pub fn sample_batch(&self, count: usize, rng: &mut impl Rng) -> Result<Batch> {
        let slots = self.sample_slots(count, rng)?;
        let gather = |src: &[f64], dim: usize| {
            let mut out = Vec::with_capacity(count * dim);
            for &i in &slots {
                out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
            }
            RealMatrix::from_vec(count, dim, out)
        };
        Ok(Batch {
            states: gather(&self.states, self.state_dim)?,
            actions: gather(&self.actions, self.action_dim)?,
            rewards: slots.iter().map(|&i| self.rewards[i]).collect(),
            next_states: gather(&self.next_states, self.state_dim)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(k: usize) -> Experience {
        Experience {
            state: vec![k as f64],
            action: vec![0.0, 0.0],
            reward: k as f64,
            next_state: vec![k as f64 + 1.0],
        }
    }

    #[test]
    fn fifo_overwrite() {
        let cap = 7;
        let mut buf = ReplayBuffer::new(cap, 1, 2).unwrap();
        buf.store(tagged(1)).unwrap();
        assert_eq!(buf.len(), 1);
        for k in 2..=cap + 1 {
            buf.store(tagged(k)).unwrap();
        }
        assert_eq!(buf.len(), cap);
        assert!(buf.iter().all(|e| e.reward != 1.0));

        // after C + k insertions exactly k+1..=C+k remain, oldest first
        for extra in 2..=20 {
            buf.store(tagged(cap + extra)).unwrap();
            let kept: Vec<usize> = buf.iter().map(|e| e.reward as usize).collect();
            let expected: Vec<usize> = (extra + 1..=cap + extra).collect();
            assert_eq!(kept, expected);
        }
    }

    #[test]
    fn shape_checks() {
        let mut buf = ReplayBuffer::new(3, 1, 2).unwrap();
        let mut bad = tagged(0);
        bad.action.push(1.0);
        assert!(matches!(buf.store(bad), Err(Error::InvalidArgument(_))));
        assert!(buf.is_empty());
        assert!(ReplayBuffer::new(0, 1, 1).is_err());
    }

    #[test]
    fn sampling_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReplayBuffer::new(100, 1, 2).unwrap();
        for k in 0..5 {
            buf.store(tagged(k)).unwrap();
        }
        assert!(matches!(
            buf.sample(6, &mut rng),
            Err(Error::InsufficientData { have: 5, need: 6 })
        ));
        let mut all: Vec<usize> = buf.sample(5, &mut rng).unwrap().iter().map(|e| e.reward as usize).collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);

        for k in 5..60 {
            buf.store(tagged(k)).unwrap();
        }
        for _ in 0..200 {
            let mut picked: Vec<usize> = buf.sample(32, &mut rng).unwrap().iter().map(|e| e.reward as usize).collect();
            picked.sort();
            picked.dedup();
            assert_eq!(picked.len(), 32);
        }
    }

    #[test]
    fn single_draw_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut buf = ReplayBuffer::new(10, 1, 2).unwrap();
        for k in 0..10 {
            buf.store(tagged(k)).unwrap();
        }
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[buf.sample(1, &mut rng).unwrap()[0].reward as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn batch_stacks_rows() {
        let (a, b) = (tagged(3), tagged(4));
        let batch = Batch::from_experiences(&[&a, &b]).unwrap();
        assert_eq!(batch.states.data(), &[3.0, 4.0]);
        assert_eq!(batch.next_states.data(), &[4.0, 5.0]);
        assert_eq!(batch.actions.cols(), 2);
        assert_eq!(batch.rewards, vec![3.0, 4.0]);
    }

    #[test]
    fn batch_matches_sampled_transitions() {
        let mut buf = ReplayBuffer::new(9, 1, 2).unwrap();
        for k in 0..13 {
            let mut e = tagged(k);
            e.action = vec![k as f64, -(k as f64)];
            buf.store(e).unwrap();
        }
        let picked = buf.sample(4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let refs: Vec<&Experience> = picked.iter().collect();
        let expected = Batch::from_experiences(&refs).unwrap();
        assert_eq!(buf.sample_batch(4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap(), expected);
    }
}
