use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpParameters};
use crate::error::{invalid, Error, Result};

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &MlpParameters) -> Self {
        Self::with_decay(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_decay(params: &MlpParameters, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One descent step on `params`. Leaves everything untouched on error.
    pub fn update(
        &mut self,
        params: &mut MlpParameters,
        grads: &Gradients,
        learning_rate: f64,
    ) -> Result<()> {
        if !(learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        let g = grads.tensors();
        if g.len() != self.first.len()
            || g.iter().zip(&self.first).any(|(a, b)| a.len() != b.len())
        {
            return invalid("gradient shapes do not match the optimizer state");
        }
        if !grads.is_finite() {
            return Err(Error::NumericOverflow("non-finite gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .trainable_mut()
            .into_iter()
            .zip(g)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                m[i] = flush(self.beta1 * m[i] + (1.0 - self.beta1) * g[i]);
                v[i] = flush(self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i]);
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Moments of entries whose gradient stays at zero decay geometrically into
/// the subnormal range, where every later operation on them is many times
/// slower. Their contribution to a step is below 1e-300, so they become zero.
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Applies one adaptive-moment step to `params`.
pub fn optimizer_step(
    params: &mut MlpParameters,
    grads: &Gradients,
    learning_rate: f64,
    state: &mut Adam,
) -> Result<()> {
    state.update(params, grads, learning_rate)
}
