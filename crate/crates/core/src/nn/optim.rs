use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Grads, Params};
use crate::{Error, Result};

/// Adam moments and hyper-parameters for one parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            learning_rate,
        }
    }
}

/// One bias-corrected Adam step that descends along `g`.
pub fn adam_step(p: &mut Params, g: &Grads, st: &mut AdamState) -> Result<()> {
    let n = p.len();
    if g.len() != n || st.m.len() != n || st.v.len() != n {
        return Err(Error::Shape(format!(
            "adam: params {}, grads {}, moments {}/{}",
            n,
            g.len(),
            st.m.len(),
            st.v.len()
        )));
    }
    st.step += 1;
    let t = st.step as f64;
    let c1 = 1.0 - libm::pow(st.beta1, t);
    let c2 = 1.0 - libm::pow(st.beta2, t);
    let (b1, b2, eps, lr) = (st.beta1, st.beta2, st.eps, st.learning_rate);
    for (((w, &gi), m), v) in p
        .values_mut()
        .iter_mut()
        .zip(g.values())
        .zip(st.m.iter_mut())
        .zip(st.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * gi;
        *v = b2 * *v + (1.0 - b2) * gi * gi;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (libm::sqrt(v_hat) + eps);
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// batches without a new best reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub best: f64,
    pub stale: u32,
    pub factor: f64,
    pub patience: u32,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            stale: 0,
            factor: 0.95,
            patience: 10,
        }
    }
}

impl PlateauSchedule {
    /// Records a batch reward and returns the learning rate to use next.
    pub fn update(&mut self, batch_mean_reward: f64, learning_rate: f64) -> f64 {
        if batch_mean_reward > self.best {
            self.best = batch_mean_reward;
            self.stale = 0;
            return learning_rate;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            return learning_rate * self.factor;
        }
        learning_rate
    }
}
