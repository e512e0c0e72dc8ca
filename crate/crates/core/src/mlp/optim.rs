use super::model::{Gradients, MlpModel};
use super::TrainConfig;
use crate::error::{Error, Result};

/// Adam moment estimates, one buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
    pub(crate) t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let lens = model.trainable_lens();
        Self {
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    state: &mut AdamState,
    model: &mut MlpModel,
    grads: &Gradients,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.tensors.len() != state.m.len()
        || grads.tensors.iter().zip(&state.m).any(|(g, m)| g.len() != m.len())
    {
        return Err(Error::invalid("gradient shapes do not match the optimizer state"));
    }
    if !grads.all_finite() {
        return Err(Error::Divergence { step: state.t });
    }
    state.t += 1;
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in model
        .trainable_mut()
        .into_iter()
        .zip(&grads.tensors)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
