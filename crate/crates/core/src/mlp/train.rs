use std::collections::VecDeque;
use std::time::Instant;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{MlpModel, Mode, BN_EPSILON, BN_MOMENTUM, INIT_SCHEME};
use super::optim::{adam_step, AdamState};
use super::schedule::lr_at;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_STEPS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchRule {
    /// `min(n, batch_size)`, shuffled without replacement per epoch.
    Min,
    /// `max(n, batch_size)`; when that exceeds `n`, rows are drawn with
    /// replacement.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub first_cycle: u64,
    pub cycle_multiplier: f64,
    pub amplitude_multiplier: f64,
    pub batch_rule: BatchRule,
    pub batch_size: usize,
    pub min_steps: u64,
    pub plateau_epsilon: f64,
    pub plateau_window: u64,
    pub max_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub train_seed: u64,
    /// Loss is recorded into the report every this many steps.
    pub history_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            first_cycle: 1000,
            cycle_multiplier: 2.0,
            amplitude_multiplier: 1.0,
            batch_rule: BatchRule::Min,
            batch_size: 128,
            min_steps: 1000,
            plateau_epsilon: 1e-4,
            plateau_window: 100,
            max_steps: DEFAULT_MAX_STEPS,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            train_seed: 0,
            history_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("cycle_multiplier", self.cycle_multiplier),
            ("amplitude_multiplier", self.amplitude_multiplier),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.plateau_epsilon >= 0.0) {
            return Err(Error::invalid("plateau_epsilon must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if self.first_cycle == 0 || self.batch_size == 0 || self.plateau_window == 0 || self.max_steps == 0 {
            return Err(Error::invalid(
                "first_cycle, batch_size, plateau_window and max_steps must be >= 1",
            ));
        }
        if self.history_every == 0 {
            return Err(Error::invalid("history_every must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Plateau,
    StepCap,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Plateau => "plateau",
            StopReason::StepCap => "step-cap",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    pub final_loss: f64,
    pub best_loss: f64,
    /// `(step, batch loss)` samples.
    pub loss_history: Vec<(u64, f64)>,
    pub stop_reason: StopReason,
    pub wall_seconds: f64,
    pub batch_size: usize,
    pub init_scheme: String,
    pub adam: [f64; 3],
    pub batch_norm: [f64; 2],
}

enum Sampler {
    Epoch { order: Vec<usize>, cursor: usize, batch: usize },
    Replacement { n: usize, batch: usize },
}

impl Sampler {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        match cfg.batch_rule {
            BatchRule::Min => Sampler::Epoch {
                order: (0..n).collect(),
                cursor: n,
                batch: n.min(cfg.batch_size),
            },
            BatchRule::Max if cfg.batch_size > n => Sampler::Replacement { n, batch: cfg.batch_size },
            BatchRule::Max => Sampler::Epoch {
                order: (0..n).collect(),
                cursor: n,
                batch: n,
            },
        }
    }

    fn batch_size(&self) -> usize {
        match self {
            Sampler::Epoch { batch, .. } | Sampler::Replacement { batch, .. } => *batch,
        }
    }

    fn next(&mut self, r: &mut rng::SplitMix64) -> Vec<usize> {
        match self {
            Sampler::Epoch { order, cursor, batch } => {
                if *cursor + *batch > order.len() {
                    order.shuffle(r);
                    *cursor = 0;
                }
                let out = order[*cursor..*cursor + *batch].to_vec();
                *cursor += *batch;
                out
            }
            Sampler::Replacement { n, batch } => (0..*batch).map(|_| r.random_range(0..*n)).collect(),
        }
    }
}

/// Trains `model` in place and leaves it in inference mode.
///
/// Stops once at least `min_steps` steps have run and the best batch loss
/// improved by no more than `plateau_epsilon` over the trailing
/// `plateau_window` steps, or at `max_steps`.
pub fn train(
    model: &mut MlpModel,
    inputs: &ArrayView2<f64>,
    targets: &ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if targets.nrows() != n {
        return Err(Error::invalid(format!(
            "{n} inputs but {} targets",
            targets.nrows()
        )));
    }
    if targets.ncols() != model.config().output_width {
        return Err(Error::invalid(format!(
            "target width {} does not match model output width {}",
            targets.ncols(),
            model.config().output_width
        )));
    }

    let started = Instant::now();
    model.set_mode(Mode::Training);
    let mut sampler = Sampler::new(n, cfg);
    let mut r = rng::stream(cfg.train_seed, "batches", 0);
    let mut adam = AdamState::new(model);
    let mut best = f64::INFINITY;
    let mut best_trail: VecDeque<f64> = VecDeque::with_capacity(cfg.plateau_window as usize + 1);
    let mut history = Vec::new();
    let mut last_loss = f64::NAN;
    let mut stop = StopReason::StepCap;
    let mut steps = 0;

    while steps < cfg.max_steps {
        let idx = sampler.next(&mut r);
        let xb = inputs.select(Axis(0), &idx);
        let yb = targets.select(Axis(0), &idx);
        let (loss, grads, cache) = model.loss_and_gradients(&xb.view(), &yb.view())?;
        if !loss.is_finite() {
            model.set_mode(Mode::Inference);
            return Err(Error::Divergence { step: steps });
        }
        let lr = lr_at(cfg, steps);
        if let Err(e) = adam_step(&mut adam, model, &grads, lr, cfg) {
            model.set_mode(Mode::Inference);
            return Err(match e {
                Error::Divergence { .. } => Error::Divergence { step: steps },
                other => other,
            });
        }
        model.update_running_stats(&cache);
        if steps % cfg.history_every == 0 {
            history.push((steps, loss));
        }
        steps += 1;
        last_loss = loss;
        best = best.min(loss);

        best_trail.push_back(best);
        if best_trail.len() > cfg.plateau_window as usize + 1 {
            best_trail.pop_front();
        }
        if steps >= cfg.min_steps && best_trail.len() == cfg.plateau_window as usize + 1 {
            let improvement = best_trail.front().unwrap() - best;
            if improvement <= cfg.plateau_epsilon {
                stop = StopReason::Plateau;
                break;
            }
        }
    }

    model.set_mode(Mode::Inference);
    Ok(TrainReport {
        steps,
        final_loss: last_loss,
        best_loss: best,
        loss_history: history,
        stop_reason: stop,
        wall_seconds: started.elapsed().as_secs_f64(),
        batch_size: sampler.batch_size(),
        init_scheme: INIT_SCHEME.to_string(),
        adam: [cfg.beta1, cfg.beta2, cfg.adam_epsilon],
        batch_norm: [BN_EPSILON, BN_MOMENTUM],
    })
}
