use std::collections::HashSet;

use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use super::model::{mse_loss, Gradients, MlpModel, Mode, ParamId};
use crate::error::{Error, Result};
use crate::rng;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub h: f64,
    pub coordinates: usize,
    pub seed: u64,
    /// Restrict sampling to these tensors; `None` means all.
    pub only: Option<Vec<ParamId>>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            coordinates: 200,
            seed: 0,
            only: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Tensor and flat index of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

fn training_loss(model: &MlpModel, x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<f64> {
    let (out, _) = model.forward_train(x)?;
    mse_loss(&out.view(), y)
}

/// Picks coordinates as `(tensor, index)` pairs: at least one from every
/// eligible tensor, the rest uniformly without replacement. Every coordinate
/// is used when there are no more than requested.
fn pick_coordinates(lens: &[usize], eligible: &[bool], wanted: usize, seed: u64) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = lens
        .iter()
        .enumerate()
        .filter(|(t, _)| eligible[*t])
        .flat_map(|(t, &n)| (0..n).map(move |i| (t, i)))
        .collect();
    if all.len() <= wanted {
        return all;
    }
    let mut r = rng::stream(seed, "gradcheck", 0);
    let mut chosen: HashSet<(usize, usize)> = HashSet::new();
    for (t, &n) in lens.iter().enumerate() {
        if eligible[t] && n > 0 {
            chosen.insert((t, r.random_range(0..n)));
        }
    }
    for k in index::sample(&mut r, all.len(), all.len()) {
        if chosen.len() >= wanted {
            break;
        }
        chosen.insert(all[k]);
    }
    let mut out: Vec<_> = chosen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Compares `analytic` against central differences of the training-mode
/// loss on a seeded subset of coordinates.
pub fn compare_gradients(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    y: &ArrayView2<f64>,
    analytic: &Gradients,
    cfg: &GradCheckConfig,
) -> Result<GradientCheckReport> {
    if !(cfg.h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let ids = model.param_ids();
    let lens = model.trainable_lens();
    let eligible: Vec<bool> = ids
        .iter()
        .map(|id| cfg.only.as_ref().is_none_or(|o| o.contains(id)))
        .collect();
    let coords = pick_coordinates(&lens, &eligible, cfg.coordinates, cfg.seed);

    let mut probe = model.clone();
    probe.set_mode(Mode::Training);
    let mut worst = None;
    let mut max_err: f64 = 0.0;
    for &(t, i) in &coords {
        let original = probe.trainable_mut()[t][i];
        probe.trainable_mut()[t][i] = original + cfg.h;
        let plus = training_loss(&probe, x, y)?;
        probe.trainable_mut()[t][i] = original - cfg.h;
        let minus = training_loss(&probe, x, y)?;
        probe.trainable_mut()[t][i] = original;

        let numeric = (plus - minus) / (2.0 * cfg.h);
        let a = analytic
            .get(ids[t])
            .and_then(|g| g.get(i).copied())
            .ok_or_else(|| Error::invalid("analytic gradient is missing a coordinate"))?;
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if err > max_err || worst.is_none() {
            max_err = max_err.max(err);
            worst = Some((t, i));
        }
    }
    Ok(GradientCheckReport {
        max_relative_error: max_err,
        coordinates_checked: coords.len(),
        worst,
    })
}

/// Analytic gradients from [`MlpModel::backward`] checked against central
/// differences.
pub fn gradient_check(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    y: &ArrayView2<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradientCheckReport> {
    let mut m = model.clone();
    m.set_mode(Mode::Training);
    let analytic = m.backward(x, y)?;
    compare_gradients(&m, x, y, &analytic, cfg)
}
