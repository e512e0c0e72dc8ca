use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_HIDDEN_WIDTH: usize = 1024;
pub const DEFAULT_N_HIDDEN: usize = 5;
pub const BN_EPSILON: f64 = 1e-5;
/// Running statistics keep this share of their old value per update.
pub const BN_MOMENTUM: f64 = 0.9;
pub const INIT_SCHEME: &str = "he-uniform(sqrt(6/fan_in)), zero bias, gamma=1, beta=0";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_width: usize,
    pub output_width: usize,
    pub hidden_width: usize,
    pub n_hidden: usize,
    pub output_scale: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(input_width: usize, output_width: usize, output_scale: f64) -> Self {
        Self {
            input_width,
            output_width,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            n_hidden: DEFAULT_N_HIDDEN,
            output_scale,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 || self.hidden_width == 0 || self.n_hidden == 0 {
            return Err(Error::invalid(format!("all widths must be >= 1: {self:?}")));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "output_scale must be positive, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }
}

/// Dense weights and biases over all layers.
pub fn dense_parameters(d_c: usize, d_r: usize, hidden_width: usize, n_hidden: usize) -> u64 {
    let (d_c, d_r, h, n) = (d_c as u64, d_r as u64, hidden_width as u64, n_hidden as u64);
    let first = d_c * h + h;
    let middle = n.saturating_sub(1) * (h * h + h);
    let head = h * d_r + d_r;
    first + middle + head
}

/// Dense parameters plus four batch-norm vectors (scale, shift, running
/// mean, running variance) per hidden layer.
pub fn count_parameters(d_c: usize, d_r: usize, hidden_width: usize, n_hidden: usize) -> u64 {
    dense_parameters(d_c, d_r, hidden_width, n_hidden) + 4 * (hidden_width * n_hidden) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut rng::SplitMix64) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub norm: BatchNorm,
}

/// Identifies one trainable tensor. `layer == n_hidden` is the output head,
/// which has only `Weight` and `Bias`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Gradients of the loss, one flat buffer per trainable tensor in
/// [`MlpModel::param_ids`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) ids: Vec<ParamId>,
    pub(crate) tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.ids.iter().position(|&i| i == id).map(|k| self.tensors[k].as_slice())
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut [f64]> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .map(|k| self.tensors[k].as_mut_slice())
    }

    pub fn tensors(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.ids.iter().copied().zip(self.tensors.iter().map(Vec::as_slice))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    normalized: Array2<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
    inv_std: Array1<f64>,
}

/// Intermediate values of a training-mode forward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    head_input: Array2<f64>,
    sigmoid: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) config: ModelConfig,
    pub(crate) hidden: Vec<HiddenLayer>,
    pub(crate) head: Dense,
    pub(crate) mode: Mode,
}

fn flat<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> Vec<f64> {
    if a.is_standard_layout() {
        a.into_raw_vec_and_offset().0
    } else {
        a.iter().copied().collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn mse_loss(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let sum: f64 = Zip::from(pred).and(target).fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    Ok(sum / pred.len() as f64)
}

impl MlpModel {
    /// He-uniform weights, zero biases, identity batch norm. Deterministic
    /// in `cfg.init_seed`.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut hidden = Vec::with_capacity(cfg.n_hidden);
        let mut fan_in = cfg.input_width;
        for l in 0..cfg.n_hidden {
            let mut r = rng::stream(cfg.init_seed, "init", l as u64);
            hidden.push(HiddenLayer {
                dense: Dense::init(fan_in, cfg.hidden_width, &mut r),
                norm: BatchNorm::new(cfg.hidden_width),
            });
            fan_in = cfg.hidden_width;
        }
        let mut r = rng::stream(cfg.init_seed, "init", cfg.n_hidden as u64);
        let head = Dense::init(fan_in, cfg.output_width, &mut r);
        Ok(Self {
            config: cfg,
            hidden,
            head,
            mode: Mode::Training,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn hidden_layers(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        &mut self.head
    }

    /// Every stored parameter, including batch-norm running statistics.
    pub fn parameter_count(&self) -> u64 {
        let hidden: usize = self
            .hidden
            .iter()
            .map(|l| l.dense.weight.len() + l.dense.bias.len() + 4 * l.norm.gamma.len())
            .sum();
        (hidden + self.head.weight.len() + self.head.bias.len()) as u64
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::with_capacity(4 * self.hidden.len() + 2);
        for layer in 0..self.hidden.len() {
            for kind in [ParamKind::Weight, ParamKind::Bias, ParamKind::Gamma, ParamKind::Beta] {
                ids.push(ParamId { layer, kind });
            }
        }
        let layer = self.hidden.len();
        ids.push(ParamId { layer, kind: ParamKind::Weight });
        ids.push(ParamId { layer, kind: ParamKind::Bias });
        ids
    }

    /// Trainable tensors as flat mutable slices, in [`Self::param_ids`] order.
    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 * self.hidden.len() + 2);
        for l in &mut self.hidden {
            out.push(l.dense.weight.as_slice_mut().expect("standard layout"));
            out.push(l.dense.bias.as_slice_mut().expect("standard layout"));
            out.push(l.norm.gamma.as_slice_mut().expect("standard layout"));
            out.push(l.norm.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head.weight.as_slice_mut().expect("standard layout"));
        out.push(self.head.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub(crate) fn trainable_lens(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.hidden {
            out.extend([l.dense.weight.len(), l.dense.bias.len(), l.norm.gamma.len(), l.norm.beta.len()]);
        }
        out.extend([self.head.weight.len(), self.head.bias.len()]);
        out
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if x.ncols() != self.config.input_width {
            return Err(Error::invalid(format!(
                "input width {} does not match model input width {}",
                x.ncols(),
                self.config.input_width
            )));
        }
        Ok(())
    }

    fn head_output(&self, h: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let s = self.head.apply(h).mapv_into(sigmoid);
        let out = &s * self.config.output_scale;
        (out, s)
    }

    /// Forward pass. Batch norm uses batch statistics in training mode and
    /// running statistics in inference mode; running statistics are never
    /// updated here.
    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        match self.mode {
            Mode::Training => Ok(self.forward_train(x)?.0),
            Mode::Inference => self.forward_inference(x),
        }
    }

    fn forward_inference(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.to_owned();
        for l in &self.hidden {
            let a = l.dense.apply(&h.view()).mapv_into(|v| v.max(0.0));
            let inv_std = l.norm.running_var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let scale = &l.norm.gamma * &inv_std;
            let shift = &l.norm.beta - &(&l.norm.running_mean * &scale);
            h = a * &scale + &shift;
        }
        Ok(self.head_output(&h.view()).0)
    }

    /// Training-mode forward pass returning the cache backpropagation needs.
    pub fn forward_train(&self, x: &ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut h = x.to_owned();
        for l in &self.hidden {
            let pre = l.dense.apply(&h.view());
            let a = pre.mapv(|v| v.max(0.0));
            let mean = a.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = &a - &mean;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let normalized = centered * &inv_std;
            let next = &normalized * &l.norm.gamma + &l.norm.beta;
            layers.push(LayerCache {
                input: h,
                pre,
                normalized,
                mean,
                var,
                inv_std,
            });
            h = next;
        }
        let (out, sigmoid) = self.head_output(&h.view());
        Ok((
            out,
            ForwardCache {
                layers,
                head_input: h,
                sigmoid,
            },
        ))
    }

    /// Folds the batch statistics of a training pass into the running
    /// statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (l, c) in self.hidden.iter_mut().zip(&cache.layers) {
            l.norm.running_mean = &l.norm.running_mean * BN_MOMENTUM + &c.mean * (1.0 - BN_MOMENTUM);
            l.norm.running_var = &l.norm.running_var * BN_MOMENTUM + &c.var * (1.0 - BN_MOMENTUM);
        }
    }

    /// Mean-squared-error loss and its exact gradients for one batch.
    pub fn loss_and_gradients(
        &self,
        x: &ArrayView2<f64>,
        target: &ArrayView2<f64>,
    ) -> Result<(f64, Gradients, ForwardCache)> {
        if self.mode != Mode::Training {
            return Err(Error::InvalidState("backward requires training mode".into()));
        }
        let (out, cache) = self.forward_train(x)?;
        let loss = mse_loss(&out.view(), target)?;
        let grads = self.backprop(&out, target, &cache);
        Ok((loss, grads, cache))
    }

    pub fn backward(&self, x: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<Gradients> {
        Ok(self.loss_and_gradients(x, target)?.1)
    }

    fn backprop(&self, out: &Array2<f64>, target: &ArrayView2<f64>, cache: &ForwardCache) -> Gradients {
        let n = out.len() as f64;
        let scale = self.config.output_scale;
        // d loss / d head pre-activation
        let mut dz = Zip::from(out)
            .and(target)
            .and(&cache.sigmoid)
            .map_collect(|&o, &t, &s| 2.0 * (o - t) / n * scale * s * (1.0 - s));

        let mut rev: Vec<Vec<f64>> = Vec::with_capacity(4 * self.hidden.len() + 2);
        rev.push(flat(dz.sum_axis(Axis(0))));
        rev.push(flat(cache.head_input.t().dot(&dz)));
        let mut dh = dz.dot(&self.head.weight.t());

        for (idx, (l, c)) in self.hidden.iter().zip(&cache.layers).enumerate().rev() {
            let rows = dh.nrows() as f64;
            let dbeta = dh.sum_axis(Axis(0));
            let dgamma = (&dh * &c.normalized).sum_axis(Axis(0));
            let dxhat = dh * &l.norm.gamma;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &c.normalized).sum_axis(Axis(0));
            let mut da = dxhat * rows - &sum_dxhat - &(&c.normalized * &sum_dxhat_xhat);
            da *= &(&c.inv_std / rows);
            Zip::from(&mut da).and(&c.pre).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            dz = da;
            rev.push(flat(dbeta));
            rev.push(flat(dgamma));
            rev.push(flat(dz.sum_axis(Axis(0))));
            rev.push(flat(c.input.t().dot(&dz)));
            if idx > 0 {
                dh = dz.dot(&l.dense.weight.t());
            } else {
                dh = Array2::zeros((0, 0));
            }
        }
        rev.reverse();
        Gradients {
            ids: self.param_ids(),
            tensors: rev,
        }
    }
}
