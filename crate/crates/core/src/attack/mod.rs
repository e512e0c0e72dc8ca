//! The attack experiment: seeded train/test resamples of a PUF's CRPs,
//! radix re-encoding, MLP training, and bitwise scoring of predicted
//! responses.

mod csv_io;
mod sweep;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::codec::{decode_digits, encode, round_digits, value_to_bits, BitVector24, RadixSpec, RESPONSE_BITS, VALUE_SPACE};
use crate::error::{Error, Result};
use crate::mlp::{train, MlpModel, Mode, ModelConfig, StopReason, TrainConfig, DEFAULT_HIDDEN_WIDTH, DEFAULT_N_HIDDEN};
use crate::puf::{generate_dataset, realize_puf, CrpDataset, PufRealization, DEFAULT_SIGMA};
use crate::rng::derive_seed;

pub use csv_io::{
    parse_results_csv, read_results_csv, results_csv, summary_csv, write_results_csv, write_summary_csv, RESULTS_HEADER,
    SUMMARY_HEADER,
};
pub use sweep::{run_sweep, summarize, summarize_rows, SummaryRow, SweepConfig, SweepSummary, DEFAULT_TRAIN_SIZES};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_TEST_SIZE: usize = 200_000;
const PREDICT_CHUNK: usize = 4096;

const TAG_TRAIN: u64 = 0x7472_6169_6e;
const TAG_TEST: u64 = 0x7465_7374;

/// What to do with decoded predictions above 2^24 - 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overflow {
    #[default]
    Wrap,
    Clamp,
}

/// How the output head is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleRule {
    /// `R_r - 1`, the largest digit.
    #[default]
    RadixMinusOne,
    /// `D_r - 1`, one less than the number of response digits.
    WidthMinusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Divide input digits by `R_c - 1`.
    pub normalize_inputs: bool,
    pub overflow: Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub puf_seed: u64,
    pub sigma: f64,
    pub rc: u32,
    pub rr: u32,
    pub n_train: usize,
    pub fold_index: usize,
    pub n_folds: usize,
    pub test_size: usize,
    pub master_seed: u64,
    pub hidden_width: usize,
    pub n_hidden: usize,
    pub scale_rule: ScaleRule,
    pub eval: EvalOptions,
    /// `train_seed` is replaced by the derived per-experiment seed.
    pub train: TrainConfig,
}

impl ExperimentSpec {
    pub fn new(puf_seed: u64, rc: u32, rr: u32, n_train: usize, fold_index: usize) -> Self {
        Self {
            puf_seed,
            sigma: DEFAULT_SIGMA,
            rc,
            rr,
            n_train,
            fold_index,
            n_folds: DEFAULT_FOLDS,
            test_size: DEFAULT_TEST_SIZE,
            master_seed: 0,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            n_hidden: DEFAULT_N_HIDDEN,
            scale_rule: ScaleRule::default(),
            eval: EvalOptions::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rc < 2 || self.rr < 2 {
            return Err(Error::invalid(format!(
                "radices must be >= 2, got R_c = {}, R_r = {}",
                self.rc, self.rr
            )));
        }
        if self.n_train == 0 {
            return Err(Error::invalid("n_train must be >= 1"));
        }
        if self.test_size == 0 {
            return Err(Error::invalid("test_size must be >= 1"));
        }
        if self.fold_index >= self.n_folds {
            return Err(Error::invalid(format!(
                "fold {} out of range for {} folds",
                self.fold_index, self.n_folds
            )));
        }
        self.train.validate()
    }

    /// Seeds for model initialization and batch order.
    pub fn model_seeds(&self) -> (u64, u64) {
        let base = derive_seed(&[
            self.master_seed,
            self.puf_seed,
            u64::from(self.rc),
            u64::from(self.rr),
            self.n_train as u64,
            self.fold_index as u64,
        ]);
        (derive_seed(&[base, 0]), derive_seed(&[base, 1]))
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let cspec = RadixSpec::for_24_bit(self.rc)?;
        let rspec = RadixSpec::for_24_bit(self.rr)?;
        let output_scale = match self.scale_rule {
            ScaleRule::RadixMinusOne => f64::from(self.rr - 1),
            ScaleRule::WidthMinusOne => (rspec.width() - 1) as f64,
        };
        let cfg = ModelConfig {
            input_width: cspec.width(),
            output_width: rspec.width(),
            hidden_width: self.hidden_width,
            n_hidden: self.n_hidden,
            output_scale,
            init_seed: self.model_seeds().0,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Plateau,
    StepCap,
    Diverged,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Plateau => "plateau",
            RunStatus::StepCap => "step-cap",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [RunStatus::Plateau, RunStatus::StepCap, RunStatus::Diverged, RunStatus::Failed]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

impl From<StopReason> for RunStatus {
    fn from(s: StopReason) -> Self {
        match s {
            StopReason::Plateau => RunStatus::Plateau,
            StopReason::StepCap => RunStatus::StepCap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub init_seed: u64,
    pub train_seed: u64,
    /// Empty when the experiment failed before scoring.
    pub per_bit_accuracy: Vec<f64>,
    /// NaN when the experiment failed before scoring.
    pub mean_bit_accuracy: f64,
    pub steps: u64,
    pub status: RunStatus,
    pub final_loss: f64,
    pub message: Option<String>,
}

impl ExperimentResult {
    pub(crate) fn failed(spec: ExperimentSpec, err: &Error) -> Self {
        let (init_seed, train_seed) = spec.model_seeds();
        Self {
            spec,
            init_seed,
            train_seed,
            per_bit_accuracy: Vec::new(),
            mean_bit_accuracy: f64::NAN,
            steps: 0,
            status: RunStatus::Failed,
            final_loss: f64::NAN,
            message: Some(err.to_string()),
        }
    }

    pub fn row(&self) -> ResultRow {
        ResultRow {
            puf_seed: self.spec.puf_seed,
            rc: self.spec.rc,
            rr: self.spec.rr,
            n_train: self.spec.n_train,
            fold: self.spec.fold_index,
            mean_acc: self.mean_bit_accuracy,
            per_bit: self.per_bit_accuracy.clone(),
            steps: self.steps,
            status: self.status,
        }
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub puf_seed: u64,
    pub rc: u32,
    pub rr: u32,
    pub n_train: usize,
    pub fold: usize,
    pub mean_acc: f64,
    pub per_bit: Vec<f64>,
    pub steps: u64,
    pub status: RunStatus,
}

fn check_room(n_train: usize, test_size: usize) -> Result<()> {
    if n_train as u64 + test_size as u64 > VALUE_SPACE {
        return Err(Error::ExhaustedDomain(format!(
            "{n_train} training plus {test_size} test challenges exceed the 2^24 challenge space"
        )));
    }
    Ok(())
}

/// Train and test sets of one fold. The test set never reuses a training
/// challenge.
pub fn make_split(
    puf: &PufRealization,
    n_train: usize,
    fold: usize,
    test_size: usize,
    master_seed: u64,
) -> Result<(CrpDataset, CrpDataset)> {
    check_room(n_train, test_size)?;
    let base = [master_seed, puf.seed(), n_train as u64, fold as u64];
    let train_seed = derive_seed(&[base[0], base[1], base[2], base[3], TAG_TRAIN]);
    let test_seed = derive_seed(&[base[0], base[1], base[2], base[3], TAG_TEST]);
    let train = generate_dataset(puf, n_train, train_seed, &Default::default())?;
    let test = generate_dataset(puf, test_size, test_seed, &train.challenge_set())?;
    Ok((train, test))
}

pub fn make_splits(
    puf: &PufRealization,
    n_train: usize,
    n_folds: usize,
    test_size: usize,
    master_seed: u64,
) -> Result<Vec<(CrpDataset, CrpDataset)>> {
    check_room(n_train, test_size)?;
    (0..n_folds)
        .map(|f| make_split(puf, n_train, f, test_size, master_seed))
        .collect()
}

fn digit_matrix(values: &[u32], radix: u32) -> Result<Array2<f64>> {
    let spec = RadixSpec::for_24_bit(radix)?;
    let mut out = Array2::zeros((values.len(), spec.width()));
    for (mut row, &v) in out.rows_mut().into_iter().zip(values) {
        let dv = encode(u64::from(v), &spec)?;
        for (slot, &d) in row.iter_mut().zip(dv.digits()) {
            *slot = f64::from(d);
        }
    }
    Ok(out)
}

/// Challenge digit rows of width `D_c`, optionally scaled into [0, 1].
pub fn encode_challenges(challenges: &[u32], rc: u32, normalize: bool) -> Result<Array2<f64>> {
    let mut x = digit_matrix(challenges, rc)?;
    if normalize {
        x /= f64::from(rc - 1);
    }
    Ok(x)
}

/// Raw digit matrices: challenges in radix `rc`, responses in radix `rr`.
pub fn prepare_examples(ds: &CrpDataset, rc: u32, rr: u32) -> Result<(Array2<f64>, Array2<f64>)> {
    let challenges: Vec<u32> = ds.challenges().collect();
    let responses: Vec<u32> = ds.responses().collect();
    Ok((digit_matrix(&challenges, rc)?, digit_matrix(&responses, rr)?))
}

/// Rounds one row of network outputs to digits, decodes, folds the value
/// into 24 bits and returns the bits.
pub fn digits_to_bits(raw: &[f64], spec: &RadixSpec, overflow: Overflow) -> Result<BitVector24> {
    let dv = round_digits(raw, spec)?;
    let value = decode_digits(spec.radix(), dv.digits())?;
    let folded = match overflow {
        Overflow::Wrap => value % VALUE_SPACE,
        Overflow::Clamp => value.min(VALUE_SPACE - 1),
    };
    value_to_bits(folded)
}

/// Scores a batch of raw network outputs.
pub fn outputs_to_bits(out: &ArrayView2<f64>, rr: u32, overflow: Overflow) -> Result<Vec<BitVector24>> {
    let spec = RadixSpec::for_24_bit(rr)?;
    out.rows()
        .into_iter()
        .map(|row| match row.as_slice() {
            Some(s) => digits_to_bits(s, &spec, overflow),
            None => digits_to_bits(&row.to_vec(), &spec, overflow),
        })
        .collect()
}

/// Forward pass in inference mode, then round, decode, fold and split into bits.
pub fn predict_response_bits(
    model: &MlpModel,
    challenges: &[u32],
    rc: u32,
    rr: u32,
    opts: &EvalOptions,
) -> Result<Vec<BitVector24>> {
    if model.mode() != Mode::Inference {
        return Err(Error::InvalidState("prediction requires inference mode".into()));
    }
    let x = encode_challenges(challenges, rc, opts.normalize_inputs)?;
    let mut bits = Vec::with_capacity(challenges.len());
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + PREDICT_CHUNK).min(x.nrows());
        let out = model.forward(&x.slice(s![start..end, ..]))?;
        bits.extend(outputs_to_bits(&out.view(), rr, opts.overflow)?);
        start = end;
    }
    Ok(bits)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitAccuracy {
    pub per_bit: [f64; RESPONSE_BITS],
    pub mean: f64,
}

pub fn bit_accuracy(pred: &[BitVector24], truth: &[BitVector24]) -> Result<BitAccuracy> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::invalid(format!(
            "need equal non-empty lengths, got {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    let mut agree = [0usize; RESPONSE_BITS];
    for (p, t) in pred.iter().zip(truth) {
        let same = !(p.value() ^ t.value());
        for (i, slot) in agree.iter_mut().enumerate() {
            *slot += ((same >> (RESPONSE_BITS - 1 - i)) & 1) as usize;
        }
    }
    let n = pred.len() as f64;
    let per_bit = agree.map(|a| a as f64 / n);
    let mean = per_bit.iter().sum::<f64>() / RESPONSE_BITS as f64;
    Ok(BitAccuracy { per_bit, mean })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let puf = realize_puf(spec.puf_seed, spec.sigma)?;
    run_experiment_with_puf(spec, &puf)
}

/// Runs one experiment against an already realized PUF (fixtures, sweeps
/// that share a realization). Training divergence is reported in the
/// result; the model is still scored in its last finite state.
pub fn run_experiment_with_puf(spec: &ExperimentSpec, puf: &PufRealization) -> Result<ExperimentResult> {
    Ok(run_experiment_keep_model(spec, puf)?.0)
}

/// [`run_experiment_with_puf`], also returning the trained model.
pub fn run_experiment_keep_model(spec: &ExperimentSpec, puf: &PufRealization) -> Result<(ExperimentResult, MlpModel)> {
    spec.validate()?;
    let (init_seed, train_seed) = spec.model_seeds();
    let (train_ds, test_ds) = make_split(puf, spec.n_train, spec.fold_index, spec.test_size, spec.master_seed)?;
    let train_challenges: Vec<u32> = train_ds.challenges().collect();
    let x = encode_challenges(&train_challenges, spec.rc, spec.eval.normalize_inputs)?;
    let (_, y) = prepare_examples(&train_ds, spec.rc, spec.rr)?;

    let mut model = MlpModel::new(spec.model_config()?)?;
    let tcfg = TrainConfig {
        train_seed,
        ..spec.train.clone()
    };
    let (steps, status, final_loss, message) = match train(&mut model, &x.view(), &y.view(), &tcfg) {
        Ok(rep) => (rep.steps, RunStatus::from(rep.stop_reason), rep.final_loss, None),
        Err(Error::Divergence { step }) => (step, RunStatus::Diverged, f64::NAN, Some(format!("diverged at step {step}"))),
        Err(e) => return Err(e),
    };
    model.set_mode(Mode::Inference);

    let test_challenges: Vec<u32> = test_ds.challenges().collect();
    let truth: Vec<BitVector24> = test_ds
        .responses()
        .map(|r| value_to_bits(u64::from(r)))
        .collect::<Result<_>>()?;
    let scored = predict_response_bits(&model, &test_challenges, spec.rc, spec.rr, &spec.eval)
        .and_then(|pred| bit_accuracy(&pred, &truth));
    let (per_bit_accuracy, mean_bit_accuracy, status, message) = match scored {
        Ok(acc) => (acc.per_bit.to_vec(), acc.mean, status, message),
        Err(e) if status == RunStatus::Diverged => (Vec::new(), f64::NAN, status, Some(format!("{}; {e}", message.unwrap_or_default()))),
        Err(e) => return Err(e),
    };
    let result = ExperimentResult {
        spec: spec.clone(),
        init_seed,
        train_seed,
        per_bit_accuracy,
        mean_bit_accuracy,
        steps,
        status,
        final_loss,
        message,
    };
    Ok((result, model))
}

#[cfg(test)]
mod tests;
