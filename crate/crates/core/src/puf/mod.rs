//! Simulated 24-cell photonic PUF.
//!
//! Every cell receives the same challenge as an input state of
//! polarization, pushes it through a fixed cascade of edge couplers,
//! birefringent waveguides and trench couplers, and reports one bit: whether
//! the TE share of the transmitted power reaches the cell's calibrated
//! threshold. Cell 0 supplies the most significant response bit.
//!
//! Only the transmitted port of the cascade is modeled.

mod dataset;

pub use dataset::{generate_dataset, read_dataset, write_dataset, Crp, CrpDataset};

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::VALUE_SPACE;
use crate::error::{Error, Result};
use crate::io_util;
use crate::optics::{
    apply_transfer, compose, edge_coupler_transfer, polarized_power_fraction,
    trench_coupler_transfer, waveguide_transfer, EdgeCouplerParams, PolarizationState,
    TransferMatrix, TrenchCouplerParams, WaveguideParams,
};
use crate::rng::{self, normal, uniform};

pub const CELL_COUNT: usize = 24;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_N_CAL: usize = 4096;
pub const MIN_N_CAL: usize = 256;

const RHO_MEAN: f64 = 0.3;
const RHO_MAX: f64 = 0.95;
const EDGE_MEAN: f64 = 0.9;
const EDGE_SD: f64 = 0.02;
const EDGE_MIN: f64 = 1e-6;
const REALIZATION_FORMAT: &str = "pufmvl-realization/1";

/// Component parameters of one cell, in propagation order:
/// input edge coupler, waveguide 0, then (coupler k, waveguide k) for
/// k = 1..3, then the output edge coupler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub input: EdgeCouplerParams,
    pub waveguides: [WaveguideParams; 4],
    pub couplers: [TrenchCouplerParams; 3],
    pub output: EdgeCouplerParams,
    pub threshold: Option<f64>,
}

impl CellParams {
    /// A cell whose every component is the identity.
    pub fn identity() -> Self {
        Self {
            input: EdgeCouplerParams::lossless(),
            waveguides: [WaveguideParams::straight(); 4],
            couplers: [TrenchCouplerParams::transparent(); 3],
            output: EdgeCouplerParams::lossless(),
            threshold: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    fn draw(rng: &mut rng::SplitMix64, sigma: f64) -> Self {
        let edge = |rng: &mut rng::SplitMix64| EdgeCouplerParams {
            a_te: normal(rng, EDGE_MEAN, EDGE_SD).clamp(EDGE_MIN, 1.0),
            a_tm: normal(rng, EDGE_MEAN, EDGE_SD).clamp(EDGE_MIN, 1.0),
        };
        let waveguide = |rng: &mut rng::SplitMix64| WaveguideParams {
            theta: normal(rng, 0.0, sigma),
            phi_te: uniform(rng, 0.0, 2.0 * PI),
            phi_tm: uniform(rng, 0.0, 2.0 * PI),
        };
        let coupler = |rng: &mut rng::SplitMix64| TrenchCouplerParams {
            rho_te: normal(rng, RHO_MEAN, sigma).clamp(0.0, RHO_MAX),
            rho_tm: normal(rng, RHO_MEAN, sigma).clamp(0.0, RHO_MAX),
            delta_te: uniform(rng, 0.0, 2.0 * PI),
            delta_tm: uniform(rng, 0.0, 2.0 * PI),
            kappa: normal(rng, 0.0, sigma),
        };

        let input = edge(rng);
        let w0 = waveguide(rng);
        let mut couplers = [TrenchCouplerParams::transparent(); 3];
        let mut waveguides = [w0; 4];
        for k in 0..3 {
            couplers[k] = coupler(rng);
            waveguides[k + 1] = waveguide(rng);
        }
        let output = edge(rng);
        Self {
            input,
            waveguides,
            couplers,
            output,
            threshold: None,
        }
    }

    /// Overall Jones matrix of the cell.
    pub fn transfer(&self) -> Result<TransferMatrix> {
        let mut chain = Vec::with_capacity(9);
        chain.push(edge_coupler_transfer(&self.input)?);
        chain.push(waveguide_transfer(&self.waveguides[0]));
        for k in 0..3 {
            chain.push(trench_coupler_transfer(&self.couplers[k])?);
            chain.push(waveguide_transfer(&self.waveguides[k + 1]));
        }
        chain.push(edge_coupler_transfer(&self.output)?);
        compose(&chain)
    }
}

/// Maps a challenge to a unit-power input state: the upper 12 bits set the
/// polarization angle `pi * u / 4096`, the lower 12 bits the relative phase
/// `2 pi * v / 4096`.
pub fn challenge_to_state(challenge: u32) -> Result<PolarizationState> {
    check_challenge(challenge)?;
    let u = f64::from(challenge >> 12);
    let v = f64::from(challenge & 0xFFF);
    let theta = PI * u / 4096.0;
    let phi = 2.0 * PI * v / 4096.0;
    let (s, c) = theta.sin_cos();
    Ok(PolarizationState::new(
        c.into(),
        num_complex::Complex64::from_polar(s, phi),
    ))
}

fn check_challenge(challenge: u32) -> Result<()> {
    if u64::from(challenge) >= VALUE_SPACE {
        return Err(Error::invalid(format!("challenge {challenge:#x} exceeds 24 bits")));
    }
    Ok(())
}

/// Analog measurement of one cell: TE power share of the transmitted field.
pub fn cell_analog(cell: &CellParams, challenge: u32) -> Result<f64> {
    let m = cell.transfer()?;
    Ok(analog_with(&m, &challenge_to_state(challenge)?))
}

fn analog_with(m: &TransferMatrix, state: &PolarizationState) -> f64 {
    polarized_power_fraction(&apply_transfer(m, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    pub n_cal: usize,
    pub cal_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PufRealization {
    seed: u64,
    sigma: f64,
    calibration: Option<Calibration>,
    cells: Vec<CellParams>,
    transfers: Vec<TransferMatrix>,
}

#[derive(Serialize, Deserialize)]
struct RealizationRecord {
    format: String,
    seed: u64,
    sigma: f64,
    calibration: Option<Calibration>,
    cells: Vec<CellParams>,
}

impl PufRealization {
    /// Draws all component parameters from `(seed, sigma)`. Thresholds are
    /// left unset; see [`PufRealization::calibrate_thresholds`].
    pub fn generate(seed: u64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let cells = (0..CELL_COUNT)
            .map(|i| CellParams::draw(&mut rng::stream(seed, "cell", i as u64), sigma))
            .collect();
        Self::from_cells(seed, sigma, cells)
    }

    /// Builds a realization from explicit cells (fixtures, loaded files).
    pub fn from_cells(seed: u64, sigma: f64, cells: Vec<CellParams>) -> Result<Self> {
        if cells.len() != CELL_COUNT {
            return Err(Error::invalid(format!(
                "a PUF has {CELL_COUNT} cells, got {}",
                cells.len()
            )));
        }
        let transfers = cells
            .iter()
            .map(|c| {
                if let Some(t) = c.threshold {
                    if !(0.0..=1.0).contains(&t) {
                        return Err(Error::invalid(format!("threshold {t} is outside [0, 1]")));
                    }
                }
                let m = c.transfer()?;
                if !m.is_finite() {
                    return Err(Error::invalid("cell transfer matrix is not finite"));
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            seed,
            sigma,
            calibration: None,
            cells,
            transfers,
        })
    }

    /// Sets each cell's threshold to the median of its analog output over
    /// `n_cal` uniformly drawn challenges.
    pub fn calibrate_thresholds(mut self, n_cal: usize, cal_seed: u64) -> Result<Self> {
        if n_cal < MIN_N_CAL {
            return Err(Error::invalid(format!(
                "calibration needs at least {MIN_N_CAL} challenges, got {n_cal}"
            )));
        }
        let mut rng = rng::stream(cal_seed, "calibrate", 0);
        let states = (0..n_cal)
            .map(|_| challenge_to_state(rng.random_range(0..VALUE_SPACE as u32)))
            .collect::<Result<Vec<_>>>()?;
        for (cell, m) in self.cells.iter_mut().zip(&self.transfers) {
            let mut values: Vec<f64> = states.iter().map(|s| analog_with(m, s)).collect();
            cell.threshold = Some(median(&mut values));
        }
        self.calibration = Some(Calibration { n_cal, cal_seed });
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn calibration(&self) -> Option<Calibration> {
        self.calibration
    }

    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    pub fn is_calibrated(&self) -> bool {
        self.cells.iter().all(|c| c.threshold.is_some())
    }

    /// Analog outputs of all cells for one challenge.
    pub fn analog_outputs(&self, challenge: u32) -> Result<[f64; CELL_COUNT]> {
        let s = challenge_to_state(challenge)?;
        Ok(std::array::from_fn(|i| analog_with(&self.transfers[i], &s)))
    }

    /// Analog output of cell `cell` for one challenge.
    pub fn cell_output(&self, cell: usize, challenge: u32) -> Result<f64> {
        let m = self
            .transfers
            .get(cell)
            .ok_or_else(|| Error::invalid(format!("cell index {cell} out of range")))?;
        Ok(analog_with(m, &challenge_to_state(challenge)?))
    }

    /// 24-bit response: bit i (from the top) is 1 iff cell i's analog output
    /// reaches its threshold.
    pub fn evaluate(&self, challenge: u32) -> Result<u32> {
        let s = challenge_to_state(challenge)?;
        let mut response = 0u32;
        for (cell, m) in self.cells.iter().zip(&self.transfers) {
            let threshold = cell
                .threshold
                .ok_or_else(|| Error::InvalidState("PUF thresholds are not calibrated".into()))?;
            response = (response << 1) | u32::from(analog_with(m, &s) >= threshold);
        }
        Ok(response)
    }

    /// Rebuilds the realization from its seeds alone.
    pub fn regenerate(&self) -> Result<Self> {
        let fresh = Self::generate(self.seed, self.sigma)?;
        match self.calibration {
            Some(c) => fresh.calibrate_thresholds(c.n_cal, c.cal_seed),
            None => Ok(fresh),
        }
    }

    pub fn to_json(&self) -> String {
        let record = RealizationRecord {
            format: REALIZATION_FORMAT.into(),
            seed: self.seed,
            sigma: self.sigma,
            calibration: self.calibration,
            cells: self.cells.clone(),
        };
        serde_json::to_string_pretty(&record).expect("realization serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: RealizationRecord = serde_json::from_str(text)
            .map_err(|e| Error::parse(e.line(), e.to_string()))?;
        if record.format != REALIZATION_FORMAT {
            return Err(Error::parse(1, format!("unknown format tag {:?}", record.format)));
        }
        let mut puf = Self::from_cells(record.seed, record.sigma, record.cells)?;
        puf.calibration = record.calibration;
        Ok(puf)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&io_util::read_to_string(path)?)
    }
}

/// Realizes and calibrates a PUF with the default calibration size, using
/// `seed` as the calibration seed too.
pub fn realize_puf(seed: u64, sigma: f64) -> Result<PufRealization> {
    PufRealization::generate(seed, sigma)?.calibrate_thresholds(DEFAULT_N_CAL, seed)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
