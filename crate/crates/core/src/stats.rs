//! Statistical checks on simulated PUFs: per-bit uniformity, response-bit
//! autocorrelation along the natural challenge order, response collisions
//! (a birthday-bound proxy for bijectivity), avalanche sensitivity, and
//! quantiles of the analog cell outputs.

use std::collections::HashSet;

use rand::Rng;
use serde::Serialize;

use crate::codec::{RESPONSE_BITS, VALUE_SPACE};
use crate::error::{Error, Result};
use crate::puf::{CrpDataset, PufRealization, CELL_COUNT};
use crate::rng;

/// Fraction of ones at each response bit position (most significant first).
pub fn uniformity(ds: &CrpDataset) -> Result<Vec<f64>> {
    ones_fraction(ds.responses(), ds.len())
}

fn ones_fraction(responses: impl Iterator<Item = u32>, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("uniformity of an empty dataset"));
    }
    let mut ones = [0usize; RESPONSE_BITS];
    for r in responses {
        for (i, slot) in ones.iter_mut().enumerate() {
            *slot += ((r >> (RESPONSE_BITS - 1 - i)) & 1) as usize;
        }
    }
    Ok(ones.iter().map(|&k| k as f64 / n as f64).collect())
}

/// Normalized autocorrelation of a 0/1 sequence at lags `1..=max_lag`,
/// computed on the centered +-1 sequence. `None` when the sequence is
/// constant, where the statistic is undefined.
pub fn autocorrelation(bits: &[u8], max_lag: usize) -> Result<Option<Vec<f64>>> {
    if max_lag < 1 || bits.len() <= max_lag {
        return Err(Error::invalid(format!(
            "need n > max_lag >= 1, got n = {}, max_lag = {max_lag}",
            bits.len()
        )));
    }
    let signed: Vec<f64> = bits.iter().map(|&b| if b != 0 { 1.0 } else { -1.0 }).collect();
    let mean = signed.iter().sum::<f64>() / signed.len() as f64;
    let centered: Vec<f64> = signed.iter().map(|x| x - mean).collect();
    let energy: f64 = centered.iter().map(|x| x * x).sum();
    if energy <= 1e-12 * signed.len() as f64 {
        return Ok(None);
    }
    Ok(Some(
        (1..=max_lag)
            .map(|lag| {
                centered
                    .iter()
                    .zip(&centered[lag..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / energy
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitAutocorrelation {
    pub bit: usize,
    /// Values at lags 1..=max_lag; `None` when the bit never changes.
    pub lags: Option<Vec<f64>>,
}

/// Autocorrelation of response bit `bit` over challenges `0..n` in order.
pub fn bit_autocorrelation(
    puf: &PufRealization,
    bit: usize,
    max_lag: usize,
    n: usize,
) -> Result<BitAutocorrelation> {
    Ok(all_bit_autocorrelations(puf, max_lag, n)?.swap_remove(check_bit(bit)?))
}

fn check_bit(bit: usize) -> Result<usize> {
    if bit >= RESPONSE_BITS {
        return Err(Error::invalid(format!("bit index {bit} out of range")));
    }
    Ok(bit)
}

/// Same statistic for all 24 bits from one pass over the challenges.
pub fn all_bit_autocorrelations(
    puf: &PufRealization,
    max_lag: usize,
    n: usize,
) -> Result<Vec<BitAutocorrelation>> {
    if n as u64 > VALUE_SPACE {
        return Err(Error::invalid("n exceeds the challenge space"));
    }
    let responses = (0..n as u32)
        .map(|c| puf.evaluate(c))
        .collect::<Result<Vec<_>>>()?;
    (0..RESPONSE_BITS)
        .map(|bit| {
            let seq: Vec<u8> = responses
                .iter()
                .map(|r| ((r >> (RESPONSE_BITS - 1 - bit)) & 1) as u8)
                .collect();
            Ok(BitAutocorrelation {
                bit,
                lags: autocorrelation(&seq, max_lag)?,
            })
        })
        .collect()
}

/// Number of responses that repeat an earlier one (`n - distinct`), with
/// the sample size.
pub fn collision_scan(ds: &CrpDataset) -> (usize, usize) {
    collisions(ds.responses(), ds.len())
}

fn collisions(responses: impl Iterator<Item = u32>, n: usize) -> (usize, usize) {
    let distinct: HashSet<u32> = responses.collect();
    (n - distinct.len(), n)
}

/// Expected colliding pairs among `n` uniform draws from 2^24 values,
/// with its standard deviation (Poisson approximation).
pub fn birthday_expectation(n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = n * (n - 1.0) / (2.0 * VALUE_SPACE as f64);
    (mean, mean.sqrt())
}

/// Scans all 2^24 challenges and counts response collisions.
pub fn full_domain_collisions(puf: &PufRealization) -> Result<(usize, usize)> {
    let mut seen = vec![0u64; (VALUE_SPACE / 64) as usize];
    let mut dup = 0;
    for c in 0..VALUE_SPACE as u32 {
        let r = puf.evaluate(c)?;
        let (w, b) = ((r / 64) as usize, r % 64);
        if seen[w] & (1 << b) != 0 {
            dup += 1;
        }
        seen[w] |= 1 << b;
    }
    Ok((dup, VALUE_SPACE as usize))
}

/// Mean fraction of response bits that flip when challenge bit `j` flips.
/// Entry `j` is for the challenge bit of weight `2^j`.
pub fn avalanche_profile(puf: &PufRealization, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 100 {
        return Err(Error::invalid(format!("avalanche needs n >= 100, got {n}")));
    }
    let mut rng = rng::stream(seed, "avalanche", 0);
    let mut flips = [0u64; RESPONSE_BITS];
    for _ in 0..n {
        let c = rng.random_range(0..VALUE_SPACE as u32);
        let base = puf.evaluate(c)?;
        for (j, slot) in flips.iter_mut().enumerate() {
            *slot += u64::from((base ^ puf.evaluate(c ^ (1 << j))?).count_ones());
        }
    }
    Ok(flips
        .iter()
        .map(|&f| f as f64 / (n * RESPONSE_BITS) as f64)
        .collect())
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-cell empirical quantiles of the analog outputs over `n` random
/// challenges, as `(q, value)` pairs in the order of `qs`.
pub fn quantile_report(
    puf: &PufRealization,
    qs: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if n < 1000 {
        return Err(Error::invalid(format!("quantiles need n >= 1000, got {n}")));
    }
    if let Some(q) = qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::invalid(format!("quantile {q} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed, "quantiles", 0);
    let mut per_cell: Vec<Vec<f64>> = vec![Vec::with_capacity(n); CELL_COUNT];
    for _ in 0..n {
        let outputs = puf.analog_outputs(rng.random_range(0..VALUE_SPACE as u32))?;
        for (col, v) in per_cell.iter_mut().zip(outputs) {
            col.push(v);
        }
    }
    Ok(per_cell
        .into_iter()
        .map(|mut col| {
            col.sort_by(f64::total_cmp);
            qs.iter().map(|&q| (q, quantile_sorted(&col, q))).collect()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub max_lag: usize,
    pub autocorr_n: usize,
    pub avalanche_n: usize,
    pub quantile_n: usize,
    pub quantiles: Vec<f64>,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            max_lag: 50,
            autocorr_n: 10_000,
            avalanche_n: 1_000,
            quantile_n: 10_000,
            quantiles: vec![0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub uniformity: Vec<f64>,
    pub autocorr: Vec<BitAutocorrelation>,
    pub collision_count: usize,
    pub sample_size: usize,
    pub birthday_expectation: f64,
    pub avalanche: Vec<f64>,
    pub analog_quantiles: Vec<Vec<(f64, f64)>>,
}

pub fn validate(puf: &PufRealization, ds: &CrpDataset, cfg: &ValidationConfig) -> Result<ValidationReport> {
    let (collision_count, sample_size) = collision_scan(ds);
    Ok(ValidationReport {
        uniformity: uniformity(ds)?,
        autocorr: all_bit_autocorrelations(puf, cfg.max_lag, cfg.autocorr_n)?,
        collision_count,
        sample_size,
        birthday_expectation: birthday_expectation(sample_size).0,
        avalanche: avalanche_profile(puf, cfg.avalanche_n, cfg.seed)?,
        analog_quantiles: quantile_report(puf, &cfg.quantiles, cfg.quantile_n, cfg.seed)?,
    })
}
