use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_experiment_with_puf, EvalOptions, ExperimentResult, ExperimentSpec, ResultRow, ScaleRule};
use crate::codec::EXPERIMENT_RADICES;
use crate::error::{Error, Result};
use crate::io_util;
use crate::mlp::{TrainConfig, DEFAULT_HIDDEN_WIDTH, DEFAULT_N_HIDDEN};
use crate::puf::{realize_puf, DEFAULT_SIGMA};

/// Training-set sizes of the full grid.
pub const DEFAULT_TRAIN_SIZES: [usize; 10] = [10, 30, 50, 100, 300, 1_000, 3_000, 10_000, 30_000, 100_000];

/// Declarative experiment grid. Defaults describe the full grid
/// (4 PUFs x 3 challenge radices x 11 response radices x 10 sizes x 5 folds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub puf_seeds: Vec<u64>,
    pub sigma: f64,
    pub rc: Vec<u32>,
    pub rr: Vec<u32>,
    pub n_train: Vec<usize>,
    pub folds: usize,
    pub test_size: usize,
    pub master_seed: u64,
    pub hidden_width: usize,
    pub n_hidden: usize,
    pub scale_rule: ScaleRule,
    pub normalize_inputs: bool,
    pub overflow: super::Overflow,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            puf_seeds: vec![1, 2, 3, 4],
            sigma: DEFAULT_SIGMA,
            rc: vec![2, 3, 4],
            rr: EXPERIMENT_RADICES.to_vec(),
            n_train: DEFAULT_TRAIN_SIZES.to_vec(),
            folds: super::DEFAULT_FOLDS,
            test_size: super::DEFAULT_TEST_SIZE,
            master_seed: 0,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            n_hidden: DEFAULT_N_HIDDEN,
            scale_rule: ScaleRule::default(),
            normalize_inputs: false,
            overflow: super::Overflow::default(),
            train: TrainConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            Error::parse(line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&io_util::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.puf_seeds.is_empty() || self.rc.is_empty() || self.rr.is_empty() || self.n_train.is_empty() {
            return Err(Error::invalid("sweep grid has an empty axis"));
        }
        if self.folds == 0 {
            return Err(Error::invalid("folds must be >= 1"));
        }
        for spec in self.experiments() {
            spec.validate()?;
        }
        Ok(())
    }

    /// Every cell of the grid, sorted by (puf, R_c, R_r, n_train, fold).
    pub fn experiments(&self) -> Vec<ExperimentSpec> {
        let mut seeds = self.puf_seeds.clone();
        let mut rcs = self.rc.clone();
        let mut rrs = self.rr.clone();
        let mut sizes = self.n_train.clone();
        for v in [&mut seeds] {
            v.sort_unstable();
            v.dedup();
        }
        for v in [&mut rcs, &mut rrs] {
            v.sort_unstable();
            v.dedup();
        }
        sizes.sort_unstable();
        sizes.dedup();
        let mut out = Vec::new();
        for &puf_seed in &seeds {
            for &rc in &rcs {
                for &rr in &rrs {
                    for &n_train in &sizes {
                        for fold_index in 0..self.folds {
                            out.push(ExperimentSpec {
                                puf_seed,
                                sigma: self.sigma,
                                rc,
                                rr,
                                n_train,
                                fold_index,
                                n_folds: self.folds,
                                test_size: self.test_size,
                                master_seed: self.master_seed,
                                hidden_width: self.hidden_width,
                                n_hidden: self.n_hidden,
                                scale_rule: self.scale_rule,
                                eval: EvalOptions {
                                    normalize_inputs: self.normalize_inputs,
                                    overflow: self.overflow,
                                },
                                train: self.train.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

fn cell_path(dir: &Path, s: &ExperimentSpec) -> PathBuf {
    dir.join(format!(
        "p{}-c{}-r{}-n{}-f{}.json",
        s.puf_seed, s.rc, s.rr, s.n_train, s.fold_index
    ))
}

fn load_cell(path: &Path, spec: &ExperimentSpec) -> Option<ExperimentResult> {
    let text = std::fs::read_to_string(path).ok()?;
    let r: ExperimentResult = serde_json::from_str(&text).ok()?;
    (r.spec == *spec).then_some(r)
}

/// Runs every grid cell on at most `jobs` threads. With `cell_dir`, each
/// finished cell is written there atomically and cells already present for
/// the same spec are reused, so an interrupted sweep resumes where it
/// stopped. Results come back in [`SweepConfig::experiments`] order.
pub fn run_sweep(cfg: &SweepConfig, jobs: usize, cell_dir: Option<&Path>) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    if let Some(dir) = cell_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let specs = cfg.experiments();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;

    let pending: Vec<bool> = specs
        .iter()
        .map(|s| cell_dir.is_none_or(|d| load_cell(&cell_path(d, s), s).is_none()))
        .collect();
    let mut seeds: Vec<u64> = specs.iter().zip(&pending).filter(|(_, p)| **p).map(|(s, _)| s.puf_seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let pufs: HashMap<u64, std::result::Result<_, String>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| (seed, realize_puf(seed, cfg.sigma).map_err(|e| e.to_string())))
            .collect()
    });

    pool.install(|| {
        specs
            .par_iter()
            .zip(pending.par_iter())
            .map(|(spec, &todo)| {
                if !todo {
                    let dir = cell_dir.expect("cached cells imply a cell directory");
                    return load_cell(&cell_path(dir, spec), spec)
                        .ok_or_else(|| Error::InvalidState(format!("cell for {spec:?} vanished")));
                }
                let result = match &pufs[&spec.puf_seed] {
                    Ok(puf) => run_experiment_with_puf(spec, puf)
                        .unwrap_or_else(|e| ExperimentResult::failed(spec.clone(), &e)),
                    Err(msg) => ExperimentResult::failed(spec.clone(), &Error::InvalidState(msg.clone())),
                };
                if let Some(dir) = cell_dir {
                    let json = serde_json::to_string_pretty(&result).expect("result serializes");
                    io_util::write_atomic(&cell_path(dir, spec), json.as_bytes())?;
                }
                Ok(result)
            })
            .collect()
    })
}

/// One row of the summary: a (R_c, R_r, n_train) group pooled over PUFs and
/// folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub rc: u32,
    pub rr: u32,
    pub n_train: usize,
    /// Mean of the per-experiment mean bit accuracies.
    pub avg_acc: f64,
    /// Extremes over every (PUF, fold, bit).
    pub max_bit_acc: f64,
    pub min_bit_acc: f64,
    pub experiments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

pub fn summarize(results: &[ExperimentResult]) -> Result<SweepSummary> {
    summarize_rows(&results.iter().map(ExperimentResult::row).collect::<Vec<_>>())
}

/// Groups scored rows by (R_c, R_r, n_train); rows without accuracies
/// (failed experiments) are left out.
pub fn summarize_rows(rows: &[ResultRow]) -> Result<SweepSummary> {
    if rows.is_empty() {
        return Err(Error::invalid("no results to summarize"));
    }
    let mut groups: BTreeMap<(u32, u32, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mean_acc.is_finite() && !r.per_bit.is_empty()) {
        groups.entry((r.rc, r.rr, r.n_train)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((rc, rr, n_train), members)| {
            let bits = members.iter().flat_map(|r| r.per_bit.iter().copied());
            let (min, max) = bits.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b), hi.max(b)));
            let avg = members.iter().map(|r| r.mean_acc).sum::<f64>() / members.len() as f64;
            SummaryRow {
                rc,
                rr,
                n_train,
                // the mean lies between the extremes; clamp away summation round-off
                avg_acc: avg.clamp(min, max),
                max_bit_acc: max,
                min_bit_acc: min,
                experiments: members.len(),
            }
        })
        .collect();
    Ok(SweepSummary { rows })
}
