//! Command-line workflows: realize a PUF, sample and validate its CRPs,
//! train attack models, run experiment grids and summarize them.
//!
//! Exit status: 0 success, 1 invalid input data or failed grid cells,
//! 2 usage, 3 file I/O, 4 every training run diverged.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pufmvl::attack::{
    self, read_results_csv, run_experiment_keep_model, run_sweep, summarize, summarize_rows, write_results_csv,
    write_summary_csv, EvalOptions, ExperimentResult, ExperimentSpec, ResultRow, RunStatus, SweepConfig,
};
use pufmvl::mlp::{write_checkpoint, BatchRule, TrainConfig};
use pufmvl::puf::{self, generate_dataset, read_dataset, write_dataset, PufRealization};
use pufmvl::stats::{validate, ValidationConfig};
use pufmvl::io_util;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Parser, PartialEq)]
#[command(name = "pufmvl", version, about = "Photonic PUF simulator and MLP attack lab", arg_required_else_help = true)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum Command {
    /// Realize PUFs and sample their challenge-response pairs.
    #[command(subcommand)]
    Puf(PufCommand),
    /// Statistical report on a PUF and a CRP file.
    Validate(ValidateArgs),
    /// Train and score attack models for one grid cell.
    Train(TrainArgs),
    /// Run an experiment grid described by a TOML file.
    Sweep(SweepArgs),
    /// Summarize a results CSV into plot-ready series.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum PufCommand {
    /// Draw and calibrate a PUF realization.
    New(PufNewArgs),
    /// Sample CRPs from a saved realization.
    Crps(PufCrpsArgs),
}

#[derive(Debug, Args, PartialEq, Serialize)]
pub struct PufNewArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = puf::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Challenges used to place each cell's median threshold.
    #[arg(long, default_value_t = puf::DEFAULT_N_CAL)]
    pub n_cal: usize,
    /// Defaults to --seed.
    #[arg(long)]
    pub cal_seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, PartialEq, Serialize)]
pub struct PufCrpsArgs {
    #[arg(long)]
    pub puf: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub gen_seed: u64,
    /// CRP file whose challenges must not be reused.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, PartialEq, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub puf: PathBuf,
    #[arg(long)]
    pub crps: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub max_lag: usize,
    #[arg(long, default_value_t = 10_000)]
    pub autocorr_n: usize,
    #[arg(long, default_value_t = 1_000)]
    pub avalanche_n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub quantile_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum BatchRuleArg {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ScaleArg {
    /// R_r - 1
    Radix,
    /// D_r - 1
    Width,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum OverflowArg {
    Wrap,
    Clamp,
}

#[derive(Debug, Args, PartialEq, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["puf", "puf_seed"]))]
pub struct TrainArgs {
    /// Saved realization to attack.
    #[arg(long)]
    pub puf: Option<PathBuf>,
    /// Realize the PUF from this seed instead of a file.
    #[arg(long)]
    pub puf_seed: Option<u64>,
    #[arg(long, default_value_t = puf::DEFAULT_SIGMA, conflicts_with = "puf")]
    pub sigma: f64,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub rc: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub rr: u32,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_train: u64,
    #[arg(long, default_value_t = attack::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Run only this fold.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long, default_value_t = attack::DEFAULT_TEST_SIZE)]
    pub test_size: usize,
    #[arg(long, default_value_t = 0)]
    pub master_seed: u64,
    #[arg(long, default_value_t = pufmvl::mlp::DEFAULT_HIDDEN_WIDTH)]
    pub hidden_width: usize,
    #[arg(long, default_value_t = pufmvl::mlp::DEFAULT_N_HIDDEN)]
    pub n_hidden: usize,
    #[arg(long, default_value_t = pufmvl::mlp::DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    #[arg(long, default_value_t = 1000)]
    pub min_steps: u64,
    #[arg(long, value_enum, default_value_t = BatchRuleArg::Min)]
    pub batch_rule: BatchRuleArg,
    #[arg(long, value_enum, default_value_t = ScaleArg::Radix)]
    pub output_scale: ScaleArg,
    /// Divide challenge digits by R_c - 1 before the first layer.
    #[arg(long)]
    pub normalize_inputs: bool,
    #[arg(long, value_enum, default_value_t = OverflowArg::Wrap)]
    pub overflow: OverflowArg,
    /// Write one MLPF checkpoint per fold here.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Results CSV.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, PartialEq, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Receives config.toml, cells/, results.csv and summary.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args, PartialEq, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(pufmvl::Error),
    CellsFailed(usize),
    AllDiverged,
}

impl From<pufmvl::Error> for CliError {
    fn from(e: pufmvl::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(pufmvl::Error::Io { .. }) => EXIT_IO,
            CliError::Lib(_) | CliError::CellsFailed(_) => EXIT_DATA,
            CliError::AllDiverged => EXIT_DIVERGED,
        }
    }

    fn class(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_IO => "io",
            EXIT_DIVERGED => "divergence",
            _ => "data",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::CellsFailed(n) => write!(f, "{n} grid cell(s) failed; see the results file"),
            CliError::AllDiverged => f.write_str("training diverged in every run"),
        }
    }
}

pub fn parse_cli<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    RunConfig::try_parse_from(argv)
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_cli(argv) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn run(cfg: &RunConfig) -> i32 {
    match execute(cfg) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            e.exit_code()
        }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.command {
        Command::Puf(PufCommand::New(a)) => puf_new(a),
        Command::Puf(PufCommand::Crps(a)) => puf_crps(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

#[derive(Serialize)]
struct Meta<'a, C: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config: C,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes the effective configuration next to a CSV artifact.
fn write_meta<C: Serialize>(artifact: &Path, command: &str, config: C) -> Result<(), CliError> {
    let meta = Meta {
        tool: "pufmvl",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
    };
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    io_util::write_atomic(&sidecar(artifact), text.as_bytes())?;
    Ok(())
}

fn puf_new(a: &PufNewArgs) -> Result<(), CliError> {
    let p = PufRealization::generate(a.seed, a.sigma)?.calibrate_thresholds(a.n_cal, a.cal_seed.unwrap_or(a.seed))?;
    p.write(&a.output)?;
    println!("wrote PUF seed {} (sigma {}) to {}", a.seed, a.sigma, a.output.display());
    Ok(())
}

fn puf_crps(a: &PufCrpsArgs) -> Result<(), CliError> {
    let p = PufRealization::read(&a.puf)?;
    let exclude = match &a.exclude {
        Some(path) => read_dataset(path)?.challenge_set(),
        None => Default::default(),
    };
    let ds = generate_dataset(&p, a.count, a.gen_seed, &exclude)?;
    write_dataset(&ds, &a.output)?;
    println!("wrote {} CRPs to {}", ds.len(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct ValidationArtifact<'a> {
    tool: &'a str,
    version: &'a str,
    config: &'a ValidateArgs,
    puf_seed: u64,
    sigma: f64,
    calibration: Option<puf::Calibration>,
    crp_header: String,
    report: pufmvl::stats::ValidationReport,
}

fn validate_cmd(a: &ValidateArgs) -> Result<(), CliError> {
    let p = PufRealization::read(&a.puf)?;
    let ds = read_dataset(&a.crps)?;
    let vcfg = ValidationConfig {
        max_lag: a.max_lag,
        autocorr_n: a.autocorr_n,
        avalanche_n: a.avalanche_n,
        quantile_n: a.quantile_n,
        seed: a.seed,
        ..ValidationConfig::default()
    };
    let report = validate(&p, &ds, &vcfg)?;
    let (lo, hi) = report
        .uniformity
        .iter()
        .fold((1.0f64, 0.0f64), |(l, h), &u| (l.min(u), h.max(u)));
    println!(
        "uniformity [{lo:.4}, {hi:.4}]; collisions {} of {} (birthday {:.1})",
        report.collision_count, report.sample_size, report.birthday_expectation
    );
    let artifact = ValidationArtifact {
        tool: "pufmvl",
        version: env!("CARGO_PKG_VERSION"),
        config: a,
        puf_seed: p.seed(),
        sigma: p.sigma(),
        calibration: p.calibration(),
        crp_header: ds.header(),
        report,
    };
    let text = serde_json::to_string_pretty(&artifact).expect("report serializes") + "\n";
    io_util::write_atomic(&a.output, text.as_bytes())?;
    Ok(())
}

fn train_specs(a: &TrainArgs, puf_seed: u64) -> Result<Vec<ExperimentSpec>, CliError> {
    if a.folds == 0 {
        return Err(CliError::Usage("--folds must be >= 1".into()));
    }
    let folds: Vec<usize> = match a.fold {
        Some(f) if f >= a.folds => {
            return Err(CliError::Usage(format!("--fold {f} is out of range for {} folds", a.folds)));
        }
        Some(f) => vec![f],
        None => (0..a.folds).collect(),
    };
    let train = TrainConfig {
        max_steps: a.max_steps,
        min_steps: a.min_steps,
        batch_rule: match a.batch_rule {
            BatchRuleArg::Min => BatchRule::Min,
            BatchRuleArg::Max => BatchRule::Max,
        },
        ..TrainConfig::default()
    };
    let specs: Vec<ExperimentSpec> = folds
        .into_iter()
        .map(|fold| ExperimentSpec {
            sigma: a.sigma,
            n_folds: a.folds,
            test_size: a.test_size,
            master_seed: a.master_seed,
            hidden_width: a.hidden_width,
            n_hidden: a.n_hidden,
            scale_rule: match a.output_scale {
                ScaleArg::Radix => attack::ScaleRule::RadixMinusOne,
                ScaleArg::Width => attack::ScaleRule::WidthMinusOne,
            },
            eval: EvalOptions {
                normalize_inputs: a.normalize_inputs,
                overflow: match a.overflow {
                    OverflowArg::Wrap => attack::Overflow::Wrap,
                    OverflowArg::Clamp => attack::Overflow::Clamp,
                },
            },
            train: train.clone(),
            ..ExperimentSpec::new(puf_seed, a.rc, a.rr, a.n_train as usize, fold)
        })
        .collect();
    for s in &specs {
        s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(specs)
}

fn print_result(r: &ExperimentResult) {
    println!(
        "puf {} R_c={} R_r={} n={} fold {}: mean bit accuracy {:.6}, {} steps, {}",
        r.spec.puf_seed,
        r.spec.rc,
        r.spec.rr,
        r.spec.n_train,
        r.spec.fold_index,
        r.mean_bit_accuracy,
        r.steps,
        r.status.as_str()
    );
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let p = match (&a.puf, a.puf_seed) {
        (Some(path), _) => PufRealization::read(path)?,
        (None, Some(seed)) => puf::realize_puf(seed, a.sigma)?,
        (None, None) => return Err(CliError::Usage("one of --puf or --puf-seed is required".into())),
    };
    let specs = train_specs(a, p.seed())?;
    if let Some(dir) = &a.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| pufmvl::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    let mut results = Vec::with_capacity(specs.len());
    for spec in &specs {
        let (r, model) = run_experiment_keep_model(spec, &p)?;
        print_result(&r);
        if let Some(dir) = &a.checkpoint_dir {
            let name = format!("p{}-c{}-r{}-n{}-f{}.mlpf", spec.puf_seed, spec.rc, spec.rr, spec.n_train, spec.fold_index);
            write_checkpoint(&dir.join(name), &model)?;
        }
        results.push(r);
    }
    let rows: Vec<ResultRow> = results.iter().map(ExperimentResult::row).collect();
    write_results_csv(&rows, &a.output)?;
    write_meta(&a.output, "train", &specs)?;
    if results.iter().all(|r| r.status == RunStatus::Diverged) {
        return Err(CliError::AllDiverged);
    }
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<(), CliError> {
    let mut cfg = SweepConfig::read(&a.config)?;
    if let Some(v) = a.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.test_size {
        cfg.test_size = v;
    }
    if let Some(v) = a.folds {
        cfg.folds = v;
    }
    if let Some(v) = a.hidden_width {
        cfg.hidden_width = v;
    }
    if let Some(v) = a.max_steps {
        cfg.train.max_steps = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    std::fs::create_dir_all(&a.out).map_err(|e| pufmvl::Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    io_util::write_atomic(&a.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let results = run_sweep(&cfg, a.jobs as usize, Some(&a.out.join("cells")))?;
    for r in &results {
        print_result(r);
    }
    let rows: Vec<ResultRow> = results.iter().map(ExperimentResult::row).collect();
    let results_path = a.out.join("results.csv");
    write_results_csv(&rows, &results_path)?;
    write_meta(&results_path, "sweep", &cfg)?;

    let failed = results.iter().filter(|r| r.status == RunStatus::Failed).count();
    if results.iter().all(|r| r.status == RunStatus::Diverged) {
        return Err(CliError::AllDiverged);
    }
    if let Ok(summary) = summarize(&results) {
        if !summary.rows.is_empty() {
            let summary_path = a.out.join("summary.csv");
            write_summary_csv(&summary, &summary_path)?;
            write_meta(&summary_path, "sweep", &cfg)?;
        }
    }
    if failed > 0 {
        return Err(CliError::CellsFailed(failed));
    }
    Ok(())
}

fn report_cmd(a: &ReportArgs) -> Result<(), CliError> {
    let rows = read_results_csv(&a.results)?;
    let summary = summarize_rows(&rows)?;
    write_summary_csv(&summary, &a.output)?;
    #[derive(Serialize)]
    struct ReportMeta<'a> {
        results: &'a Path,
        rows: usize,
        source_config: Option<serde_json::Value>,
    }
    let source_config = std::fs::read_to_string(sidecar(&a.results))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    write_meta(
        &a.output,
        "report",
        ReportMeta {
            results: &a.results,
            rows: rows.len(),
            source_config,
        },
    )?;
    println!("wrote {} summary rows to {}", summary.rows.len(), a.output.display());
    Ok(())
}
