//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use otfuse_core::io::load_heads;
use otfuse_core::ot::write_plan_dump;
use otfuse_core::scene::SceneHeads;

use crate::config::ExperimentConfig;
use crate::dataset::{generate_dataset, Dataset};
use crate::error::{CliError, CliResult};
use crate::run::{process_sample, run_pipeline, write_outputs, ReportFormat, RunSettings};
use crate::train::{self, HEADS_FILE};
use crate::verify::{run_suite, VerifyOptions, EPS_SWEEP_FILE};

pub const LOG_ENV: &str = "OTFUSE_LOG";
pub const DATASET_DIR: &str = "dataset";

#[derive(Debug, Parser)]
#[command(name = "otfuse", version, about = "Scene-anchored optimal-transport fusion on synthetic off-road scenes")]
pub struct Cli {
    /// Experiment configuration (TOML, `version = 1`).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory; also the default home of the dataset and heads.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the Sinkhorn regularisation strength.
    #[arg(long, global = true, value_name = "F")]
    pub epsilon: Option<f64>,
    /// Overrides the image-branch fusion weight.
    #[arg(long, global = true, value_name = "F")]
    pub lambda: Option<f64>,
    /// Worker threads for per-sample processing.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub parallel: usize,
    /// Which report files `run` writes.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Both)]
    pub format: ReportFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic dataset (features, probabilities, masks, prototypes).
    Generate,
    /// Trains the attribute heads on the Known split.
    TrainHeads {
        /// Dataset directory [default: <out>/dataset].
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Overrides the configured number of gradient steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Runs the full pipeline and writes the split report.
    Run {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Trained heads [default: <out>/heads.json].
        #[arg(long, value_name = "FILE")]
        heads: Option<PathBuf>,
        /// Also writes every transport plan under <out>/plans.
        #[arg(long)]
        dump_plans: bool,
    },
    /// Runs the solver and metric invariant suite.
    Verify {
        #[arg(long, hide = true)]
        inject_cost_corruption: bool,
    },
    /// Prints one sample's transport plan.
    DumpPlan {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        heads: Option<PathBuf>,
        #[arg(long, value_name = "ID")]
        sample: usize,
        #[arg(long, value_enum, default_value_t = Branch::Image)]
        branch: Branch,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Image,
    Normal,
}

impl Cli {
    /// Configuration file (or defaults) with command-line overrides applied.
    pub fn resolve_config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(eps) = self.epsilon {
            cfg.solver.epsilon = eps;
        }
        if let Some(lambda) = self.lambda {
            cfg.fusion.lambda = lambda;
        }
        if self.parallel == 0 {
            return Err(CliError::Usage("--parallel must be at least 1".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn data_dir(cfg: &ExperimentConfig, data: &Option<PathBuf>) -> PathBuf {
    data.clone().unwrap_or_else(|| cfg.out.join(DATASET_DIR))
}

fn open_heads(cfg: &ExperimentConfig, heads: &Option<PathBuf>) -> CliResult<SceneHeads> {
    let path = heads.clone().unwrap_or_else(|| cfg.out.join(HEADS_FILE));
    let (_, heads) = load_heads(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(heads)
}

fn settings(cfg: &ExperimentConfig, threads: usize) -> RunSettings {
    RunSettings { fusion: cfg.fusion_config(), eps_norm: cfg.fusion.eps_norm, loss_weights: cfg.loss_weights, threads }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Executes a parsed command, writing human-readable progress to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Generate => {
            let dir = cfg.out.join(DATASET_DIR);
            let manifest = generate_dataset(&cfg, &dir)?;
            write_file(&cfg.out.join("config.toml"), &cfg.to_toml_string())?;
            writeln!(stdout, "wrote {} samples to {}", manifest.samples.len(), dir.display())?;
        }
        Command::TrainHeads { data, steps } => {
            let dataset = Dataset::open(&data_dir(&cfg, data))?;
            let steps = steps.unwrap_or(cfg.heads.steps);
            let summary = train::train(&dataset, steps, cfg.heads.learning_rate)?;
            train::write_outputs(&summary, &dataset, &cfg.out)?;
            writeln!(
                stdout,
                "trained {steps} steps, final loss {:.6}",
                summary.loss_trace.last().copied().unwrap_or(f64::NAN)
            )?;
            for (split, acc) in [("known", summary.train_accuracy), ("all", summary.overall_accuracy)] {
                let [w, d, r] = acc.map(|a| 100.0 * a);
                writeln!(stdout, "accuracy ({split}): weather {w:.2}% time {d:.2}% road {r:.2}%")?;
            }
        }
        Command::Run { data, heads, dump_plans } => {
            let dataset = Dataset::open(&data_dir(&cfg, data))?;
            let heads = open_heads(&cfg, heads)?;
            let outcome = run_pipeline(&dataset, &heads, &settings(&cfg, cli.parallel))?;
            write_outputs(&dataset, &outcome, &cfg.out, cli.format, *dump_plans, cfg.solver.epsilon)?;
            let r = &outcome.report;
            info!("processed {} samples", outcome.samples.len());
            write!(stdout, "overall mIoU {:.2}", r.overall.metrics.miou)?;
            if let Some(k) = r.known {
                write!(stdout, ", known {:.2} ({} samples)", k.metrics.miou, k.samples)?;
            }
            if let Some(u) = r.unknown {
                write!(stdout, ", unknown {:.2} ({} samples)", u.metrics.miou, u.samples)?;
            }
            writeln!(stdout)?;
        }
        Command::Verify { inject_cost_corruption } => {
            let opts =
                VerifyOptions { seed: cfg.seed, sinkhorn: cfg.sinkhorn(), corrupt_cost: *inject_cost_corruption };
            let report = run_suite(&opts);
            fs::create_dir_all(&cfg.out)?;
            write_file(&cfg.out.join(EPS_SWEEP_FILE), &report.eps_sweep_csv)?;
            write!(stdout, "{}", report.summary())?;
            if report.failures() > 0 {
                return Err(CliError::Invariant(format!("{} check(s) failed", report.failures())));
            }
        }
        Command::DumpPlan { data, heads, sample, branch } => {
            let dataset = Dataset::open(&data_dir(&cfg, data))?;
            let heads = open_heads(&cfg, heads)?;
            let result = process_sample(&dataset, &heads, &settings(&cfg, 1), *sample)
                .map_err(|e| e.context(format!("sample {sample}")))?;
            let plan = match branch {
                Branch::Image => &result.image_plan,
                Branch::Normal => &result.normal_plan,
            };
            let mut buf = Vec::new();
            write_plan_dump(&mut buf, plan, cfg.solver.epsilon)?;
            stdout.write_all(&buf)?;
        }
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = stdout.flush();
            eprintln!("otfuse: {e}");
            e.exit_code()
        }
    }
}
