//! `poselift` — batch experiments for structured 3D-pose regression:
//! synthetic data generation, staged training, evaluation reports, and
//! auto-encoder layout sweeps.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors
//! (including stages invoked out of order), 2 for runtime or training
//! failures (a sweep with any failed value also exits 2).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use poselift_cli::config;
use poselift_core::error::{Error, Result};
use poselift_core::pipeline::{self, PipelineConfig, TrainStage};

/// Environment variable supplying the default output root when `--out`
/// is not passed.
const OUT_ENV: &str = "POSELIFT_OUT";

#[derive(Parser)]
#[command(
    name = "poselift",
    version,
    about = "Structured 3D-pose regression experiments: synthetic data, \
             staged training, evaluation, sweeps."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file; omitted keys use the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root for all artifacts (default: $POSELIFT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override: reseeds data generation and every trainer.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset under <out>/dataset.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        /// Regenerate even if a dataset already exists there.
        #[arg(long)]
        force: bool,
    },
    /// Run one training stage against the generated dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Which stage: ae, latent, finetune, direct, pca, or extrafc.
        #[arg(long)]
        stage: String,
    },
    /// Evaluate trained models on the test split and write the report.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Methods to evaluate (default: every one whose models exist).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Run the full pipeline once per auto-encoder layout and tabulate.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep axis; only `ae-layers` is supported.
        #[arg(long)]
        axis: String,
        /// One layout per occurrence, widths comma-separated:
        /// --values 2000 --values 300,300
        #[arg(long = "values", required = true)]
        values: Vec<String>,
    },
}

fn resolve_config(common: &CommonArgs) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => config::load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    Ok(config)
}

fn resolve_out(common: &CommonArgs) -> Result<PathBuf> {
    if let Some(path) = &common.out {
        return Ok(path.clone());
    }
    match std::env::var_os(OUT_ENV) {
        Some(value) if !value.is_empty() => Ok(PathBuf::from(value)),
        _ => Err(Error::Config(format!(
            "no output directory: pass --out or set {OUT_ENV}"
        ))),
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData { common, force } => {
            let config = resolve_config(&common)?;
            let out = resolve_out(&common)?;
            let dataset = pipeline::stage_gen_data(&config, &out, force)?;
            println!(
                "wrote dataset ({} train / {} test) under {}",
                dataset.train.len(),
                dataset.test.len(),
                out.join("dataset").display()
            );
            Ok(0)
        }
        Command::Train { common, stage } => {
            let stage = TrainStage::parse(&stage)?;
            let config = resolve_config(&common)?;
            let out = resolve_out(&common)?;
            let written = pipeline::stage_train(&config, &out, stage)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::Eval { common, models } => {
            let config = resolve_config(&common)?;
            let out = resolve_out(&common)?;
            let report = pipeline::stage_eval(&config, &out, &models)?;
            for row in report.rows.iter().filter(|row| row.action == "all") {
                println!(
                    "{}: test MPJPE {:.2} mm, limb-ratio error sums \
                     lower {:.2} / upper {:.2} / full {:.2}",
                    row.method, row.mpjpe_mm, row.lower_sum, row.upper_sum, row.full_sum
                );
            }
            println!("report written under {}", out.join("report").display());
            Ok(0)
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            if axis != "ae-layers" {
                return Err(Error::Config(format!(
                    "unknown sweep axis `{axis}`; only ae-layers is supported"
                )));
            }
            let layouts = values
                .iter()
                .map(|value| config::parse_usize_list("values", value))
                .collect::<Result<Vec<_>>>()?;
            let config = resolve_config(&common)?;
            let out = resolve_out(&common)?;
            let rows = pipeline::run_sweep(&config, &out, &layouts)?;
            let mut failed = 0usize;
            for row in &rows {
                let label = pipeline::sweep_label(&row.layers);
                match (&row.error, row.test_mpjpe_mm, row.full_ratio_sum) {
                    (None, Some(mpjpe), Some(full)) => {
                        println!("{label}: test MPJPE {mpjpe:.2} mm, full ratio sum {full:.4}");
                    }
                    (error, _, _) => {
                        failed += 1;
                        eprintln!(
                            "{label}: failed: {}",
                            error.as_deref().unwrap_or("run produced no metrics")
                        );
                    }
                }
            }
            println!("wrote {}", out.join("sweep.csv").display());
            if failed > 0 {
                eprintln!("{failed} of {} sweep runs failed", rows.len());
                Ok(2)
            } else {
                Ok(0)
            }
        }
    }
}

/// Usage and configuration problems exit 1; failures inside a running
/// stage exit 2.
fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Parameter { .. } | Error::MissingStage { .. } => 1,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version are successful outcomes; any other
            // parse failure is a usage error.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match execute(cli) {
        Ok(code) => std::process::exit(code),
        Err(error) => {
            eprintln!("error: {error}");
            std::process::exit(exit_code(&error));
        }
    }
}
