use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbnma_cli::commands::{self, Layout, Outcome, PatientInput, PredictionModel};
use rbnma_cli::config::{Preset, ProjectConfig};
use rbnma_cli::error::{CliError, CliResult, EXIT_FAILURE};
use rbnma_cli::io::write_json;

#[derive(Parser)]
#[command(name = "rbnma", version, about = "Risk-based network meta-regression pipeline")]
struct Cli {
    /// Project configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides the config.
    #[arg(long, global = true, env = "RBNMA_ARTIFACTS")]
    artifacts: Option<PathBuf>,
    /// Worker threads for sampling.
    #[arg(long, global = true, env = "RBNMA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SeedArg {
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Prognostic model on the cohort.
    Stage1 {
        #[command(subcommand)]
        action: Stage1Action,
    },
    /// Recalibration of the prognostic model to the trials.
    Stage2 {
        #[command(subcommand)]
        action: Stage2Action,
    },
    /// Network meta-regression with baseline risk as effect modifier.
    Stage3 {
        #[command(subcommand)]
        action: Stage3Action,
    },
    /// Treatment-specific outcome probabilities for patients.
    Predict {
        #[arg(long)]
        context: Option<String>,
        /// CSV of patient covariates (optional `patient_id` column).
        #[arg(long, conflicts_with = "covariates")]
        input: Option<PathBuf>,
        /// One patient's covariates as a JSON object.
        #[arg(long)]
        covariates: Option<String>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Outcome probability against baseline risk, per treatment.
    Curve {
        #[arg(long)]
        context: Option<String>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Risk differences and odds ratios within baseline-risk strata.
    Strata {
        #[arg(long)]
        context: Option<String>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Simulated cohort and trial data plus a matching config.
    Simulate {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Parameter recovery over repeated simulations.
    Recover {
        #[arg(long)]
        replicates: Option<usize>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// HTTP prediction service.
    Serve {
        #[arg(long, env = "RBNMA_PORT", default_value_t = 8080)]
        port: u16,
        /// Serve the built-in null-effect model instead of artifacts.
        #[arg(long)]
        fixture: bool,
    },
}

#[derive(Subcommand)]
enum Stage1Action {
    Fit(SeedArg),
    /// Bootstrap optimism correction and calibration.
    Validate(SeedArg),
}

#[derive(Subcommand)]
enum Stage2Action {
    Recalibrate(SeedArg),
    /// Fits every configured method and ranks them.
    Compare(SeedArg),
}

#[derive(Subcommand)]
enum Stage3Action {
    Fit(SeedArg),
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PresetArg {
    Rrms,
    Basic,
}

fn load_config(cli: &Cli, seed: Option<u64>) -> CliResult<ProjectConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ProjectConfig::load(path)?,
        None => ProjectConfig::default(),
    };
    if let Some(dir) = &cli.artifacts {
        cfg.artifacts = dir.clone();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

fn run(cli: &Cli) -> CliResult<Outcome> {
    if let Some(n) = cli.threads {
        // ignore the error when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let needs_config = || -> CliResult<()> {
        if cli.config.is_none() {
            return Err(CliError::Usage("--config is required for this command".into()));
        }
        Ok(())
    };
    match &cli.command {
        Command::Stage1 { action } => {
            let (seed, validate) = match action {
                Stage1Action::Fit(s) => (s.seed, false),
                Stage1Action::Validate(s) => (s.seed, true),
            };
            let cfg = load_config(cli, seed)?;
            needs_config()?;
            if validate {
                commands::stage1_validate(&cfg)
            } else {
                commands::stage1_fit(&cfg)
            }
        }
        Command::Stage2 { action } => {
            let (seed, compare) = match action {
                Stage2Action::Recalibrate(s) => (s.seed, false),
                Stage2Action::Compare(s) => (s.seed, true),
            };
            let cfg = load_config(cli, seed)?;
            needs_config()?;
            if compare {
                commands::stage2_compare(&cfg)
            } else {
                commands::stage2_recalibrate(&cfg)
            }
        }
        Command::Stage3 { action: Stage3Action::Fit(s) } => {
            let cfg = load_config(cli, s.seed)?;
            needs_config()?;
            commands::stage3_fit(&cfg)
        }
        Command::Predict { context, input, covariates, seed } => {
            let cfg = load_config(cli, seed.seed)?;
            let input = match (input, covariates) {
                (Some(p), _) => PatientInput::File(p.clone()),
                (None, Some(json)) => PatientInput::Json(json.clone()),
                (None, None) => return Err(CliError::Usage("give --input or --covariates".into())),
            };
            commands::predict_cmd(&cfg, context.as_deref(), &input)
        }
        Command::Curve { context, seed } => commands::curve_cmd(&load_config(cli, seed.seed)?, context.as_deref()),
        Command::Strata { context, seed } => commands::strata_cmd(&load_config(cli, seed.seed)?, context.as_deref()),
        Command::Simulate { out, preset, seed } => {
            let mut cfg = load_config(cli, seed.seed)?;
            if let Some(p) = preset {
                cfg.simulation.preset = match p {
                    PresetArg::Rrms => Preset::Rrms,
                    PresetArg::Basic => Preset::Basic,
                };
            }
            commands::simulate_cmd(&cfg, out)
        }
        Command::Recover { replicates, seed } => {
            let mut cfg = load_config(cli, seed.seed)?;
            if let Some(r) = replicates {
                cfg.recovery.replicates = *r;
            }
            commands::recover_cmd(&cfg)
        }
        Command::Serve { port, fixture } => {
            let cfg = load_config(cli, None)?;
            let fixture = *fixture;
            let layout = Layout::new(&cfg.artifacts);
            let options = cfg.prediction.options.clone();
            let grid = cfg.prediction.grid();
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(e.to_string()))?;
            runtime.block_on(rbnma_cli::service::serve(*port, move || {
                let model = if fixture { PredictionModel::null_fixture() } else { PredictionModel::load(&layout)? };
                Ok((model, options, grid))
            }))?;
            Ok(Outcome { dir: cfg.artifacts, warnings: Vec::new() })
        }
    }
}

fn artifact_root(cli: &Cli) -> PathBuf {
    if let Some(dir) = &cli.artifacts {
        return dir.clone();
    }
    cli.config
        .as_deref()
        .and_then(|p| ProjectConfig::load(p).ok())
        .map_or_else(|| Path::new("artifacts").to_path_buf(), |c| c.artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w:?}");
            }
            eprintln!("wrote {}", outcome.dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let doc = e.document();
            let path = artifact_root(&cli).join("error.json");
            if write_json(&path, &doc).is_err() {
                eprintln!("could not write {}", path.display());
                return ExitCode::from(EXIT_FAILURE as u8);
            }
            ExitCode::from(doc.exit_code as u8)
        }
    }
}
