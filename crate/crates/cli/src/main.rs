//! Command-line front end: `onmf learn`, `onmf predict`, `onmf reconstruct`.
//!
//! All three commands read a TOML run configuration and write their outputs
//! into the configured output directory. Exit codes: 0 on success, 1 for
//! usage or configuration errors, 2 for runtime failures. Logging goes to
//! stderr and is controlled by `ONMF_LOG_LEVEL` (error, warn, info, debug).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use onmf_core::checkpoint::ModelCheckpoint;
use onmf_core::config::RunConfig;
use onmf_core::data::{load_case_csv, preprocess, to_daily_new};
use onmf_core::export;
use onmf_core::learner::OnlineLearner;
use onmf_core::predictor::{reconstruct, run_scheme, run_scheme_with_init};
use onmf_core::tensor::TimeSeriesPanel;
use onmf_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "onmf",
    version,
    about = "Dictionary learning and forecasting for case-count time series via Hankel-tensor online NMF"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a dictionary (minibatch init + online pass) and write the model
    /// checkpoint and importance table.
    Learn(CommonArgs),
    /// Run the full prediction scheme and write the prediction table.
    Predict(PredictArgs),
    /// Reconstruct the observed panel from a checkpoint.
    Reconstruct(ReconstructArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the RNG seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the preprocessed panel as tidy CSV (panel.csv).
    #[arg(long)]
    export_panel: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Start from a saved checkpoint instead of minibatch initialization;
    /// the run is then deterministic and all trials coincide.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Override the number of ensemble trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Restrict initialization to the first window so predictions never see
    /// data from their own future.
    #[arg(long)]
    strict_causal: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Saved checkpoint holding the dictionary to reconstruct with.
    #[arg(long)]
    checkpoint: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ONMF_LOG_LEVEL", "info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Learn(args) => cmd_learn(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for usage/config/input errors, 2 for runtime failures.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::WindowTooLong { .. }
        | Error::ZeroWindow
        | Error::NegativeEntry { .. }
        | Error::DimensionMismatch { .. }
        | Error::EmptyPanel(_)
        | Error::TimeIndexOutOfRange { .. }
        | Error::InvalidLabels(_)
        | Error::CsvParse { .. }
        | Error::EmptyTable
        | Error::DateRangeMismatch(_)
        | Error::MissingCountry(_)
        | Error::InvalidConfig { .. }
        | Error::InvalidCheckpoint(_)
        | Error::Json(_)
        | Error::Toml(_) => 1,
        Error::NonFiniteEntry { .. }
        | Error::NonFinitePrediction { .. }
        | Error::AllTrialsFailed { .. }
        | Error::Io { .. } => 2,
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.learner.seed = seed;
    }
    if let Some(output) = &args.output {
        config.output.directory = output.clone();
    }
    config.validate_values()?;
    Ok(config)
}

/// Load the requested case tables, convert to daily new cases, assemble the
/// panel, and apply the preprocessing transforms.
fn load_panel(config: &RunConfig) -> Result<TimeSeriesPanel> {
    config.validate_paths()?;
    let mut series = BTreeMap::new();
    let mut range = None;
    for &case_type in &config.case_types {
        let path = config.input_path(case_type)?;
        let table = load_case_csv(path, case_type)?;
        let start = table.dates[0];
        match range {
            None => range = Some((start, table.dates.len())),
            Some((t0, len)) => {
                if start != t0 || table.dates.len() != len {
                    return Err(Error::DateRangeMismatch(format!(
                        "{} covers {start} + {} days, expected {t0} + {len} days",
                        path.display(),
                        table.dates.len(),
                    )));
                }
            }
        }
        let (daily, clamp) = to_daily_new(&table);
        if clamp.clamped_cells > 0 {
            log::info!(
                "{case_type}: clamped {} negative daily differences (total mass {})",
                clamp.clamped_cells,
                clamp.clamped_mass
            );
        }
        for country in &config.countries {
            let values = daily
                .get(country)
                .ok_or_else(|| Error::MissingCountry(country.clone()))?;
            series.insert((case_type, country.clone()), values.clone());
        }
    }
    let (t0, _) = range.expect("at least one case type is validated");
    let raw = onmf_core::data::assemble_panel(&series, &config.countries, &config.case_types, t0)?;
    let panel = preprocess(&raw, &config.transform)?;
    log::info!(
        "panel: {} series x {} days starting {}",
        panel.num_series(),
        panel.num_days(),
        panel.t0()
    );
    Ok(panel)
}

fn ensure_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn export_panel_if_requested(
    args: &CommonArgs,
    config: &RunConfig,
    panel: &TimeSeriesPanel,
) -> Result<()> {
    if args.export_panel {
        let path = config.output.directory.join("panel.csv");
        export::write_panel_csv(&path, panel)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_learn(args: CommonArgs) -> Result<()> {
    let config = load_config(&args)?;
    let panel = load_panel(&config)?;
    ensure_output_dir(&config.output.directory)?;
    export_panel_if_requested(&args, &config, &panel)?;

    let mut learner = OnlineLearner::minibatch(&panel, &config.learner, &config.solver)?;
    learner.set_beta(config.scheme.online_beta);
    let k = config.learner.segment_length;
    for t in (k - 1)..panel.num_days() {
        let report = learner.online_step(&panel, t)?;
        log::info!("online step t={t}: coding objective {:.6e}", report.objective);
    }
    if config.mode.sort_atoms {
        learner.sort_by_importance()?;
    }

    let checkpoint_path = config.output.directory.join("model_checkpoint.json");
    ModelCheckpoint::from_learner(&learner).save(&checkpoint_path)?;
    let importance_path = config.output.directory.join("importance.csv");
    export::write_importance_csv(&importance_path, learner.dictionary())?;
    log::info!("wrote {} and {}", checkpoint_path.display(), importance_path.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(trials) = args.trials {
        config.scheme.trials = trials;
    }
    if args.strict_causal {
        config.mode.strict_causal = true;
    }
    config.validate_values()?;

    let panel = load_panel(&config)?;
    ensure_output_dir(&config.output.directory)?;
    export_panel_if_requested(&args.common, &config, &panel)?;
    let scheme = config.scheme_config();

    let output = match &args.checkpoint {
        Some(path) => {
            let (dict, agg, _) = ModelCheckpoint::load(path)?.into_state()?;
            if dict.num_rows() != panel.num_series() {
                return Err(Error::DimensionMismatch {
                    what: "checkpoint vs panel",
                    expected: format!("{} rows", panel.num_series()),
                    actual: format!("{} rows", dict.num_rows()),
                });
            }
            if dict.window() != config.learner.segment_length
                || dict.num_atoms() != config.learner.num_atoms
            {
                return Err(Error::DimensionMismatch {
                    what: "checkpoint vs config",
                    expected: format!(
                        "window {} with {} atoms",
                        config.learner.segment_length, config.learner.num_atoms
                    ),
                    actual: format!("window {} with {} atoms", dict.window(), dict.num_atoms()),
                });
            }
            run_scheme_with_init(&panel, &scheme, &config.solver, Some((&dict, &agg)))?
        }
        None => run_scheme(&panel, &scheme, &config.solver)?,
    };

    let path = config.output.directory.join("predictions.csv");
    export::write_prediction_csv(&path, &panel, &output.ensemble, &config.transform)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let panel = load_panel(&config)?;
    ensure_output_dir(&config.output.directory)?;
    export_panel_if_requested(&args.common, &config, &panel)?;

    let (dict, _, _) = ModelCheckpoint::load(&args.checkpoint)?.into_state()?;
    if dict.num_rows() != panel.num_series() {
        return Err(Error::DimensionMismatch {
            what: "checkpoint vs panel",
            expected: format!("{} rows", panel.num_series()),
            actual: format!("{} rows", dict.num_rows()),
        });
    }
    let opts = config.solver.resolve(&panel)?;
    let recon = reconstruct(&dict, &panel, config.learner.lambda, &opts.coding)?;

    let csv_path = config.output.directory.join("reconstruction.csv");
    export::write_reconstruction_csv(&csv_path, &panel, recon.view(), &config.transform)?;
    let summary_path = config.output.directory.join("reconstruction_summary.csv");
    export::write_reconstruction_summary_csv(&summary_path, &panel, recon.view())?;
    log::info!("wrote {} and {}", csv_path.display(), summary_path.display());
    Ok(())
}
