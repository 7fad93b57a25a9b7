use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nvraman_cli::config::{apply_overrides, parse_table, Experiment, RunConfig};
use nvraman_cli::report::emit_fit_report;
use nvraman_cli::run::{default_output, run, write_outputs, RunOutput};
use nvraman_cli::{presets, CliError};
use nvraman_core::FitModel;

/// Spin dynamics of an optically driven Lambda system.
#[derive(Parser)]
#[command(name = "nvraman", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Populations against the duration of a square pulse pair.
    Rabi(RunArgs),
    /// Populations against the delay between two ramped pulses.
    Stirap(RunArgs),
    /// Ramsey fringes against the free evolution time.
    Ramsey(RunArgs),
    /// Populations against the two-photon detuning after a fixed pulse pair.
    Cpt(RunArgs),
    /// Fitted Rabi period against one-photon detuning and intensity.
    Period(RunArgs),
    /// Rabi scan plus a transfer fidelity estimate.
    Fidelity(RunArgs),
    /// Fit a model to the pop_g2 column of a scan CSV.
    Fit(FitArgs),
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(short, long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration, see `nvraman presets`.
    #[arg(short, long)]
    preset: Option<String>,
    /// Override a key, e.g. `--set physics.decay=false`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// CSV path; a `.meta.toml` sidecar is written next to it.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads for ensemble evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// Scan CSV written by one of the experiment commands.
    csv: PathBuf,
    /// damped-cosine or gaussian-cosine.
    #[arg(short, long, default_value = "damped-cosine")]
    model: String,
    /// Report path, default `<csv stem>.fit.txt`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fitted curve path, default `<csv stem>.fit.csv`.
    #[arg(long)]
    curve: Option<PathBuf>,
}

fn load(experiment: Experiment, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut table = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            parse_table(&text)?
        }
        (None, Some(name)) => parse_table(presets::find(name)?.text)?,
        (None, None) => toml::Table::new(),
    };
    apply_overrides(&mut table, &args.set)?;
    if let Some(path) = &args.output {
        apply_overrides(&mut table, &[format!("output.path={:?}", path.display().to_string())])?;
    }
    RunConfig::from_table(&table, Some(experiment))
}

fn execute(experiment: Experiment, args: &RunArgs) -> Result<(), CliError> {
    if args.threads == Some(0) {
        return Err(CliError::Validation { key: "threads".into(), message: "must be >= 1".into() });
    }
    let cfg = load(experiment, args)?;
    let output = run(&cfg, args.threads)?;
    let csv = cfg.output.as_ref().map_or_else(|| default_output(&cfg), PathBuf::from);
    let written = write_outputs(&cfg, &output, &csv)?;
    if let RunOutput::Scan { fidelity: Some(f), .. } = output {
        println!("fidelity = {f}");
    }
    println!("wrote {} and {}", written.csv.display(), written.sidecar.display());
    Ok(())
}

fn fit(args: &FitArgs) -> Result<(), CliError> {
    let model = FitModel::from_name(&args.model).ok_or_else(|| CliError::Validation {
        key: "model".into(),
        message: format!("expected damped-cosine or gaussian-cosine, got {:?}", args.model),
    })?;
    let out = emit_fit_report(&args.csv, model, args.report.as_deref(), args.curve.as_deref())?;
    print!("{}", out.text);
    println!("wrote {} and {}", out.report.display(), out.curve.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rabi(a) => execute(Experiment::Rabi, a),
        Command::Stirap(a) => execute(Experiment::Stirap, a),
        Command::Ramsey(a) => execute(Experiment::Ramsey, a),
        Command::Cpt(a) => execute(Experiment::Cpt, a),
        Command::Period(a) => execute(Experiment::Period, a),
        Command::Fidelity(a) => execute(Experiment::Fidelity, a),
        Command::Fit(a) => fit(a),
        Command::Presets => {
            for p in presets::PRESETS {
                println!("{:<8} {}", p.name, p.summary());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
