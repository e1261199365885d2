use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use dnm_cli::config::{echo, parse_formats, resolve, ConfigSource, Experiment};
use dnm_cli::output::{emit_results, FAILURE_MANIFEST};
use dnm_cli::run::execute;

/// Exit status when some grid points failed.
const EXIT_POINTS_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "dnm",
    version,
    about = "Non-Markovianity of a lossy cavity coupled to driven qubits",
    long_about = "Runs one experiment per subcommand and writes CSV tables, a JSON summary and SVG plots.\n\
                  Units: hbar = omega_r = 1; times in 1/omega_r, frequencies and rates in omega_r.\n\
                  Run `dnm <SUBCOMMAND> --help` to see every config key with its default."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file (see docs/config.md).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `g=0.05`, `integration.dt=0.005`,
    /// `sweep.axes=[...]`. Repeatable; applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Output directory [default: results].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads [default: all hardware threads].
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Comma-separated subset of csv,json,svg [default: all].
    #[arg(long, global = true, value_name = "LIST")]
    formats: Option<String>,

    /// Large grids instead of the quick defaults.
    #[arg(long, global = true)]
    full_scale: bool,

    /// Print the resolved config and exit without running.
    #[arg(long, global = true)]
    print_config: bool,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One evolution with all cavity observables.
    Simulate,
    /// DnM over a grid of one or two parameters.
    DnmMap,
    /// DnM against the number of qubits with power-law fits.
    Scaling,
    /// Minimum and maximum DnM over the qubit-driving grid.
    Extremal,
    /// Piecewise schedule of drive parameters.
    Switch,
    /// Effective time-dependent decay-rate fits.
    FitDecay,
    /// Driven cavity input/output loop.
    Memristor,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Simulate => Experiment::Simulate,
            Command::DnmMap => Experiment::DnmMap,
            Command::Scaling => Experiment::Scaling,
            Command::Extremal => Experiment::Extremal,
            Command::Switch => Experiment::Switch,
            Command::FitDecay => Experiment::FitDecay,
            Command::Memristor => Experiment::Memristor,
        }
    }
}

fn command_with_defaults() -> clap::Command {
    let mut cmd = Cli::command();
    for e in Experiment::ALL {
        let defaults = resolve(e, &ConfigSource::default()).expect("defaults resolve");
        let text = format!("Config keys and defaults:\n\n{}", echo(&defaults));
        cmd = cmd.mut_subcommand(e.name(), |s| s.after_long_help(text));
    }
    cmd
}

fn main() -> ExitCode {
    let cli = match Cli::from_arg_matches(&command_with_defaults().get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let experiment = cli.command.experiment();
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: reading {}: {e}", p.display());
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => None,
    };
    let name = cli.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let source = ConfigSource {
        file: text.as_deref().map(|t| (name.as_str(), t)),
        sets: &cli.sets,
        full_scale: cli.full_scale,
    };
    let mut config = match resolve(experiment, &source) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(dir) = cli.out {
        config.output.dir = dir;
    }
    if let Some(f) = cli.formats {
        match parse_formats(&f) {
            Ok(f) => config.output.formats = f,
            Err(e) => {
                eprintln!("error: --formats: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    if config.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    if cli.print_config {
        print!("{}", echo(&config));
        return ExitCode::SUCCESS;
    }

    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let result = match execute(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let written = match emit_results(&result, &config, &timestamp) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    println!("{}", serde_json::to_string_pretty(&result.summary).unwrap_or_default());
    for p in &written {
        println!("wrote {}", p.display());
    }
    if result.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "{} point(s) failed; see {}",
            result.failures.len(),
            config.output.dir.join(FAILURE_MANIFEST).display()
        );
        ExitCode::from(EXIT_POINTS_FAILED)
    }
}
