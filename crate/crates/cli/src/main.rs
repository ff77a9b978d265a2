use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aoi_cli::admission::{self, AdmitConfig};
use aoi_cli::presets::{self, PRESETS};
use aoi_cli::runner::{run_scenario, threads_from_env, write_csv};
use aoi_cli::validate::{validate_indices, IndexGrid};
use aoi_cli::{CliError, Result, ScenarioConfig, EXIT_OK, EXIT_VALIDATION};
use clap::{Parser, Subcommand, ValueEnum};

/// Age-of-information scheduling experiments.
#[derive(Debug, Parser)]
#[command(name = "aoi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file or a bundled preset and write CSV rows.
    Run {
        /// Scenario TOML file.
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Name of a bundled scenario (see `list-presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Override the number of slots per run.
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output path; `-` writes to standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare closed-form indices with the numeric flip charge.
    ValidateIndices {
        /// Comma-separated arrival rates.
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8, 1.0])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        max_age: u64,
        #[arg(long, default_value_t = 10)]
        max_gap: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Admission control for terminals with AoI deadlines.
    Admit {
        /// Deadline TOML file.
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List the bundled scenarios.
    ListPresets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn io_err(path: &str) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: PathBuf::from(path),
        source,
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run {
            config,
            preset,
            horizon,
            replications,
            seed,
            output,
        } => {
            let mut cfg = match (config, preset) {
                (Some(path), _) => ScenarioConfig::load(&path)?,
                (None, Some(name)) => presets::preset(&name)?,
                (None, None) => return Err(CliError::config("give a config file or --preset")),
            };
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(r) = replications {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = output {
                cfg.output = (o.as_os_str() != "-").then_some(o);
            }
            let rows = run_scenario(&cfg, threads_from_env()?)?;
            match &cfg.output {
                Some(path) => {
                    let file = File::create(path).map_err(|source| CliError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    write_csv(&rows, BufWriter::new(file))?;
                }
                None => write_csv(&rows, io::stdout().lock())?,
            }
            Ok(EXIT_OK)
        }
        Command::ValidateIndices {
            lambdas,
            max_age,
            max_gap,
            tolerance,
        } => {
            let grid = IndexGrid {
                lambdas,
                max_age,
                max_gap,
                tolerance,
            };
            let checks = validate_indices(&grid)?;
            let mut out = io::stdout().lock();
            writeln!(out, "lambda,a,d,index,flip,lower,upper,status")
                .map_err(io_err("<stdout>"))?;
            for c in &checks {
                writeln!(
                    out,
                    "{},{},{},{},{:.8},{},{},{}",
                    c.lambda,
                    c.a,
                    c.d,
                    c.index,
                    c.flip,
                    c.lower,
                    c.upper,
                    if c.pass { "pass" } else { "FAIL" }
                )
                .map_err(io_err("<stdout>"))?;
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            eprintln!("{} states checked, {failed} failed", checks.len());
            Ok(if failed == 0 {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            })
        }
        Command::Admit { config, format } => {
            let cfg = AdmitConfig::load(&config)?;
            let outcome = admission::run_admission(&cfg)?;
            let out = io::stdout().lock();
            match format {
                Format::Text => admission::write_text(&outcome, out).map_err(io_err("<stdout>"))?,
                Format::Csv => admission::write_csv(&outcome, out)?,
            }
            Ok(EXIT_OK)
        }
        Command::ListPresets => {
            let mut out = io::stdout().lock();
            for (name, _) in PRESETS {
                let cfg = presets::preset(name)?;
                writeln!(out, "{name:<10} {}", cfg.description).map_err(io_err("<stdout>"))?;
            }
            Ok(EXIT_OK)
        }
    }
}
