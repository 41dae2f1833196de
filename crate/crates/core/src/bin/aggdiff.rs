use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use aggdiff::experiments::{self, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aggdiff",
    version,
    about = "Blob-method particle solver for aggregation-diffusion equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config or a named preset.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// `key.path=value`, repeatable; values parse as JSON.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List preset names and descriptions.
    ListPresets {
        /// Print the full JSON of each preset.
        #[arg(long)]
        json: bool,
    },
    /// Check a config and report every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, preset, overrides, out } => {
            let base = match (config, preset) {
                (Some(path), _) => ExperimentConfig::load(&path)?,
                (None, Some(name)) => experiments::preset(&name)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let cfg = base.with_overrides(&overrides)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let result = experiments::run(&cfg, Some(&dir))?;
            let s = &result.meta.summary;
            println!("{}: t = {}, wrote {}", cfg.name, s.final_time, dir.display());
            println!(
                "  E_eps = {}, max density = {}, max speed = {:.3e}, maxima = {}, phase = {}, steps = {}, remeshes = {}, {:.1}s",
                result.rows.last().map_or(f64::NAN, |r| r.energy),
                s.max_density,
                s.max_speed,
                s.maxima.len(),
                s.equilibrium.phase,
                result.meta.stats.steps,
                result.meta.stats.remeshes,
                result.meta.wall_time_s
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ListPresets { json } => {
            let all = experiments::list_presets();
            let mut out = std::io::stdout().lock();
            // a closed pipe (`| head`) is not an error
            if json {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&all)?);
            } else {
                for p in all {
                    let tag = if p.long { " [long]" } else { "" };
                    if writeln!(out, "{}{tag}\n    {}", p.name, p.description).is_err() {
                        break;
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problems = cfg.problems();
            if problems.is_empty() {
                println!("{}: ok", config.display());
                Ok(ExitCode::SUCCESS)
            } else {
                for p in &problems {
                    println!("{}: {p}", config.display());
                }
                Ok(ExitCode::from(2))
            }
        }
    }
}
