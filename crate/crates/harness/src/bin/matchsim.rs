use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use matchsim::config::HarnessConfig;
use matchsim::io::write_rows;
use matchsim::prop1::run_prop1;
use matchsim::userdata::audit_match;
use matchsim::{emit_figure_data, match_user_data, run_scenario, CemChoice, Estimator, Figure, MatchOptions, Result};
use matchsim_core::{CemMode, CemOptions, WeightTotals};

#[derive(Parser)]
#[command(name = "matchsim", version, about = "Simulation harness for propensity-score and coarsened exact matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write replication, aggregate and balance CSVs.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Full-scale replication, pair and oracle settings.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Emit plot-ready series from a completed run directory.
    Figures {
        run_dir: PathBuf,
        #[arg(long)]
        which: Figure,
    },
    /// Match a `y,w,x1..xp` dataset.
    Match {
        csv: PathBuf,
        #[arg(long)]
        psm: bool,
        #[arg(long, default_value_t = 0.2)]
        caliper: f64,
        /// `auto`, `g3`, `k<K>` or `cutpoints`.
        #[arg(long)]
        cem: Option<String>,
        /// Cutpoint file for `--cem cutpoints` (CSV `variable,cutpoint`).
        cutpoints: Option<PathBuf>,
        #[arg(long, default_value = "weights")]
        mode: String,
        /// Comma-separated estimator labels.
        #[arg(long, default_value = "M(W),M(W,X)")]
        estimators: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Pre- and post-match balance of a dataset and its match file.
    Balance {
        csv: PathBuf,
        matches: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bias of subset-adjusted estimators after tight-caliper score matching.
    Prop1 {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Splits on commas outside parentheses, so `M(W),M(W,X)` gives two labels.
fn split_top_level(s: &str) -> Vec<&str> {
    let (mut parts, mut depth, mut start) = (Vec::new(), 0i32, 0);
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(s[start..].trim());
    parts.into_iter().filter(|p| !p.is_empty()).collect()
}

fn emit<R: serde::Serialize>(rows: &[R], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_rows(path, rows),
        None => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(std::io::stdout());
            for row in rows {
                w.serialize(row).map_err(|e| matchsim::HarnessError::Data(e.to_string()))?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            workers,
            full,
            out,
        } => {
            let manifest = run_scenario(&config, &out, workers, full)?;
            println!(
                "{}: {} replications, designs {}, config {} -> {}",
                manifest.scenario,
                manifest.replication_count,
                manifest.designs.join(","),
                &manifest.config_hash[..12],
                out.display()
            );
        }
        Command::Figures { run_dir, which } => {
            for path in emit_figure_data(&run_dir, which)? {
                println!("{}", path.display());
            }
        }
        Command::Match {
            csv,
            psm,
            caliper,
            cem,
            cutpoints,
            mode,
            estimators,
            out,
        } => {
            let cem = match cem.as_deref() {
                None => None,
                Some("cutpoints") => Some(CemChoice::Cutpoints(cutpoints.ok_or_else(|| {
                    matchsim::HarnessError::Config("--cem cutpoints needs a cutpoint file".into())
                })?)),
                Some(other) => Some(other.parse()?),
            };
            let mode = match mode.as_str() {
                "weights" => CemMode::Weights,
                "one_to_one" => CemMode::OneToOne,
                other => return Err(matchsim::HarnessError::Config(format!("unknown mode {other:?}"))),
            };
            let options = MatchOptions {
                psm: psm.then_some(caliper),
                cem,
                cem_options: CemOptions {
                    mode,
                    totals: WeightTotals::Retained,
                },
                estimators: split_top_level(&estimators)
                    .into_iter()
                    .map(str::parse)
                    .collect::<Result<Vec<Estimator>>>()?,
            };
            std::fs::create_dir_all(&out).map_err(|e| matchsim::HarnessError::Io {
                path: out.clone(),
                source: e,
            })?;
            for path in match_user_data(&csv, &options, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Balance { csv, matches, out } => emit(&audit_match(&csv, &matches)?, out.as_deref())?,
        Command::Prop1 { config, out } => emit(&run_prop1(&HarnessConfig::load(&config)?)?, out.as_deref())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
