//! `spoofgraph`: ingest fingerprints, train the detectors and run the
//! spoofing-detection experiments from one JSON config.
//!
//! Any `--section.key=value` argument overrides the matching config field.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 missing
//! prerequisite, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spoofgraph_core::config::RunConfig;
use spoofgraph_core::pipeline::{self, Experiment};
use spoofgraph_core::survey::{generate_survey, write_survey_csv, SurveyConfig};
use spoofgraph_core::trajectory::Hypothesis;
use spoofgraph_core::Error;

#[derive(Parser, Debug)]
#[command(name = "spoofgraph", version, about = "Graph-based RSS spoofing detection experiments")]
struct Cli {
    /// Worker threads for data generation and evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic multi-floor fingerprint survey CSV.
    GenSurvey {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SurveyConfig::default().seed)]
        seed: u64,
    },
    /// Load and split the dataset; write the split audit and a summary.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the position-change detector or the graph network.
    Train {
        stage: Stage,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment and write its CSVs and manifest.
    Evaluate {
        experiment: ExperimentArg,
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump diagnostic artefacts.
    Inspect {
        #[command(subcommand)]
        what: Inspect,
    },
}

#[derive(Subcommand, Debug)]
enum Inspect {
    /// Print the edge list of the detection graph of one test scenario.
    Graph {
        scenario_seed: u64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = HypothesisArg::H0)]
        hypothesis: HypothesisArg,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Stage {
    Pcd,
    Gnn,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExperimentArg {
    Roc,
    Speed,
    Frames,
    Samples,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum HypothesisArg {
    H0,
    H1,
}

/// Splits `--a.b=c` overrides from the arguments clap understands.
fn split_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    let (overrides, rest): (Vec<String>, Vec<String>) = args.partition(|a| {
        a.strip_prefix("--")
            .and_then(|rest| rest.split_once('='))
            .is_some_and(|(key, _)| key.contains('.'))
    });
    (rest, overrides)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingPrerequisite(_) => 3,
        Error::Numerical(_) => 4,
        _ => 2,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    // A closed pipe (e.g. `| head`) is not an error for a reporting command.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn run(cli: Cli, overrides: &[String]) -> Result<(), Error> {
    let load = |path: &PathBuf| RunConfig::load(path, overrides);
    match cli.command {
        Command::GenSurvey { out, seed } => {
            let rows = generate_survey(&SurveyConfig {
                seed,
                ..SurveyConfig::default()
            })?;
            let file = std::fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
            write_survey_csv(&rows, std::io::BufWriter::new(file))?;
            eprintln!("wrote {} measurements to {}", rows.len(), out.display());
        }
        Command::Ingest { config } => {
            let summary = pipeline::cmd_ingest(&load(&config)?)?;
            eprintln!("retained {} locations", summary.num_locations);
            print_json(&summary)?;
        }
        Command::Train { stage: Stage::Pcd, config } => {
            let report = pipeline::cmd_train_pcd(&load(&config)?)?;
            eprintln!(
                "validation accuracy {:.4} (gate {:.2}): {}",
                report.val_accuracy,
                report.accuracy_gate,
                if report.gate_passed { "PASS" } else { "FAIL" }
            );
            print_json(&report)?;
        }
        Command::Train { stage: Stage::Gnn, config } => {
            let report = pipeline::cmd_train_gnn(&load(&config)?)?;
            eprintln!("validation AUC {:.4}", report.val_auc);
            print_json(&report)?;
        }
        Command::Evaluate { experiment, config } => {
            let experiment = match experiment {
                ExperimentArg::Roc => Experiment::Roc,
                ExperimentArg::Speed => Experiment::Speed,
                ExperimentArg::Frames => Experiment::Frames,
                ExperimentArg::Samples => Experiment::Samples,
            };
            let outcome = pipeline::cmd_evaluate(&load(&config)?, experiment)?;
            for p in &outcome.outputs {
                eprintln!("wrote {}", p.display());
            }
            eprintln!("manifest {}", outcome.manifest.display());
            if let Some(table) = &outcome.sweep {
                for (value, reason) in &table.skipped {
                    eprintln!("skipped {}={value}: {reason}", table.axis);
                }
                print_json(&table.rows)?;
            } else {
                print_json(&outcome.roc)?;
            }
        }
        Command::Inspect {
            what: Inspect::Graph {
                scenario_seed,
                config,
                hypothesis,
            },
        } => {
            let h = match hypothesis {
                HypothesisArg::H0 => Hypothesis::H0,
                HypothesisArg::H1 => Hypothesis::H1,
            };
            let edges = pipeline::cmd_inspect_graph(&load(&config)?, scenario_seed, h)?;
            use std::io::Write;
            let _ = write!(std::io::stdout().lock(), "{edges}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_split_from_clap_arguments() {
        let args = ["spoofgraph", "--workers", "2", "train", "pcd", "--config=c.json", "--pcd.train.max_epochs=3", "--seed=4"];
        let (rest, overrides) = split_overrides(args.iter().map(|s| s.to_string()));
        assert_eq!(overrides, vec!["--pcd.train.max_epochs=3"]);
        assert_eq!(rest, vec!["spoofgraph", "--workers", "2", "train", "pcd", "--config=c.json", "--seed=4"]);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::MissingPrerequisite("pcd.json".into())), 3);
        assert_eq!(exit_code(&Error::Numerical("nan".into())), 4);
        assert_eq!(exit_code(&Error::Config("bad".into())), 2);
    }
}
