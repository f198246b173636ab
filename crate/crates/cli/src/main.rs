use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use resist_sim::acceptance;
use resist_sim::config::load_suite;
use resist_sim::suite::{check_graphs, run_suite, SuiteOptions};
use resist_sim::SimError;

/// Decentralized gradient descent under link attacks.
#[derive(Parser)]
#[command(name = "resist", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configuration of a suite file and write CSVs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds; replaces the suite's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Report filtered-graph connectivity for every run's graph.
    CheckGraph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run a built-in verification battery.
    Verify {
        #[arg(long, value_enum, default_value_t = Battery::Acceptance)]
        suite: Battery,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Battery {
    Acceptance,
}

fn base_dir(config: &std::path::Path) -> PathBuf {
    config.parent().map(PathBuf::from).unwrap_or_default()
}

fn run(cli: Cli) -> Result<ExitCode, SimError> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seeds,
            parallel,
        } => {
            let suite = load_suite(&config)?;
            let opts = SuiteOptions {
                out,
                seeds,
                parallel,
                base_dir: base_dir(&config),
            };
            let report = run_suite(&suite, &opts)?;
            println!(
                "wrote {} metric files and {}",
                report.metric_files.len(),
                report.summary.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckGraph { config, seeds } => {
            let suite = load_suite(&config)?;
            let checks = check_graphs(&suite, &base_dir(&config), seeds.as_deref())?;
            let mut ok = true;
            for c in &checks {
                let r = &c.report;
                println!(
                    "{}: seed {}, {} nodes, {} edges, tau = {}, {:?} check of {} filtered graphs: {}",
                    c.run,
                    c.seed,
                    c.nodes,
                    c.edges,
                    r.tau,
                    r.mode,
                    r.checked_count,
                    if r.all_pass { "pass" } else { "FAIL" }
                );
                if let Some(fg) = &r.counterexample {
                    println!("  counterexample removes {:?}", fg.removed);
                }
                ok &= r.all_pass;
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Verify {
            suite: Battery::Acceptance,
            only,
        } => {
            let results: Vec<_> = match only {
                Some(ids) => ids
                    .into_iter()
                    .map(|id| {
                        acceptance::run_criterion(id)
                            .ok_or_else(|| SimError::Config(format!("no criterion {id}")))
                            .inspect(|r| println!("{}", r.line()))
                    })
                    .collect::<Result<_, _>>()?,
                None => acceptance::run_all(|r| println!("{}", r.line())),
            };
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} passed, {failed} failed", results.len() - failed);
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
