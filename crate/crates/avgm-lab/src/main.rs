use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use avgm_lab::commands::{self, Probe};
use avgm_lab::config::RunConfig;
use avgm_lab::error::{LabError, Result};
use avgm_lab::rundir::{fmt_f64, run_root};

#[derive(Parser)]
#[command(
    name = "avgm-lab",
    version,
    about = "Cooperative multi-agent RL lab: train and evaluate AVGM and monotonic baselines, run analytic oracle suites and generate interpretability reports"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run from a config file into a run directory.
    Train {
        /// Flat key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Method override: avgm, iql, vdn or qmix.
        #[arg(long)]
        method: Option<String>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Config overrides, repeatable: --set key=value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run-directory root (default: $AVGM_RUN_ROOT or ./runs).
        #[arg(long)]
        out_root: Option<PathBuf>,
    },
    /// Greedy evaluation of a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        /// Evaluate with a different number of agents (zero-shot transfer).
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also export one trace CSV per episode into --out.
        #[arg(long)]
        traces: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic and brute-force oracle suites.
    Oracle {
        #[command(subcommand)]
        suite: OracleCmd,
    },
    /// Interpretability reports over trained checkpoints.
    Report {
        /// marginal, categories or variance.
        #[arg(long)]
        probe: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run directory with checkpoints (variance probe).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Failure-region sweep CSV over an (R, P, p_l) grid.
    Sweep {
        /// Cooperation reward grid: value or start:end:step.
        #[arg(long = "R")]
        r: String,
        /// Penalty grid.
        #[arg(long = "P")]
        p: String,
        /// Lazy-action probability grid.
        #[arg(long)]
        pl: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Randomized argmax-consistency and reward-conservation suite.
    Theorem1 {
        #[arg(long, default_value_t = 100)]
        games: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Failure-region sweep (same output as the sweep subcommand).
    FailureRegion {
        #[arg(long = "R")]
        r: String,
        #[arg(long = "P")]
        p: String,
        #[arg(long)]
        pl: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Converged context-blind values on the lifting payoff.
    AveragedQ {
        #[arg(long = "R")]
        r: f64,
        #[arg(long = "P")]
        p: f64,
        #[arg(long)]
        pl: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| LabError::usage(format!("--set expects key=value, got '{kv}'")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            method,
            seed,
            set,
            out_root,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| LabError::usage(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = RunConfig::parse(&text)?;
            let mut overrides = parse_overrides(&set)?;
            if let Some(m) = method {
                overrides.push(("run.method".into(), m));
            }
            if let Some(s) = seed {
                overrides.push(("run.seed".into(), s.to_string()));
            }
            cfg.apply_overrides(&overrides)?;
            let root = run_root(out_root.as_deref());
            let (dir, summary) = commands::cmd_train(&cfg, &root)?;
            println!("{}", dir.display());
            println!(
                "env_steps={} episodes={} final_return_per_agent={}",
                summary.env_steps,
                summary.episodes,
                fmt_f64(summary.final_eval.mean_return_per_agent)
            );
            Ok(())
        }
        Cmd::Eval {
            checkpoint,
            episodes,
            agents,
            seed,
            traces,
            out,
        } => {
            let trace_dir = if traces {
                Some(out.clone().unwrap_or_else(|| {
                    checkpoint
                        .parent()
                        .map(|p| p.join("traces"))
                        .unwrap_or_else(|| PathBuf::from("traces"))
                }))
            } else {
                None
            };
            let outcome =
                commands::cmd_eval(&checkpoint, episodes, agents, seed, trace_dir.as_deref())?;
            print!("{}", commands::format_eval(&outcome.row));
            for f in &outcome.trace_files {
                println!("trace {}", f.display());
            }
            Ok(())
        }
        Cmd::Oracle { suite } => match suite {
            OracleCmd::Theorem1 { games, seed, out } => {
                let outcome = commands::cmd_oracle_theorem1(games, seed)?;
                let path = out.unwrap_or_else(|| PathBuf::from("theorem1.csv"));
                outcome.doc.write(&path)?;
                println!("{}/{} pass", outcome.passes, outcome.games);
                println!(
                    "conservation: {} joint actions exact",
                    outcome.conservation_checks
                );
                println!("report {}", path.display());
                if outcome.passes != outcome.games {
                    return Err(LabError::validation(format!(
                        "theorem suite failed: {}",
                        outcome.first_witness.unwrap_or_default()
                    )));
                }
                Ok(())
            }
            OracleCmd::FailureRegion { r, p, pl, out } => {
                let doc = commands::cmd_sweep(&r, &p, &pl)?;
                let path = out.unwrap_or_else(|| PathBuf::from("failure_region.csv"));
                doc.write(&path)?;
                println!("sweep {}", path.display());
                Ok(())
            }
            OracleCmd::AveragedQ { r, p, pl, out } => {
                let outcome = commands::cmd_oracle_averaged_q(r, p, pl)?;
                println!("Q(C) = {}", fmt_f64(outcome.q[0]));
                println!("Q(L) = {}", fmt_f64(outcome.q[1]));
                println!("fails_monotonic = {}", outcome.fails);
                if let Some(path) = out {
                    outcome.doc.write(&path)?;
                    println!("report {}", path.display());
                }
                Ok(())
            }
        },
        Cmd::Report {
            probe,
            checkpoint,
            run_dir,
            out,
        } => {
            let probe = Probe::parse(&probe)?;
            let doc = commands::cmd_report(probe, checkpoint.as_deref(), run_dir.as_deref())?;
            let path = out.unwrap_or_else(|| PathBuf::from("report.csv"));
            doc.write(&path)?;
            println!("report {}", path.display());
            Ok(())
        }
        Cmd::Sweep { r, p, pl, out } => {
            let doc = commands::cmd_sweep(&r, &p, &pl)?;
            let path = out.unwrap_or_else(|| PathBuf::from("sweep.csv"));
            doc.write(&path)?;
            println!("sweep {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}
