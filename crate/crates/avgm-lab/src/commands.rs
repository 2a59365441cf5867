//! Implementations behind the CLI subcommands; also the programmatic
//! surface the acceptance suite drives.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use avgm_core::env::EnvDims;
use avgm_core::harness::{evaluate, rollout, train, EvalRow, RunSeed, TrainSummary};
use avgm_core::oracle::{
    averaged_q, fails_monotonic, random_game, sweep_failure_region, team_rewards, verify_theorem1,
    PayoffSpec,
};
use avgm_core::env::PayoffTensor;
use avgm_core::rng::{streams, Rng};

use crate::build;
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::report;
use crate::rundir::{fmt_f64, text_hash, trace_csv, CsvDoc, RunDirObserver};

/// Trains one run into `<root>/<method>_<scenario>_s<seed>/`.
pub fn cmd_train(cfg: &RunConfig, root: &Path) -> Result<(PathBuf, TrainSummary)> {
    let mut env = build::build_env(cfg)?;
    let dims = EnvDims::of(env.as_ref());
    let mut learner = build::build_learner(cfg, dims)?;
    let mut seed = RunSeed::new(cfg.seed);
    let mut observer = RunDirObserver::create(root, cfg)?;
    let summary = train(
        learner.as_mut(),
        env.as_mut(),
        &cfg.harness,
        &mut seed,
        &mut observer,
    )
    .map_err(LabError::from)?;
    observer.finish()?;
    Ok((observer.dir, summary))
}

pub struct EvalOutcome {
    pub row: EvalRow,
    pub trace_files: Vec<PathBuf>,
}

/// Greedy evaluation of a checkpoint, optionally with a different agent
/// count and per-episode trace export.
pub fn cmd_eval(
    ckpt_path: &Path,
    episodes: usize,
    agents: Option<usize>,
    seed: u64,
    traces_to: Option<&Path>,
) -> Result<EvalOutcome> {
    let ckpt = checkpoint::load_file(ckpt_path)?;
    let learner = checkpoint::restore_learner(&ckpt)?;
    let mut env = build::build_env_with_agents(&ckpt.config, agents)?;
    let mut eval_rng = Rng::derive(seed, streams::EVAL);
    let row = evaluate(learner.as_ref(), env.as_mut(), episodes, &mut eval_rng)
        .map_err(LabError::from)?;
    let mut trace_files = Vec::new();
    if let Some(dir) = traces_to {
        std::fs::create_dir_all(dir)?;
        let mut trace_rng = Rng::derive(seed, streams::EVAL);
        let mut greedy = Rng::new(0);
        for ep in 0..episodes {
            let ep_seed = trace_rng.next_u64();
            let mut steps = Vec::new();
            rollout(
                learner.as_ref(),
                env.as_mut(),
                ep_seed,
                0.0,
                &mut greedy,
                Some(&mut steps),
            )
            .map_err(LabError::from)?;
            let doc = trace_csv(&ckpt.config, env.num_agents(), &steps);
            let path = dir.join(format!("trace_ep{ep:03}.csv"));
            doc.write(&path)?;
            trace_files.push(path);
        }
    }
    Ok(EvalOutcome { row, trace_files })
}

pub struct TheoremOutcome {
    pub passes: usize,
    pub games: usize,
    pub conservation_checks: usize,
    pub doc: CsvDoc,
    pub first_witness: Option<String>,
}

/// Randomized brute-force suite: argmax consistency of the equal-share
/// decomposition plus exact reward conservation.
pub fn cmd_oracle_theorem1(games: usize, seed: u64) -> Result<TheoremOutcome> {
    let mut rng = Rng::derive(seed, 0x7E0);
    let hash = text_hash(&format!("theorem1 games={games} seed={seed}"));
    let mut doc = CsvDoc::with_hash(&hash, "game,agents,actions,term_size,pass,witness");
    let mut passes = 0;
    let mut first_witness = None;
    let mut conservation_checks = 0;
    for g in 0..games {
        let n = 2 + rng.below(2);
        let a = 2 + rng.below(3);
        let size = 2 + rng.below(n - 1);
        let game = random_game(n, a, size, &mut rng);
        let rep = verify_theorem1(&game).map_err(LabError::from)?;
        if rep.pass {
            passes += 1;
        }
        let witness = rep
            .witness
            .as_ref()
            .map(|(joint, agent, better)| format!("joint {joint:?} agent {agent} better {better}"))
            .unwrap_or_default();
        if !rep.pass && first_witness.is_none() {
            first_witness = Some(witness.clone());
        }
        doc.row(&[
            g.to_string(),
            n.to_string(),
            a.to_string(),
            size.to_string(),
            rep.pass.to_string(),
            witness,
        ]);
        // exact conservation on random joint actions of this game
        for _ in 0..10 {
            let joint: Vec<usize> = (0..n).map(|_| rng.below(a)).collect();
            let team = team_rewards(&game, &joint).map_err(LabError::from)?;
            let total: f64 = team.iter().sum();
            if total != game.total_reward(&joint) {
                return Err(LabError::validation(format!(
                    "reward conservation violated on game {g} at {joint:?}"
                )));
            }
            conservation_checks += 1;
        }
    }
    Ok(TheoremOutcome {
        passes,
        games,
        conservation_checks,
        doc,
        first_witness,
    })
}

/// Parses "a:b:step" (inclusive of b up to rounding) or a single number.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| LabError::usage(format!("'{s}' is not a number in grid '{spec}'")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![num(single)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step <= 0.0 || b < a {
                return Err(LabError::usage(format!(
                    "invalid grid '{spec}' (need start <= end and step > 0)"
                )));
            }
            let mut out = Vec::new();
            let mut k = 0u64;
            loop {
                let v = a + step * k as f64;
                if v > b + step * 1e-9 {
                    break;
                }
                out.push(v);
                k += 1;
            }
            Ok(out)
        }
        _ => Err(LabError::usage(format!(
            "grid '{spec}' must be a number or start:end:step"
        ))),
    }
}

/// Failure-region sweep CSV over the product grid.
pub fn cmd_sweep(r_spec: &str, p_spec: &str, pl_spec: &str) -> Result<CsvDoc> {
    let r = parse_grid(r_spec)?;
    let p = parse_grid(p_spec)?;
    let pl = parse_grid(pl_spec)?;
    if pl.iter().any(|&x| !(0.0..1.0).contains(&x)) {
        return Err(LabError::usage("p_l grid must lie in [0, 1)"));
    }
    let cells = sweep_failure_region(&r, &p, &pl).map_err(LabError::from)?;
    let hash = text_hash(&format!("sweep R={r_spec} P={p_spec} pl={pl_spec}"));
    let mut doc = CsvDoc::with_hash(&hash, "R,P,p_l,fails");
    for c in cells {
        doc.row(&[
            fmt_f64(c.r),
            fmt_f64(c.p),
            fmt_f64(c.p_lazy),
            (c.fails as u8).to_string(),
        ]);
    }
    Ok(doc)
}

pub struct AveragedQOutcome {
    pub q: Vec<f64>,
    pub fails: bool,
    pub doc: CsvDoc,
}

/// Converged context-blind values on the two-action lifting payoff under a
/// lazy-mixing opponent, plus the failure-condition verdict.
pub fn cmd_oracle_averaged_q(r: f64, p: f64, pl: f64) -> Result<AveragedQOutcome> {
    let payoff = PayoffTensor::lifting(r, p);
    let q = averaged_q(&payoff, &[1.0 - pl, pl]).map_err(LabError::from)?;
    let fails = fails_monotonic(PayoffSpec {
        r,
        p,
        p_lazy: pl,
    })
    .map_err(LabError::from)?;
    let hash = text_hash(&format!("averaged-q R={r} P={p} pl={pl}"));
    let mut doc = CsvDoc::with_hash(&hash, "action,label,q");
    doc.row(&["0".into(), "C".into(), fmt_f64(q[0])]);
    doc.row(&["1".into(), "L".into(), fmt_f64(q[1])]);
    Ok(AveragedQOutcome { q, fails, doc })
}

pub enum Probe {
    Marginal,
    Categories,
    Variance,
}

impl Probe {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(Probe::Marginal),
            "categories" => Ok(Probe::Categories),
            "variance" => Ok(Probe::Variance),
            other => Err(LabError::usage(format!(
                "unknown probe '{other}' (expected marginal, categories or variance)"
            ))),
        }
    }
}

/// Interpretability reports.
pub fn cmd_report(
    probe: Probe,
    ckpt_path: Option<&Path>,
    run_dir: Option<&Path>,
) -> Result<CsvDoc> {
    match probe {
        Probe::Marginal | Probe::Categories => {
            let path = ckpt_path.ok_or_else(|| {
                LabError::usage("this probe needs --checkpoint".to_string())
            })?;
            let ckpt = checkpoint::load_file(path)?;
            let learner = report::restore_avgm(&ckpt)?;
            match probe {
                Probe::Marginal => report::marginal_report(&ckpt.config, &learner),
                Probe::Categories => report::categories_report(&ckpt.config, &learner),
                Probe::Variance => unreachable!(),
            }
        }
        Probe::Variance => {
            let dir = run_dir.ok_or_else(|| {
                LabError::usage("the variance probe needs --run-dir".to_string())
            })?;
            let ckpts = report::run_checkpoints(dir)?;
            let cfg = ckpts.last().unwrap().1.config.clone();
            let mut learners = Vec::new();
            for (steps, ckpt) in &ckpts {
                learners.push((*steps, report::restore_avgm(ckpt)?));
            }
            report::variance_report(&cfg, &learners)
        }
    }
}

/// Human-readable eval summary.
pub fn format_eval(row: &EvalRow) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mean_return_per_agent = {}", fmt_f64(row.mean_return_per_agent));
    let _ = writeln!(s, "std_return_per_agent = {}", fmt_f64(row.std_return_per_agent));
    let _ = writeln!(s, "mean_coop_events = {}", fmt_f64(row.mean_coop_events));
    let _ = writeln!(s, "mean_failed_interacts = {}", fmt_f64(row.mean_failed_interacts));
    let _ = writeln!(s, "mean_len = {}", fmt_f64(row.mean_len));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1").unwrap(), vec![1.0]);
        let g = parse_grid("0:1:0.25").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn theorem_suite_passes_and_counts() {
        let out = cmd_oracle_theorem1(100, 7).unwrap();
        assert_eq!(out.passes, 100, "witness: {:?}", out.first_witness);
        assert_eq!(out.conservation_checks, 1000);
    }

    #[test]
    fn averaged_q_criterion_values() {
        let out = cmd_oracle_averaged_q(1.0, 0.3, 0.9).unwrap();
        assert!((out.q[0] - (-0.17)).abs() < 1e-12);
        assert!((out.q[1] - (-0.03)).abs() < 1e-12);
        assert!(out.fails);
    }
}
