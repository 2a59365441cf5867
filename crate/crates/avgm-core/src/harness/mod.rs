//! Training infrastructure: the learner interface, rollout, replay,
//! schedules, the training loop and the evaluation protocol.

pub mod replay;
pub mod rollout;
pub mod schedule;
pub mod unroll;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::env::Environment;
use crate::math;
use crate::nn::ParamSet;
use crate::rng::{streams, Rng};
use crate::tensor::TensorBuf;
use crate::{CoreError, Result};

pub use replay::{Episode, EpisodeBatch, ReplayBuffer, TrunkLayout};
pub use rollout::{rollout, EpisodeStats, TraceStep};
pub use schedule::epsilon;

/// Losses and warnings of one gradient update.
#[derive(Debug, Clone)]
pub struct UpdateStats {
    pub td_loss: f64,
    pub policy_loss: Option<f64>,
    pub encoder_loss: Option<f64>,
    /// Parameter tensors skipped because of non-finite gradients.
    pub skipped: Vec<String>,
}

/// Common surface of the trainable methods (AVGM and the baselines).
pub trait Learner {
    fn method_name(&self) -> &'static str;
    fn hidden_width(&self) -> usize;
    /// Epsilon-greedy decentralized action from the agent's own history.
    fn act(&self, hidden: &TensorBuf, obs_input: &[f64], eps: f64, rng: &mut Rng)
        -> (usize, TensorBuf);
    fn update(&mut self, batch: &EpisodeBatch, gamma: f64) -> Result<UpdateStats>;
    fn sync_targets(&mut self);
    fn params(&self) -> &ParamSet;
    fn targets(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn targets_mut(&mut self) -> &mut ParamSet;
}

/// Harness hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Gradient updates per collected episode.
    pub updates_per_episode: u32,
    /// When nonzero, updates are paced by environment steps instead: one
    /// update per this many steps, settled after each episode.
    pub update_every_steps: u64,
    pub target_sync_episodes: u64,
    pub eps_anneal_steps: u64,
    pub eps_final: f64,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub checkpoint_interval: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            gamma: 0.99,
            batch_size: 100,
            replay_capacity: 5000,
            updates_per_episode: 1,
            update_every_steps: 0,
            target_sync_episodes: 200,
            eps_anneal_steps: 700_000,
            eps_final: 0.05,
            total_steps: 1_000_000,
            eval_interval: 10_000,
            eval_episodes: 32,
            checkpoint_interval: 100_000,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(CoreError::Config("gamma must be in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(CoreError::Config(
                "replay capacity must be >= batch size >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.eps_final) {
            return Err(CoreError::Config("eps_final must be in [0, 1]".into()));
        }
        if self.eval_episodes == 0 {
            return Err(CoreError::Config("eval_episodes must be >= 1".into()));
        }
        if self.updates_per_episode == 0 {
            return Err(CoreError::Config("updates_per_episode must be >= 1".into()));
        }
        Ok(())
    }
}

/// Derived deterministic streams of one run.
#[derive(Debug)]
pub struct RunSeed {
    pub master: u64,
    pub env: Rng,
    pub explore: Rng,
    pub init: Rng,
    pub replay: Rng,
    pub eval: Rng,
}

impl RunSeed {
    pub fn new(master: u64) -> Self {
        RunSeed {
            master,
            env: Rng::derive(master, streams::ENV),
            explore: Rng::derive(master, streams::EXPLORE),
            init: Rng::derive(master, streams::INIT),
            replay: Rng::derive(master, streams::REPLAY),
            eval: Rng::derive(master, streams::EVAL),
        }
    }
}

/// One training-log record, written at every evaluation point.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub env_steps: u64,
    pub episodes: u64,
    pub td_loss: f64,
    pub policy_loss: f64,
    pub encoder_loss: f64,
    pub eval_return_per_agent: f64,
    pub epsilon: f64,
}

/// One evaluation record.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub env_steps: u64,
    pub mean_return_per_agent: f64,
    pub std_return_per_agent: f64,
    pub mean_coop_events: f64,
    pub mean_failed_interacts: f64,
    pub mean_len: f64,
}

/// Receives run artifacts as they are produced.
pub trait TrainObserver {
    fn on_log(&mut self, _row: &LogRow) {}
    fn on_eval(&mut self, _row: &EvalRow) {}
    fn on_checkpoint(&mut self, _env_steps: u64, _learner: &dyn Learner) {}
    fn on_warning(&mut self, _msg: &str) {}
}

/// Observer that keeps everything in memory.
#[derive(Default)]
pub struct MemoryObserver {
    pub logs: Vec<LogRow>,
    pub evals: Vec<EvalRow>,
    pub checkpoints: Vec<u64>,
    pub warnings: Vec<String>,
}

impl TrainObserver for MemoryObserver {
    fn on_log(&mut self, row: &LogRow) {
        self.logs.push(row.clone());
    }

    fn on_eval(&mut self, row: &EvalRow) {
        self.evals.push(row.clone());
    }

    fn on_checkpoint(&mut self, env_steps: u64, _learner: &dyn Learner) {
        self.checkpoints.push(env_steps);
    }

    fn on_warning(&mut self, msg: &str) {
        self.warnings.push(msg.into());
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub env_steps: u64,
    pub episodes: u64,
    pub final_eval: EvalRow,
}

/// Greedy evaluation over a number of fresh episodes.
pub fn evaluate(
    learner: &dyn Learner,
    env: &mut dyn Environment,
    episodes: usize,
    eval_rng: &mut Rng,
) -> Result<EvalRow> {
    if episodes == 0 {
        return Err(CoreError::Usage("evaluation needs at least one episode".into()));
    }
    let n = env.num_agents() as f64;
    let mut returns = Vec::with_capacity(episodes);
    let mut coop = 0.0;
    let mut failed = 0.0;
    let mut lens = 0.0;
    // Greedy actions never consult the rng; a throwaway stream keeps the
    // signature honest.
    let mut greedy_rng = Rng::new(0);
    for _ in 0..episodes {
        let seed = eval_rng.next_u64();
        let (_, stats) = rollout(learner, env, seed, 0.0, &mut greedy_rng, None)?;
        returns.push(stats.total_reward / n);
        coop += stats.coop_events as f64;
        failed += stats.failed_interacts as f64;
        lens += stats.len as f64;
    }
    let count = episodes as f64;
    let mean = returns.iter().sum::<f64>() / count;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / count;
    Ok(EvalRow {
        env_steps: 0,
        mean_return_per_agent: mean,
        std_return_per_agent: math::sqrt(var),
        mean_coop_events: coop / count,
        mean_failed_interacts: failed / count,
        mean_len: lens / count,
    })
}

/// The training loop: rollout, replay insert, one gradient update per
/// collected episode once the replay holds a full batch, periodic target
/// sync, periodic greedy evaluation, checkpoints at the start, every
/// checkpoint interval and at the end.
pub fn train(
    learner: &mut dyn Learner,
    env: &mut dyn Environment,
    cfg: &HarnessConfig,
    seed: &mut RunSeed,
    observer: &mut dyn TrainObserver,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut env_steps: u64 = 0;
    let mut episodes: u64 = 0;
    let mut updates_done: u64 = 0;
    let mut last = UpdateStats {
        td_loss: 0.0,
        policy_loss: None,
        encoder_loss: None,
        skipped: Vec::new(),
    };
    observer.on_checkpoint(0, learner);
    let mut next_eval = cfg.eval_interval;
    let mut next_ckpt = cfg.checkpoint_interval;
    while env_steps < cfg.total_steps {
        let eps = epsilon(env_steps, cfg.eps_anneal_steps, cfg.eps_final);
        let env_seed = seed.env.next_u64();
        let (episode, _) = rollout(learner, env, env_seed, eps, &mut seed.explore, None)?;
        env_steps += episode.len as u64;
        episodes += 1;
        replay.push(episode);
        let step_target = if cfg.update_every_steps > 0 {
            env_steps / cfg.update_every_steps
        } else {
            0
        };
        if replay.len() < cfg.batch_size {
            // keep the step-paced accounting moving during replay warmup
            updates_done = step_target;
        }
        let updates_due = if cfg.update_every_steps > 0 {
            step_target.saturating_sub(updates_done) as u32
        } else {
            cfg.updates_per_episode
        };
        if replay.len() >= cfg.batch_size {
            for _ in 0..updates_due {
                let batch = replay.sample(cfg.batch_size, env.num_actions(), &mut seed.replay);
                match learner.update(&batch, cfg.gamma) {
                    Ok(stats) => {
                        for name in &stats.skipped {
                            observer.on_warning(&format!(
                                "skipped update of '{name}' at step {env_steps}: non-finite gradient"
                            ));
                        }
                        last = stats;
                    }
                    Err(CoreError::NumericFault(m)) => {
                        return Err(CoreError::NumericFault(format!(
                            "aborted at step {env_steps} (episode {episodes}): {m}"
                        )));
                    }
                    Err(e) => return Err(e),
                }
                updates_done += 1;
            }
        }
        if episodes % cfg.target_sync_episodes == 0 {
            learner.sync_targets();
        }
        while env_steps >= next_eval {
            let mut row = evaluate(learner, env, cfg.eval_episodes, &mut seed.eval)?;
            row.env_steps = next_eval.min(env_steps);
            observer.on_eval(&row);
            observer.on_log(&LogRow {
                env_steps: row.env_steps,
                episodes,
                td_loss: last.td_loss,
                policy_loss: last.policy_loss.unwrap_or(0.0),
                encoder_loss: last.encoder_loss.unwrap_or(0.0),
                eval_return_per_agent: row.mean_return_per_agent,
                epsilon: eps,
            });
            next_eval += cfg.eval_interval;
        }
        while env_steps >= next_ckpt {
            observer.on_checkpoint(next_ckpt.min(env_steps), learner);
            next_ckpt += cfg.checkpoint_interval;
        }
    }
    let mut final_eval = evaluate(learner, env, cfg.eval_episodes, &mut seed.eval)?;
    final_eval.env_steps = env_steps;
    observer.on_eval(&final_eval);
    observer.on_log(&LogRow {
        env_steps,
        episodes,
        td_loss: last.td_loss,
        policy_loss: last.policy_loss.unwrap_or(0.0),
        encoder_loss: last.encoder_loss.unwrap_or(0.0),
        eval_return_per_agent: final_eval.mean_return_per_agent,
        epsilon: epsilon(env_steps, cfg.eps_anneal_steps, cfg.eps_final),
    });
    observer.on_checkpoint(env_steps, learner);
    Ok(TrainSummary {
        env_steps,
        episodes,
        final_eval,
    })
}
