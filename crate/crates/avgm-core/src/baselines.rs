//! Monotonic comparison learners: independent Q-learning, additive value
//! decomposition and state-conditioned monotonic mixing. They share the
//! network widths, optimizer and schedules of the AVGM learner so that
//! comparisons isolate the algorithm.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::EnvDims;
use crate::harness::replay::{EpisodeBatch, TrunkLayout};
use crate::harness::unroll;
use crate::harness::{Learner, UpdateStats};
use crate::math;
use crate::nn::{
    dense_eval, dense_tape, mix_eval, mix_tape, optimizer_step, Activation, DenseIds, GruIds,
    MixIds, NetConfig, ParamId, ParamSet, Tape,
};
use crate::rng::Rng;
use crate::tensor::TensorBuf;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Iql,
    Vdn,
    Qmix,
}

impl BaselineKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "iql" => Ok(BaselineKind::Iql),
            "vdn" => Ok(BaselineKind::Vdn),
            "qmix" => Ok(BaselineKind::Qmix),
            other => Err(CoreError::Config(format!(
                "unknown baseline '{other}' (expected iql, vdn or qmix)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Iql => "iql",
            BaselineKind::Vdn => "vdn",
            BaselineKind::Qmix => "qmix",
        }
    }
}

pub struct BaselineLearner {
    kind: BaselineKind,
    dims: EnvDims,
    cfg: NetConfig,
    params: ParamSet,
    targets: ParamSet,
    pre: DenseIds,
    gru: GruIds,
    head_h: DenseIds,
    head_o: DenseIds,
    mix: Option<MixIds>,
    all_ids: Vec<ParamId>,
}

impl BaselineLearner {
    pub fn new(kind: BaselineKind, dims: EnvDims, cfg: NetConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        let h = cfg.rnn_hidden;
        let pre = DenseIds::add(&mut ps, rng, "agent.pre", dims.obs_width, h);
        let gru = GruIds::add(&mut ps, rng, "agent.gru", h, h);
        let head_h = DenseIds::add(&mut ps, rng, "agent.head_h", h, cfg.head_hidden);
        let head_o = DenseIds::add(&mut ps, rng, "agent.head_o", cfg.head_hidden, dims.num_actions);
        let mix = match kind {
            BaselineKind::Qmix => Some(MixIds::add(
                &mut ps,
                rng,
                "mix",
                dims.state_width,
                dims.num_agents,
                cfg.mixing_hidden,
            )),
            _ => None,
        };
        let all_ids: Vec<ParamId> = ps.ids().collect();
        let targets = ps.target_copy();
        Ok(BaselineLearner {
            kind,
            dims,
            cfg,
            params: ps,
            targets,
            pre,
            gru,
            head_h,
            head_o,
            mix,
            all_ids,
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    fn head_eval(&self, ps: &ParamSet, hidden: &TensorBuf) -> TensorBuf {
        let hid = dense_eval(ps, self.head_h, hidden, Activation::Relu);
        dense_eval(ps, self.head_o, &hid, Activation::None)
    }

    /// Additive or mixed totals of per-agent utilities; shared by the
    /// forward loss and the bootstrapped targets.
    fn totals(
        &self,
        ps: &ParamSet,
        utilities: &TensorBuf,
        states: &TensorBuf,
    ) -> TensorBuf {
        match self.kind {
            BaselineKind::Vdn => {
                let mut out = TensorBuf::zeros(&[utilities.rows(), 1]);
                for r in 0..utilities.rows() {
                    out.set(r, 0, utilities.row(r).iter().sum());
                }
                out
            }
            BaselineKind::Qmix => mix_eval(ps, self.mix.unwrap(), utilities, states),
            BaselineKind::Iql => unreachable!("iql has no total"),
        }
    }
}

impl Learner for BaselineLearner {
    fn method_name(&self) -> &'static str {
        self.kind.name()
    }

    fn hidden_width(&self) -> usize {
        self.cfg.rnn_hidden
    }

    fn act(&self, hidden: &TensorBuf, obs_input: &[f64], eps: f64, rng: &mut Rng) -> (usize, TensorBuf) {
        let x = TensorBuf::from_vec(&[1, obs_input.len()], obs_input.to_vec());
        let pre = dense_eval(&self.params, self.pre, &x, Activation::Relu);
        let new_h = crate::nn::gru_eval(&self.params, self.gru, &pre, hidden);
        let q = self.head_eval(&self.params, &new_h);
        let action = if eps > 0.0 && rng.chance(eps) {
            rng.below(q.len())
        } else {
            math::argmax(q.data())
        };
        (action, new_h)
    }

    fn update(&mut self, batch: &EpisodeBatch, gamma: f64) -> Result<UpdateStats> {
        let n = batch.n_agents;
        let lens = batch.lens();
        let layout = TrunkLayout::new(&lens, n);
        let obs_mats = unroll::obs_matrices(batch, &layout, self.dims.num_actions, self.dims.obs_width);
        let steps = layout.total_steps();
        let mut actions = Vec::with_capacity(layout.total_rows);
        let mut rewards = Vec::with_capacity(steps);
        let mut terminal = Vec::with_capacity(steps);
        let mut states = TensorBuf::zeros(&[steps, self.dims.state_width]);
        for t in 0..layout.t_max() {
            for pos in 0..layout.counts[t] {
                let ep = &batch.episodes[pos];
                let s = layout.step(t, pos);
                rewards.push(ep.rewards[t]);
                terminal.push(t + 1 == ep.len);
                states.row_mut(s).copy_from_slice(&ep.states[t]);
                for agent in 0..n {
                    actions.push(ep.actions[t][agent]);
                }
            }
        }

        // Bootstrapped targets from the target network.
        let tgt_lens: Vec<usize> = lens.iter().map(|l| l + 1).collect();
        let tgt_layout = TrunkLayout::new(&tgt_lens, n);
        let tgt_obs =
            unroll::obs_matrices(batch, &tgt_layout, self.dims.num_actions, self.dims.obs_width);
        let h_tgt = unroll::trunk_eval(
            &self.targets,
            self.pre,
            self.gru,
            self.cfg.rnn_hidden,
            &tgt_layout,
            &tgt_obs,
        );
        let q_tgt = self.head_eval(&self.targets, &h_tgt);
        let mut y_rows = vec![0.0; layout.total_rows];
        let mut y_steps = vec![0.0; steps];
        for t in 0..layout.t_max() {
            for pos in 0..layout.counts[t] {
                let ep = &batch.episodes[pos];
                let s = layout.step(t, pos);
                let r = rewards[s];
                if terminal[s] {
                    y_steps[s] = r;
                    for agent in 0..n {
                        y_rows[layout.row(t, pos, agent)] = r;
                    }
                    continue;
                }
                let mut best = vec![0.0; n];
                for agent in 0..n {
                    let q = q_tgt.row(tgt_layout.row(t + 1, pos, agent));
                    best[agent] = q[math::argmax(q)];
                    y_rows[layout.row(t, pos, agent)] = r + gamma * best[agent];
                }
                y_steps[s] = match self.kind {
                    BaselineKind::Iql => 0.0,
                    BaselineKind::Vdn => r + gamma * best.iter().sum::<f64>(),
                    BaselineKind::Qmix => {
                        let u = TensorBuf::from_vec(&[1, n], best);
                        let st = TensorBuf::from_vec(
                            &[1, self.dims.state_width],
                            ep.states[t + 1].clone(),
                        );
                        r + gamma * self.totals(&self.targets, &u, &st).at(0, 0)
                    }
                };
            }
        }

        // Forward pass with gradients.
        let mut tape = Tape::new();
        let h_all = unroll::trunk_tape(
            &mut tape,
            &self.params,
            self.pre,
            self.gru,
            self.cfg.rnn_hidden,
            &layout,
            &obs_mats,
        );
        let hid = dense_tape(&mut tape, &self.params, self.head_h, h_all, Activation::Relu);
        let q = dense_tape(&mut tape, &self.params, self.head_o, hid, Activation::None);
        let sel = tape.select_cols(q, actions);
        let loss_n = match self.kind {
            BaselineKind::Iql => {
                let y = tape.constant(TensorBuf::from_vec(&[layout.total_rows, 1], y_rows));
                let d = tape.sub(sel, y);
                let sq = tape.mul_elem(d, d);
                let sum = tape.sum_all(sq);
                tape.affine(sum, 1.0 / layout.total_rows as f64, 0.0)
            }
            BaselineKind::Vdn => {
                let per_step = tape.reshape(sel, &[steps, n]);
                let qtot = tape.row_sum(per_step);
                let y = tape.constant(TensorBuf::from_vec(&[steps, 1], y_steps));
                let d = tape.sub(qtot, y);
                let sq = tape.mul_elem(d, d);
                let sum = tape.sum_all(sq);
                tape.affine(sum, 1.0 / steps as f64, 0.0)
            }
            BaselineKind::Qmix => {
                let per_step = tape.reshape(sel, &[steps, n]);
                let st = tape.constant(states.clone());
                let qtot = mix_tape(&mut tape, &self.params, self.mix.unwrap(), per_step, st);
                let y = tape.constant(TensorBuf::from_vec(&[steps, 1], y_steps));
                let d = tape.sub(qtot, y);
                let sq = tape.mul_elem(d, d);
                let sum = tape.sum_all(sq);
                tape.affine(sum, 1.0 / steps as f64, 0.0)
            }
        };
        let td_loss = tape.scalar_value(loss_n);
        if !td_loss.is_finite() {
            return Err(CoreError::NumericFault(format!(
                "non-finite TD loss ({}) on a batch of {} episodes",
                self.kind.name(),
                batch.episodes.len()
            )));
        }
        tape.backward(loss_n, &mut self.params);
        let skipped = optimizer_step(
            &mut self.params,
            &self.all_ids,
            self.cfg.learning_rate,
            self.cfg.rms_decay,
            self.cfg.rms_eps,
        );
        Ok(UpdateStats {
            td_loss,
            policy_loss: None,
            encoder_loss: None,
            skipped,
        })
    }

    fn sync_targets(&mut self) {
        self.targets.copy_values_from(&self.params);
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn targets(&self) -> &ParamSet {
        &self.targets
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn targets_mut(&mut self) -> &mut ParamSet {
        &mut self.targets
    }
}
