//! Shared recurrent-trunk unrolling over a batch layout, with and without
//! gradient recording.

use alloc::vec::Vec;

use crate::env::net_input;
use crate::harness::replay::{EpisodeBatch, TrunkLayout};
use crate::nn::{dense_eval, dense_tape, gru_eval, gru_tape, Activation, DenseIds, GruIds, NodeId, ParamSet, Tape};
use crate::tensor::TensorBuf;

/// Network-input matrices per timestep, prefix rows only.
pub fn obs_matrices(
    batch: &EpisodeBatch,
    layout: &TrunkLayout,
    num_actions: usize,
    obs_width: usize,
) -> Vec<TensorBuf> {
    let n = batch.n_agents;
    let mut mats = Vec::with_capacity(layout.t_max());
    for t in 0..layout.t_max() {
        let rows = layout.counts[t] * n;
        let mut m = TensorBuf::zeros(&[rows, obs_width]);
        for pos in 0..layout.counts[t] {
            for agent in 0..n {
                let x = net_input(&batch.episodes[pos].obs[t][agent], num_actions);
                m.row_mut(pos * n + agent).copy_from_slice(&x);
            }
        }
        mats.push(m);
    }
    mats
}

/// Stacks the per-timestep observation matrices into one (R x obs) matrix.
pub fn stack_rows(obs_mats: &[TensorBuf], total_rows: usize, width: usize) -> TensorBuf {
    let mut m = TensorBuf::zeros(&[total_rows, width]);
    let mut off = 0;
    for mat in obs_mats {
        m.data_mut()[off..off + mat.len()].copy_from_slice(mat.data());
        off += mat.len();
    }
    m
}

/// Recurrent unroll on the tape; hidden states start at zero and the set of
/// live rows shrinks as shorter episodes finish. Returns the stacked
/// (R x hidden) node.
pub fn trunk_tape(
    t: &mut Tape,
    ps: &ParamSet,
    pre: DenseIds,
    gru: GruIds,
    hidden_w: usize,
    layout: &TrunkLayout,
    obs_mats: &[TensorBuf],
) -> NodeId {
    let n = layout.n_agents;
    let mut hs: Vec<NodeId> = Vec::with_capacity(layout.t_max());
    let mut h_prev: Option<NodeId> = None;
    for (tt, mat) in obs_mats.iter().enumerate() {
        let x = t.constant(mat.clone());
        let xe = dense_tape(t, ps, pre, x, Activation::Relu);
        let rcount = layout.counts[tt] * n;
        let h_in = match h_prev {
            None => t.constant(TensorBuf::zeros(&[rcount, hidden_w])),
            Some(prev) => t.prefix_rows(prev, rcount),
        };
        let h = gru_tape(t, ps, gru, xe, h_in);
        hs.push(h);
        h_prev = Some(h);
    }
    t.concat_rows(&hs)
}

/// Plain recurrent unroll; returns the stacked (R x hidden) values.
pub fn trunk_eval(
    ps: &ParamSet,
    pre: DenseIds,
    gru: GruIds,
    hidden_w: usize,
    layout: &TrunkLayout,
    obs_mats: &[TensorBuf],
) -> TensorBuf {
    let n = layout.n_agents;
    let mut out = TensorBuf::zeros(&[layout.total_rows, hidden_w]);
    let mut h_prev = TensorBuf::zeros(&[0, hidden_w]);
    for t in 0..layout.t_max() {
        let rcount = layout.counts[t] * n;
        let xe = dense_eval(ps, pre, &obs_mats[t], Activation::Relu);
        let mut h_in = TensorBuf::zeros(&[rcount, hidden_w]);
        let carry = (rcount * hidden_w).min(h_prev.len());
        if carry > 0 {
            h_in.data_mut()[..carry].copy_from_slice(&h_prev.data()[..carry]);
        }
        let h = gru_eval(ps, gru, &xe, &h_in);
        let off = layout.offsets[t] * hidden_w;
        out.data_mut()[off..off + rcount * hidden_w].copy_from_slice(h.data());
        h_prev = h;
    }
    out
}
