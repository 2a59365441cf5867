//! Action encoder: maps the joint action of visible teammates into one of Z
//! discrete categories via attention, trained through a reward-predictive
//! model. The critic consumes the hard category (gradients blocked); the
//! predictive loss is the encoder's only training signal.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::nn::{
    canonical_element_order, dense_eval, dense_tape, Activation, DenseIds, NetConfig, NodeId,
    ParamId, ParamSet, Tape,
};
use crate::rng::Rng;
use crate::tensor::TensorBuf;

/// Encoder output: a distribution over Z category slots plus its mode.
/// Index 0 is the reserved null category emitted when no agent is visible.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCategory {
    pub probs: Vec<f64>,
    pub hard_index: usize,
}

impl LatentCategory {
    pub fn null(z: usize) -> Self {
        let mut probs = vec![0.0; z];
        probs[0] = 1.0;
        LatentCategory {
            probs,
            hard_index: 0,
        }
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.probs.len()];
        v[self.hard_index] = 1.0;
        v
    }
}

/// Encoder parameters (the phi family).
#[derive(Debug, Clone, Copy)]
pub struct EncoderIds {
    pub elem: DenseIds,
    pub query: DenseIds,
    pub cat_hidden: DenseIds,
    pub cat_out: DenseIds,
    pub z: usize,
    pub embed: usize,
}

impl EncoderIds {
    pub fn add(
        ps: &mut ParamSet,
        rng: &mut Rng,
        cfg: &NetConfig,
        obs_width: usize,
        elem_width: usize,
    ) -> Self {
        let embed = cfg.encoder_hidden;
        EncoderIds {
            elem: DenseIds::add(ps, rng, "encoder.elem", elem_width, embed),
            query: DenseIds::add(ps, rng, "encoder.query", obs_width, embed),
            cat_hidden: DenseIds::add(ps, rng, "encoder.cat_hidden", embed, embed),
            cat_out: DenseIds::add(ps, rng, "encoder.cat_out", embed, cfg.z_categories),
            z: cfg.z_categories,
            embed,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.elem.w,
            self.elem.b,
            self.query.w,
            self.query.b,
            self.cat_hidden.w,
            self.cat_hidden.b,
            self.cat_out.w,
            self.cat_out.b,
        ]
    }
}

/// Predictive reward model parameters (the eta family).
#[derive(Debug, Clone, Copy)]
pub struct PredictorIds {
    pub obs: DenseIds,
    pub hidden: DenseIds,
    pub narrow: DenseIds,
    pub out: DenseIds,
}

impl PredictorIds {
    pub fn add(
        ps: &mut ParamSet,
        rng: &mut Rng,
        cfg: &NetConfig,
        obs_width: usize,
        num_actions: usize,
    ) -> Self {
        let e = cfg.encoder_hidden;
        PredictorIds {
            obs: DenseIds::add(ps, rng, "predictor.obs", obs_width, e),
            hidden: DenseIds::add(
                ps,
                rng,
                "predictor.hidden",
                e + cfg.z_categories + num_actions,
                e,
            ),
            narrow: DenseIds::add(ps, rng, "predictor.narrow", e, cfg.head_hidden),
            out: DenseIds::add(ps, rng, "predictor.out", cfg.head_hidden, 1),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.obs.w,
            self.obs.b,
            self.hidden.w,
            self.hidden.b,
            self.narrow.w,
            self.narrow.b,
            self.out.w,
            self.out.b,
        ]
    }
}

/// Sorts raw element feature vectors into the canonical attention order.
pub fn sort_elements(elements: &mut Vec<Vec<f64>>) {
    let pairs: Vec<(&[f64], &[f64])> = elements
        .iter()
        .map(|e| (e.as_slice(), e.as_slice()))
        .collect();
    let order = canonical_element_order(&pairs);
    let mut sorted = Vec::with_capacity(elements.len());
    for &i in &order {
        sorted.push(elements[i].clone());
    }
    *elements = sorted;
}

/// Encodes the visible teammates' joint action into a latent category.
/// `elements` are raw per-teammate feature vectors (any order). With no
/// visible agents the reserved null category is returned without touching
/// the network.
pub fn encode(
    ps: &ParamSet,
    ids: &EncoderIds,
    obs_input: &[f64],
    elements: &[Vec<f64>],
) -> LatentCategory {
    if elements.is_empty() {
        return LatentCategory::null(ids.z);
    }
    let mut elems = elements.to_vec();
    sort_elements(&mut elems);
    let rows = elems.len();
    let width = elems[0].len();
    let mut flat = Vec::with_capacity(rows * width);
    for e in &elems {
        flat.extend_from_slice(e);
    }
    let elem_mat = TensorBuf::from_vec(&[rows, width], flat);
    let obs_mat = TensorBuf::from_vec(&[1, obs_input.len()], obs_input.to_vec());
    let probs = encode_batch(
        ps,
        ids,
        &obs_mat,
        &elem_mat,
        &[(0u32, rows as u32)],
    );
    LatentCategory {
        probs: probs.row(0).to_vec(),
        hard_index: math::argmax(probs.row(0)),
    }
}

/// Scalar per-agent reward prediction p_r(o_i, z_i, a_i).
pub fn predict_reward(
    ps: &ParamSet,
    ids: &PredictorIds,
    obs_input: &[f64],
    z_probs: &[f64],
    action: usize,
    num_actions: usize,
) -> f64 {
    let obs_mat = TensorBuf::from_vec(&[1, obs_input.len()], obs_input.to_vec());
    let obs_emb = dense_eval(ps, ids.obs, &obs_mat, Activation::Relu);
    let mut joined = obs_emb.data().to_vec();
    joined.extend_from_slice(z_probs);
    for a in 0..num_actions {
        joined.push(if a == action { 1.0 } else { 0.0 });
    }
    let x = TensorBuf::from_vec(&[1, joined.len()], joined);
    let h = dense_eval(ps, ids.hidden, &x, Activation::Relu);
    let n = dense_eval(ps, ids.narrow, &h, Activation::Relu);
    dense_eval(ps, ids.out, &n, Activation::None).at(0, 0)
}

/// Batched no-grad encoding: one row per agent-step. Rows with an empty
/// element segment get the null one-hot. Elements inside each segment must
/// already be in canonical order.
pub fn encode_batch(
    ps: &ParamSet,
    ids: &EncoderIds,
    obs: &TensorBuf,
    elems: &TensorBuf,
    segs: &[(u32, u32)],
) -> TensorBuf {
    let rows = obs.rows();
    debug_assert_eq!(rows, segs.len());
    let mut probs = TensorBuf::zeros(&[rows, ids.z]);
    if elems.rows() > 0 && elems.len() > 0 {
        let embedded = dense_eval(ps, ids.elem, elems, Activation::Relu);
        let query = dense_eval(ps, ids.query, obs, Activation::Relu);
        let scale = 1.0 / math::sqrt(ids.embed as f64);
        let mut pooled = TensorBuf::zeros(&[rows, ids.embed]);
        for (r, &(s, e)) in segs.iter().enumerate() {
            let (s, e) = (s as usize, e as usize);
            if s == e {
                continue;
            }
            let mut w: Vec<f64> = (s..e)
                .map(|k| {
                    query
                        .row(r)
                        .iter()
                        .zip(embedded.row(k))
                        .map(|(q, kk)| q * kk)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            math::softmax_in_place(&mut w);
            for (k, &wk) in (s..e).zip(w.iter()) {
                let erow = embedded.row(k);
                let prow = pooled.row_mut(r);
                for (o, &v) in prow.iter_mut().zip(erow.iter()) {
                    *o += wk * v;
                }
            }
        }
        let hid = dense_eval(ps, ids.cat_hidden, &pooled, Activation::Relu);
        let logits = dense_eval(ps, ids.cat_out, &hid, Activation::None);
        for r in 0..rows {
            let (s, e) = segs[r];
            if s == e {
                continue;
            }
            let mut row = logits.row(r).to_vec();
            math::softmax_in_place(&mut row);
            probs.row_mut(r).copy_from_slice(&row);
        }
    }
    for (r, &(s, e)) in segs.iter().enumerate() {
        if s == e {
            probs.set(r, 0, 1.0);
        }
    }
    probs
}

/// Hard category per row with lowest-index tie-break.
pub fn hard_indices(probs: &TensorBuf) -> Vec<usize> {
    (0..probs.rows()).map(|r| math::argmax(probs.row(r))).collect()
}

/// Tape version of the batched encoder with soft outputs; rows with an
/// empty segment are masked to the null one-hot so their gradient is zero.
pub fn encode_tape(
    t: &mut Tape,
    ps: &ParamSet,
    ids: &EncoderIds,
    obs: NodeId,
    elems: NodeId,
    segs: Vec<(u32, u32)>,
) -> NodeId {
    let rows = segs.len();
    let z = ids.z;
    let embedded = dense_tape(t, ps, ids.elem, elems, Activation::Relu);
    let query = dense_tape(t, ps, ids.query, obs, Activation::Relu);
    let mut mask = TensorBuf::zeros(&[rows, z]);
    let mut null_rows = TensorBuf::zeros(&[rows, z]);
    for (r, &(s, e)) in segs.iter().enumerate() {
        if s == e {
            null_rows.set(r, 0, 1.0);
        } else {
            for c in 0..z {
                mask.set(r, c, 1.0);
            }
        }
    }
    let pooled = t.segment_attn_pool(query, embedded, segs);
    let hid = dense_tape(t, ps, ids.cat_hidden, pooled, Activation::Relu);
    let logits = dense_tape(t, ps, ids.cat_out, hid, Activation::None);
    let probs = t.softmax_rows(logits);
    let mask_n = t.constant(mask);
    let nulls_n = t.constant(null_rows);
    let masked = t.mul_elem(probs, mask_n);
    t.add(masked, nulls_n)
}

/// Tape version of the predictor over batched rows.
pub fn predict_tape(
    t: &mut Tape,
    ps: &ParamSet,
    ids: &PredictorIds,
    obs: NodeId,
    z_soft: NodeId,
    action_onehots: NodeId,
) -> NodeId {
    let obs_emb = dense_tape(t, ps, ids.obs, obs, Activation::Relu);
    let joined = t.concat_cols(&[obs_emb, z_soft, action_onehots]);
    let h = dense_tape(t, ps, ids.hidden, joined, Activation::Relu);
    let n = dense_tape(t, ps, ids.narrow, h, Activation::Relu);
    dense_tape(t, ps, ids.out, n, Activation::None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ParamSet, EncoderIds, PredictorIds, NetConfig) {
        let cfg = NetConfig {
            rnn_hidden: 8,
            mixing_hidden: 8,
            encoder_hidden: 8,
            head_hidden: 8,
            z_categories: 5,
            ..NetConfig::default()
        };
        let mut rng = Rng::new(77);
        let mut ps = ParamSet::new();
        let enc = EncoderIds::add(&mut ps, &mut rng, &cfg, 6, 4);
        let pred = PredictorIds::add(&mut ps, &mut rng, &cfg, 6, 3);
        (ps, enc, pred, cfg)
    }

    #[test]
    fn empty_team_is_null_category() {
        let (ps, enc, _, _) = setup();
        let z = encode(&ps, &enc, &[0.1; 6], &[]);
        assert_eq!(z.hard_index, 0);
        assert_eq!(z.probs[0], 1.0);
        assert!(z.probs[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn encode_is_permutation_invariant() {
        let (ps, enc, _, _) = setup();
        let obs = [0.3, -0.2, 0.5, 0.0, 0.7, -0.1];
        let a = vec![1.0, 0.0, 0.25, 0.5];
        let b = vec![0.0, 1.0, -0.25, 0.125];
        let c = vec![0.0, 0.0, 0.5, 0.375];
        let z1 = encode(&ps, &enc, &obs, &[a.clone(), b.clone(), c.clone()]);
        let z2 = encode(&ps, &enc, &obs, &[c, a, b]);
        assert_eq!(z1.probs, z2.probs);
        assert_eq!(z1.hard_index, z2.hard_index);
    }

    #[test]
    fn probs_are_a_distribution() {
        let (ps, enc, _, _) = setup();
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let obs: Vec<f64> = (0..6).map(|_| rng.range_f64(-1.0, 1.0)).collect();
            let m = 1 + rng.below(3);
            let elems: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..4).map(|_| rng.range_f64(-1.0, 1.0)).collect())
                .collect();
            let z = encode(&ps, &enc, &obs, &elems);
            let sum: f64 = z.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(z.probs.iter().all(|&p| p >= 0.0));
            assert!(z.hard_index < 5);
        }
    }

    #[test]
    fn batched_encoding_matches_single_path() {
        let (ps, enc, _, _) = setup();
        let obs_a = [0.3, -0.2, 0.5, 0.0, 0.7, -0.1];
        let obs_b = [0.9, 0.2, -0.5, 0.3, 0.1, 0.4];
        let mut e1 = vec![
            vec![1.0, 0.0, 0.25, 0.5],
            vec![0.0, 1.0, -0.25, 0.125],
        ];
        let single_a = encode(&ps, &enc, &obs_a, &e1);
        let single_b = encode(&ps, &enc, &obs_b, &[]);
        assert_eq!(single_b.hard_index, 0);

        sort_elements(&mut e1);
        let obs = TensorBuf::from_vec(&[2, 6], [obs_a, obs_b].concat());
        let flat: Vec<f64> = e1.concat();
        let elems = TensorBuf::from_vec(&[2, 4], flat);
        let probs = encode_batch(&ps, &enc, &obs, &elems, &[(0, 2), (2, 2)]);
        for c in 0..5 {
            assert!((probs.at(0, c) - single_a.probs[c]).abs() < 1e-12);
        }
        assert_eq!(probs.row(1), LatentCategory::null(5).probs.as_slice());
        assert_eq!(hard_indices(&probs)[1], 0);
    }

    #[test]
    fn zeroed_output_head_predicts_zero() {
        let (mut ps, _, pred, _) = setup();
        ps.value_mut(pred.out.w).fill(0.0);
        ps.value_mut(pred.out.b).fill(0.0);
        let z = LatentCategory::null(5);
        let y = predict_reward(&ps, &pred, &[0.5; 6], &z.probs, 1, 3);
        assert_eq!(y, 0.0);
    }
}
