//! Layer builders: each layer exists twice, as a tape composite (gradients)
//! and as a plain evaluator (rollouts, target networks, greedy search).

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::nn::params::{Init, ParamId, ParamSet};
use crate::nn::tape::{NodeId, Tape};
use crate::rng::Rng;
use crate::tensor::TensorBuf;
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct DenseIds {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseIds {
    pub fn add(ps: &mut ParamSet, rng: &mut Rng, prefix: &str, din: usize, dout: usize) -> Self {
        let bound = 1.0 / math::sqrt(din as f64);
        Self::add_with(ps, rng, prefix, din, dout, Init::FanIn, Init::Uniform(bound))
    }

    pub fn add_with(
        ps: &mut ParamSet,
        rng: &mut Rng,
        prefix: &str,
        din: usize,
        dout: usize,
        w_init: Init,
        b_init: Init,
    ) -> Self {
        let w = ps.add(&format!("{prefix}.w"), &[din, dout], w_init, rng);
        let b = ps.add(&format!("{prefix}.b"), &[dout], b_init, rng);
        DenseIds { w, b }
    }
}

/// Affine transform plus activation on a whole batch, recording gradients.
pub fn dense_tape(
    t: &mut Tape,
    ps: &ParamSet,
    ids: DenseIds,
    x: NodeId,
    act: Activation,
) -> NodeId {
    let w = t.param(ps, ids.w);
    let b = t.param(ps, ids.b);
    let mm = t.matmul(x, w);
    let a = t.add_row(mm, b);
    match act {
        Activation::Relu => t.relu(a),
        Activation::None => a,
    }
}

/// Plain forward of a dense layer.
pub fn dense_eval(ps: &ParamSet, ids: DenseIds, x: &TensorBuf, act: Activation) -> TensorBuf {
    let mut out = x.matmul(ps.value(ids.w));
    let b = ps.value(ids.b);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
            if act == Activation::Relu {
                *v = math::relu(*v);
            }
        }
    }
    out
}

/// Checked single-layer forward. Shape mismatch is a configuration error.
pub fn dense_forward(
    input: &TensorBuf,
    weights: &TensorBuf,
    bias: &TensorBuf,
    act: Activation,
) -> Result<TensorBuf> {
    if input.cols() != weights.rows() || weights.cols() != bias.len() {
        return Err(CoreError::Config(format!(
            "dense layer expects input width {}, bias width {}; got input {} / bias {}",
            weights.rows(),
            weights.cols(),
            input.cols(),
            bias.len()
        )));
    }
    let mut out = input.matmul(weights);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (v, &bv) in row.iter_mut().zip(bias.data()) {
            *v += bv;
            if act == Activation::Relu {
                *v = math::relu(*v);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct GruIds {
    pub wxr: ParamId,
    pub whr: ParamId,
    pub br: ParamId,
    pub wxz: ParamId,
    pub whz: ParamId,
    pub bz: ParamId,
    pub wxn: ParamId,
    pub whn: ParamId,
    pub bn: ParamId,
}

impl GruIds {
    pub fn add(ps: &mut ParamSet, rng: &mut Rng, prefix: &str, din: usize, hidden: usize) -> Self {
        let mut mat = |name: &str, rows: usize| {
            ps.add(&format!("{prefix}.{name}"), &[rows, hidden], Init::FanIn, rng)
        };
        let wxr = mat("wxr", din);
        let whr = mat("whr", hidden);
        let wxz = mat("wxz", din);
        let whz = mat("whz", hidden);
        let wxn = mat("wxn", din);
        let whn = mat("whn", hidden);
        let bound = 1.0 / math::sqrt(hidden as f64);
        let br = ps.add(&format!("{prefix}.br"), &[hidden], Init::Uniform(bound), rng);
        let bz = ps.add(&format!("{prefix}.bz"), &[hidden], Init::Uniform(bound), rng);
        let bn = ps.add(&format!("{prefix}.bn"), &[hidden], Init::Uniform(bound), rng);
        GruIds {
            wxr,
            whr,
            br,
            wxz,
            whz,
            bz,
            wxn,
            whn,
            bn,
        }
    }
}

/// Gated recurrent update. The update gate weights the candidate state:
/// `h' = z * n + (1 - z) * h`, so a saturated-high gate replaces the hidden
/// state and a saturated-low gate keeps it.
pub fn gru_tape(t: &mut Tape, ps: &ParamSet, ids: GruIds, x: NodeId, h: NodeId) -> NodeId {
    let wxr = t.param(ps, ids.wxr);
    let whr = t.param(ps, ids.whr);
    let br = t.param(ps, ids.br);
    let wxz = t.param(ps, ids.wxz);
    let whz = t.param(ps, ids.whz);
    let bz = t.param(ps, ids.bz);
    let wxn = t.param(ps, ids.wxn);
    let whn = t.param(ps, ids.whn);
    let bn = t.param(ps, ids.bn);

    let xr = t.matmul(x, wxr);
    let hr = t.matmul(h, whr);
    let rsum = t.add(xr, hr);
    let rpre = t.add_row(rsum, br);
    let r = t.sigmoid(rpre);

    let xz = t.matmul(x, wxz);
    let hz = t.matmul(h, whz);
    let zsum = t.add(xz, hz);
    let zpre = t.add_row(zsum, bz);
    let z = t.sigmoid(zpre);

    let xn = t.matmul(x, wxn);
    let hn = t.matmul(h, whn);
    let rhn = t.mul_elem(r, hn);
    let nsum = t.add(xn, rhn);
    let npre = t.add_row(nsum, bn);
    let n = t.tanh(npre);

    let zn = t.mul_elem(z, n);
    let one_minus_z = t.affine(z, -1.0, 1.0);
    let zh = t.mul_elem(one_minus_z, h);
    t.add(zn, zh)
}

/// Plain forward of one GRU step.
pub fn gru_eval(ps: &ParamSet, ids: GruIds, x: &TensorBuf, h: &TensorBuf) -> TensorBuf {
    let gate = |wx: ParamId, wh: ParamId, b: ParamId| -> TensorBuf {
        let mut g = x.matmul(ps.value(wx));
        let hpart = h.matmul(ps.value(wh));
        let bias = ps.value(b);
        for i in 0..g.len() {
            g.data_mut()[i] += hpart.data()[i] + bias.data()[i % bias.len()];
        }
        g
    };
    let mut r = gate(ids.wxr, ids.whr, ids.br);
    for v in r.data_mut() {
        *v = math::sigmoid(*v);
    }
    let mut z = gate(ids.wxz, ids.whz, ids.bz);
    for v in z.data_mut() {
        *v = math::sigmoid(*v);
    }
    let mut n = x.matmul(ps.value(ids.wxn));
    let hn = h.matmul(ps.value(ids.whn));
    let bn = ps.value(ids.bn);
    for i in 0..n.len() {
        let pre = n.data()[i] + r.data()[i] * hn.data()[i] + bn.data()[i % bn.len()];
        n.data_mut()[i] = math::tanh(pre);
    }
    let mut out = TensorBuf::zeros(h.shape());
    for i in 0..out.len() {
        let zz = z.data()[i];
        out.data_mut()[i] = zz * n.data()[i] + (1.0 - zz) * h.data()[i];
    }
    out
}

/// Checked GRU step: a non-finite new hidden state is a training fault.
pub fn gru_step(ps: &ParamSet, ids: GruIds, x: &TensorBuf, h: &TensorBuf) -> Result<TensorBuf> {
    let out = gru_eval(ps, ids, x, h);
    if !out.all_finite() {
        return Err(CoreError::NumericFault(format!(
            "non-finite hidden state after GRU step (input max |x| = {:e})",
            x.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
        )));
    }
    Ok(out)
}

/// FNV-1a over the little-endian bytes of the element's key and value,
/// used as the canonical summation order for attention pooling.
pub fn element_hash(key: &[f64], value: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |xs: &[f64]| {
        for x in xs {
            for b in x.to_le_bits_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
    };
    eat(key);
    eat(value);
    h
}

trait LeBytes {
    fn to_le_bits_bytes(&self) -> [u8; 8];
}

impl LeBytes for f64 {
    fn to_le_bits_bytes(&self) -> [u8; 8] {
        self.to_bits().to_le_bytes()
    }
}

/// Canonical processing order for a set of attention elements: ascending by
/// hash, with full byte comparison as the tie-break. Equal elements keep
/// their relative order, which cannot affect the pooled sum.
pub fn canonical_element_order(elements: &[(&[f64], &[f64])]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..elements.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ka, va) = elements[a];
        let (kb, vb) = elements[b];
        element_hash(ka, va)
            .cmp(&element_hash(kb, vb))
            .then_with(|| cmp_bits(ka, kb))
            .then_with(|| cmp_bits(va, vb))
    });
    idx
}

fn cmp_bits(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let ord = x.to_bits().cmp(&y.to_bits());
        if ord != core::cmp::Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len())
}

/// Scaled-dot attention pooling over a variable-length element set.
/// Weights are softmax(q . k / sqrt(d)); the weighted sum runs in the
/// canonical hash order so the output is independent of element order.
pub fn attention_pool(
    query: &TensorBuf,
    keys: &[TensorBuf],
    values: &[TensorBuf],
) -> Result<TensorBuf> {
    if keys.is_empty() {
        return Err(CoreError::Usage(
            "attention over an empty element set; use the null-category path".into(),
        ));
    }
    if keys.len() != values.len() {
        return Err(CoreError::Config(format!(
            "{} keys vs {} values",
            keys.len(),
            values.len()
        )));
    }
    let d = query.len();
    for k in keys {
        if k.len() != d {
            return Err(CoreError::Config("query/key width mismatch".into()));
        }
    }
    let pairs: Vec<(&[f64], &[f64])> = keys
        .iter()
        .zip(values.iter())
        .map(|(k, v)| (k.data(), v.data()))
        .collect();
    let order = canonical_element_order(&pairs);
    let scale = 1.0 / math::sqrt(d as f64);
    let mut scores: Vec<f64> = order
        .iter()
        .map(|&i| {
            query
                .data()
                .iter()
                .zip(keys[i].data())
                .map(|(q, k)| q * k)
                .sum::<f64>()
                * scale
        })
        .collect();
    math::softmax_in_place(&mut scores);
    let vwidth = values[0].len();
    let mut out = TensorBuf::zeros(&[vwidth]);
    for (&i, &w) in order.iter().zip(scores.iter()) {
        for (o, &v) in out.data_mut().iter_mut().zip(values[i].data()) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Parameter ids of the state-conditioned monotonic mixer. The hypernetwork
/// output heads start at zero weights with constant bias so the initial
/// mixer is approximately the mean of the utilities.
#[derive(Debug, Clone, Copy)]
pub struct MixIds {
    pub state: DenseIds,
    pub hw1: DenseIds,
    pub hb1: DenseIds,
    pub hw2: DenseIds,
    pub v1: DenseIds,
    pub v2: DenseIds,
    pub n_agents: usize,
    pub hidden: usize,
}

impl MixIds {
    pub fn add(
        ps: &mut ParamSet,
        rng: &mut Rng,
        prefix: &str,
        state_dim: usize,
        n_agents: usize,
        hidden: usize,
    ) -> Self {
        let state = DenseIds::add(ps, rng, &format!("{prefix}.state"), state_dim, hidden);
        let hw1 = DenseIds::add_with(
            ps,
            rng,
            &format!("{prefix}.hw1"),
            hidden,
            n_agents * hidden,
            Init::Zeros,
            Init::Const(1.0 / n_agents as f64),
        );
        let hb1 = DenseIds::add_with(
            ps,
            rng,
            &format!("{prefix}.hb1"),
            hidden,
            hidden,
            Init::FanIn,
            Init::Zeros,
        );
        let hw2 = DenseIds::add_with(
            ps,
            rng,
            &format!("{prefix}.hw2"),
            hidden,
            hidden,
            Init::Zeros,
            Init::Const(1.0 / hidden as f64),
        );
        let v1 = DenseIds::add(ps, rng, &format!("{prefix}.v1"), hidden, hidden);
        let v2 = DenseIds::add_with(
            ps,
            rng,
            &format!("{prefix}.v2"),
            hidden,
            1,
            Init::FanIn,
            Init::Zeros,
        );
        MixIds {
            state,
            hw1,
            hb1,
            hw2,
            v1,
            v2,
            n_agents,
            hidden,
        }
    }
}

/// Monotonic mix on the tape: hypernetwork weights pass through an absolute
/// value, so dQ_tot/dutility_i >= 0 for every agent.
pub fn mix_tape(t: &mut Tape, ps: &ParamSet, ids: MixIds, utilities: NodeId, state: NodeId) -> NodeId {
    let (n, mh) = (ids.n_agents, ids.hidden);
    let se = dense_tape(t, ps, ids.state, state, Activation::Relu);
    let w1raw = dense_tape(t, ps, ids.hw1, se, Activation::None);
    let w1 = t.abs(w1raw);
    let b1 = dense_tape(t, ps, ids.hb1, se, Activation::None);
    let mixed = t.rowwise_matmul(utilities, w1, n, mh);
    let pre = t.add(mixed, b1);
    let hid = t.elu(pre);
    let w2raw = dense_tape(t, ps, ids.hw2, se, Activation::None);
    let w2 = t.abs(w2raw);
    let prod = t.mul_elem(hid, w2);
    let dotv = t.row_sum(prod);
    let v1 = dense_tape(t, ps, ids.v1, se, Activation::Relu);
    let v = dense_tape(t, ps, ids.v2, v1, Activation::None);
    t.add(dotv, v)
}

/// Plain forward of the mixer for a batch of rows.
pub fn mix_eval(ps: &ParamSet, ids: MixIds, utilities: &TensorBuf, state: &TensorBuf) -> TensorBuf {
    let (n, mh) = (ids.n_agents, ids.hidden);
    let se = dense_eval(ps, ids.state, state, Activation::Relu);
    let w1 = dense_eval(ps, ids.hw1, &se, Activation::None);
    let b1 = dense_eval(ps, ids.hb1, &se, Activation::None);
    let w2 = dense_eval(ps, ids.hw2, &se, Activation::None);
    let v1 = dense_eval(ps, ids.v1, &se, Activation::Relu);
    let v = dense_eval(ps, ids.v2, &v1, Activation::None);
    let rows = utilities.rows();
    let mut out = TensorBuf::zeros(&[rows, 1]);
    for r in 0..rows {
        let u = utilities.row(r);
        let mut acc = 0.0;
        for j in 0..mh {
            let mut pre = b1.at(r, j);
            for (i, &ui) in u.iter().enumerate().take(n) {
                pre += ui * math::abs(w1.at(r, i * mh + j));
            }
            acc += math::elu(pre) * math::abs(w2.at(r, j));
        }
        out.set(r, 0, acc + v.at(r, 0));
    }
    out
}

/// Single-state mixing of per-agent utilities into a scalar Q_tot.
pub fn monotonic_mix(ps: &ParamSet, ids: MixIds, utilities: &[f64], state: &[f64]) -> f64 {
    let u = TensorBuf::from_vec(&[1, utilities.len()], utilities.to_vec());
    let s = TensorBuf::from_vec(&[1, state.len()], state.to_vec());
    mix_eval(ps, ids, &u, &s).at(0, 0)
}
