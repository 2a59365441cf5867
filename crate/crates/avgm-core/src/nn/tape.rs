//! Reverse-mode gradient accumulation over batched matrix operations.
//!
//! A `Tape` records every forward operation eagerly; `backward` walks the
//! node list in reverse and accumulates gradients into the originating
//! `ParamSet`. Node granularity is whole-matrix operations, so the graph for
//! one loss evaluation stays small even for recurrent unrolls. Whether a
//! node can influence any parameter is tracked at construction, so constant
//! subgraphs (targets, masks, inputs) cost nothing on the way back.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::nn::params::{ParamId, ParamSet};
use crate::tensor::{matmul_at_into, matmul_bt_into, TensorBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    /// Adds a 1-D bias to every row.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    /// k * x + c, elementwise; only the slope matters for the backward pass.
    Affine(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    Abs(NodeId),
    ConcatCols(Vec<NodeId>),
    /// Vertical stack of row blocks with equal column counts.
    ConcatRows(Vec<NodeId>),
    /// Same data, new shape (row-major order preserved).
    Reshape(NodeId),
    /// View of the first k rows.
    PrefixRows(NodeId, usize),
    SoftmaxRows(NodeId),
    /// out[r][0] = x[r][idx[r]].
    SelectCols(NodeId, Vec<usize>),
    /// Per-row matrix product: u (S x n), w (S x n*m) -> (S x m).
    RowwiseMatMul {
        u: NodeId,
        w: NodeId,
        n: usize,
        m: usize,
    },
    /// Row sums -> (S x 1).
    RowSum(NodeId),
    /// Sum of all entries -> (1 x 1).
    SumAll(NodeId),
    /// Scaled-dot attention pooling over contiguous element segments.
    /// Row r attends over elems[segs[r].0 .. segs[r].1]. Softmax weights are
    /// cached during the forward pass for the backward pass.
    SegmentAttnPool {
        query: NodeId,
        elems: NodeId,
        segs: Vec<(u32, u32)>,
        weights: Vec<f64>,
    },
    /// out[s][0] = sum of x[r][0] over rows r in segs[s].
    SegmentSumRows(NodeId, Vec<(u32, u32)>),
}

struct Node {
    value: TensorBuf,
    grad: Option<TensorBuf>,
    /// Whether any parameter is reachable through this node.
    needs: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn grad_of(n: &mut Node) -> &mut TensorBuf {
    if n.grad.is_none() {
        n.grad = Some(TensorBuf::zeros(n.value.shape()));
    }
    n.grad.as_mut().unwrap()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &TensorBuf {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value.data()[0]
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs
    }

    fn push(&mut self, value: TensorBuf, op: Op) -> NodeId {
        let needs = match &op {
            Op::Const => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::MulElem(a, b)
            | Op::RowwiseMatMul { u: a, w: b, .. }
            | Op::SegmentAttnPool {
                query: a, elems: b, ..
            } => self.needs(*a) || self.needs(*b),
            Op::Affine(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Elu(a)
            | Op::Abs(a)
            | Op::Reshape(a)
            | Op::PrefixRows(a, _)
            | Op::SoftmaxRows(a)
            | Op::SelectCols(a, _)
            | Op::RowSum(a)
            | Op::SumAll(a)
            | Op::SegmentSumRows(a, _) => self.needs(*a),
            Op::ConcatCols(parts) | Op::ConcatRows(parts) => {
                parts.iter().any(|p| self.needs(*p))
            }
        };
        self.nodes.push(Node {
            value,
            grad: None,
            needs,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: TensorBuf) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, ps: &ParamSet, id: ParamId) -> NodeId {
        self.push(ps.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        debug_assert_eq!(av.cols(), bv.len());
        let mut value = av.clone();
        let c = value.cols();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            for j in 0..c {
                row[j] += bv.data()[j];
            }
        }
        self.push(value, Op::AddRow(a, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_values(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_values(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_values(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        self.push(value, Op::MulElem(a, b))
    }

    pub fn affine(&mut self, a: NodeId, k: f64, c: f64) -> NodeId {
        let value = map_values(&self.nodes[a.0].value, |x| k * x + c);
        self.push(value, Op::Affine(a, k))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = map_values(&self.nodes[a.0].value, math::relu);
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = map_values(&self.nodes[a.0].value, math::sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = map_values(&self.nodes[a.0].value, math::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let value = map_values(&self.nodes[a.0].value, math::elu);
        self.push(value, Op::Elu(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = map_values(&self.nodes[a.0].value, math::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        debug_assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut value = TensorBuf::zeros(&[rows, total]);
        let mut off = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            debug_assert_eq!(pv.rows(), rows);
            let c = pv.cols();
            for r in 0..rows {
                value.row_mut(r)[off..off + c].copy_from_slice(pv.row(r));
            }
            off += c;
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        debug_assert!(!parts.is_empty());
        let cols = self.nodes[parts[0].0].value.cols();
        let rows: usize = parts.iter().map(|p| self.nodes[p.0].value.rows()).sum();
        let mut value = TensorBuf::zeros(&[rows, cols]);
        let mut off = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            debug_assert_eq!(pv.cols(), cols);
            value.data_mut()[off..off + pv.len()].copy_from_slice(pv.data());
            off += pv.len();
        }
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let av = &self.nodes[a.0].value;
        debug_assert_eq!(av.len(), shape.iter().product::<usize>());
        let value = TensorBuf::from_vec(shape, av.data().to_vec());
        self.push(value, Op::Reshape(a))
    }

    pub fn prefix_rows(&mut self, a: NodeId, k: usize) -> NodeId {
        let av = &self.nodes[a.0].value;
        debug_assert!(k <= av.rows());
        let c = av.cols();
        let mut value = TensorBuf::zeros(&[k, c]);
        value.data_mut().copy_from_slice(&av.data()[..k * c]);
        self.push(value, Op::PrefixRows(a, k))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        for r in 0..value.rows() {
            math::softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn select_cols(&mut self, a: NodeId, idx: Vec<usize>) -> NodeId {
        let av = &self.nodes[a.0].value;
        debug_assert_eq!(av.rows(), idx.len());
        let mut value = TensorBuf::zeros(&[idx.len(), 1]);
        for (r, &i) in idx.iter().enumerate() {
            value.set(r, 0, av.at(r, i));
        }
        self.push(value, Op::SelectCols(a, idx))
    }

    pub fn rowwise_matmul(&mut self, u: NodeId, w: NodeId, n: usize, m: usize) -> NodeId {
        let uv = &self.nodes[u.0].value;
        let wv = &self.nodes[w.0].value;
        let s = uv.rows();
        debug_assert_eq!(uv.cols(), n);
        debug_assert_eq!(wv.rows(), s);
        debug_assert_eq!(wv.cols(), n * m);
        let mut value = TensorBuf::zeros(&[s, m]);
        for r in 0..s {
            let urow = uv.row(r);
            let wrow = wv.row(r);
            let orow = value.row_mut(r);
            for (i, &uv_i) in urow.iter().enumerate() {
                let wslice = &wrow[i * m..(i + 1) * m];
                for (o, &wv_ij) in orow.iter_mut().zip(wslice.iter()) {
                    *o += uv_i * wv_ij;
                }
            }
        }
        self.push(value, Op::RowwiseMatMul { u, w, n, m })
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let mut value = TensorBuf::zeros(&[av.rows(), 1]);
        for r in 0..av.rows() {
            value.set(r, 0, av.row(r).iter().sum());
        }
        self.push(value, Op::RowSum(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(TensorBuf::scalar(total), Op::SumAll(a))
    }

    /// Attention pooling; elements of each segment must already be in the
    /// caller's canonical (hash-sorted) order. Empty segments pool to zero.
    pub fn segment_attn_pool(
        &mut self,
        query: NodeId,
        elems: NodeId,
        segs: Vec<(u32, u32)>,
    ) -> NodeId {
        let qv = &self.nodes[query.0].value;
        let ev = &self.nodes[elems.0].value;
        let d = qv.cols();
        debug_assert_eq!(ev.cols(), d);
        debug_assert_eq!(qv.rows(), segs.len());
        let scale = 1.0 / math::sqrt(d as f64);
        let mut value = TensorBuf::zeros(&[segs.len(), d]);
        let mut weights = Vec::new();
        for (r, &(s, e)) in segs.iter().enumerate() {
            let (s, e) = (s as usize, e as usize);
            if e == s {
                continue;
            }
            let qrow = qv.row(r);
            let mut w: Vec<f64> = (s..e).map(|k| dot(qrow, ev.row(k)) * scale).collect();
            math::softmax_in_place(&mut w);
            let orow = value.row_mut(r);
            for (k, &wk) in (s..e).zip(w.iter()) {
                let erow = ev.row(k);
                for (o, &x) in orow.iter_mut().zip(erow.iter()) {
                    *o += wk * x;
                }
            }
            weights.extend_from_slice(&w);
        }
        self.push(
            value,
            Op::SegmentAttnPool {
                query,
                elems,
                segs,
                weights,
            },
        )
    }

    pub fn segment_sum_rows(&mut self, a: NodeId, segs: Vec<(u32, u32)>) -> NodeId {
        let av = &self.nodes[a.0].value;
        debug_assert_eq!(av.cols(), 1);
        let mut value = TensorBuf::zeros(&[segs.len(), 1]);
        for (r, &(s, e)) in segs.iter().enumerate() {
            let mut acc = 0.0;
            for i in s as usize..e as usize {
                acc += av.at(i, 0);
            }
            value.set(r, 0, acc);
        }
        self.push(value, Op::SegmentSumRows(a, segs))
    }

    /// Backpropagates from a scalar loss node and accumulates parameter
    /// gradients into `ps.grad`. Gradients only flow into subgraphs that can
    /// reach a parameter.
    pub fn backward(&mut self, loss: NodeId, ps: &mut ParamSet) {
        debug_assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        if !self.nodes[loss.0].needs {
            return;
        }
        self.nodes[loss.0].grad = Some(TensorBuf::from_vec(&[1, 1], vec![1.0]));
        for i in (0..self.nodes.len()).rev() {
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            let Some(g) = node.grad.take() else { continue };
            match &node.op {
                Op::Const => {}
                Op::Param(pid) => {
                    let dst = ps.grad_mut(*pid);
                    for (d, s) in dst.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                }
                Op::MatMul(a, b) => {
                    let (n, m) = (node.value.rows(), node.value.cols());
                    let k = head[a.0].value.cols();
                    if head[a.0].needs {
                        let bval = head[b.0].value.data().to_vec();
                        let ga = grad_of(&mut head[a.0]);
                        matmul_bt_into(g.data(), n, m, &bval, k, ga.data_mut());
                    }
                    if head[b.0].needs {
                        let aval = head[a.0].value.data().to_vec();
                        let gb = grad_of(&mut head[b.0]);
                        matmul_at_into(&aval, n, k, g.data(), m, gb.data_mut());
                    }
                }
                Op::AddRow(a, bias) => {
                    if head[a.0].needs {
                        accumulate(grad_of(&mut head[a.0]).data_mut(), g.data());
                    }
                    if head[bias.0].needs {
                        let c = node.value.cols();
                        let rows = node.value.rows();
                        let gb = grad_of(&mut head[bias.0]).data_mut();
                        for r in 0..rows {
                            let grow = &g.data()[r * c..(r + 1) * c];
                            for (dst, src) in gb.iter_mut().zip(grow.iter()) {
                                *dst += src;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    if head[a.0].needs {
                        accumulate(grad_of(&mut head[a.0]).data_mut(), g.data());
                    }
                    if head[b.0].needs {
                        accumulate(grad_of(&mut head[b.0]).data_mut(), g.data());
                    }
                }
                Op::Sub(a, b) => {
                    if head[a.0].needs {
                        accumulate(grad_of(&mut head[a.0]).data_mut(), g.data());
                    }
                    if head[b.0].needs {
                        let gb = grad_of(&mut head[b.0]).data_mut();
                        for (dst, src) in gb.iter_mut().zip(g.data()) {
                            *dst -= src;
                        }
                    }
                }
                Op::MulElem(a, b) => {
                    let (a, b) = (*a, *b);
                    if a == b {
                        if head[a.0].needs {
                            let av = head[a.0].value.data().to_vec();
                            let ga = grad_of(&mut head[a.0]).data_mut();
                            for ((dst, &gg), &x) in ga.iter_mut().zip(g.data()).zip(av.iter()) {
                                *dst += 2.0 * gg * x;
                            }
                        }
                    } else {
                        if head[a.0].needs {
                            let bv = head[b.0].value.data().to_vec();
                            let ga = grad_of(&mut head[a.0]).data_mut();
                            for ((dst, &gg), &y) in ga.iter_mut().zip(g.data()).zip(bv.iter()) {
                                *dst += gg * y;
                            }
                        }
                        if head[b.0].needs {
                            let av = head[a.0].value.data().to_vec();
                            let gb = grad_of(&mut head[b.0]).data_mut();
                            for ((dst, &gg), &x) in gb.iter_mut().zip(g.data()).zip(av.iter()) {
                                *dst += gg * x;
                            }
                        }
                    }
                }
                Op::Affine(a, k) => {
                    if head[a.0].needs {
                        let k = *k;
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for (dst, &gg) in ga.iter_mut().zip(g.data()) {
                            *dst += k * gg;
                        }
                    }
                }
                Op::Relu(a) => {
                    if head[a.0].needs {
                        let xs = head[a.0].value.data().to_vec();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for ((dst, &gg), &x) in ga.iter_mut().zip(g.data()).zip(xs.iter()) {
                            if x > 0.0 {
                                *dst += gg;
                            }
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    if head[a.0].needs {
                        let ys = node.value.data();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for ((dst, &gg), &y) in ga.iter_mut().zip(g.data()).zip(ys.iter()) {
                            *dst += gg * y * (1.0 - y);
                        }
                    }
                }
                Op::Tanh(a) => {
                    if head[a.0].needs {
                        let ys = node.value.data();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for ((dst, &gg), &y) in ga.iter_mut().zip(g.data()).zip(ys.iter()) {
                            *dst += gg * (1.0 - y * y);
                        }
                    }
                }
                Op::Elu(a) => {
                    if head[a.0].needs {
                        let xs = head[a.0].value.data().to_vec();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for ((dst, &gg), &x) in ga.iter_mut().zip(g.data()).zip(xs.iter()) {
                            *dst += gg * math::elu_grad(x);
                        }
                    }
                }
                Op::Abs(a) => {
                    if head[a.0].needs {
                        let xs = head[a.0].value.data().to_vec();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for ((dst, &gg), &x) in ga.iter_mut().zip(g.data()).zip(xs.iter()) {
                            let s = if x > 0.0 {
                                1.0
                            } else if x < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            *dst += gg * s;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let gcols = node.value.cols();
                    let mut off = 0;
                    for p in parts {
                        let c = head[p.0].value.cols();
                        if head[p.0].needs {
                            let gp = grad_of(&mut head[p.0]).data_mut();
                            for r in 0..rows {
                                let src = &g.data()[r * gcols + off..r * gcols + off + c];
                                let dst = &mut gp[r * c..(r + 1) * c];
                                for (d, s) in dst.iter_mut().zip(src.iter()) {
                                    *d += s;
                                }
                            }
                        }
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = head[p.0].value.len();
                        if head[p.0].needs {
                            let gp = grad_of(&mut head[p.0]).data_mut();
                            accumulate(gp, &g.data()[off..off + len]);
                        }
                        off += len;
                    }
                }
                Op::Reshape(a) => {
                    if head[a.0].needs {
                        accumulate(grad_of(&mut head[a.0]).data_mut(), g.data());
                    }
                }
                Op::PrefixRows(a, k) => {
                    if head[a.0].needs {
                        let c = node.value.cols();
                        let k = *k;
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        accumulate(&mut ga[..k * c], g.data());
                    }
                }
                Op::SoftmaxRows(a) => {
                    if head[a.0].needs {
                        let ys = &node.value;
                        let c = ys.cols();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for r in 0..ys.rows() {
                            let yrow = ys.row(r);
                            let grow = &g.data()[r * c..(r + 1) * c];
                            let dot: f64 =
                                yrow.iter().zip(grow.iter()).map(|(y, gg)| y * gg).sum();
                            let dst = &mut ga[r * c..(r + 1) * c];
                            for ((d, &y), &gg) in dst.iter_mut().zip(yrow.iter()).zip(grow.iter())
                            {
                                *d += y * (gg - dot);
                            }
                        }
                    }
                }
                Op::SelectCols(a, idx) => {
                    if head[a.0].needs {
                        let c = head[a.0].value.cols();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for (r, &i) in idx.iter().enumerate() {
                            ga[r * c + i] += g.at(r, 0);
                        }
                    }
                }
                Op::RowwiseMatMul { u, w, n, m } => {
                    let (n, m) = (*n, *m);
                    let s = node.value.rows();
                    if head[u.0].needs {
                        let wval = head[w.0].value.data().to_vec();
                        let gu = grad_of(&mut head[u.0]).data_mut();
                        for r in 0..s {
                            let grow = &g.data()[r * m..(r + 1) * m];
                            for i in 0..n {
                                let wslice = &wval[r * n * m + i * m..r * n * m + (i + 1) * m];
                                let mut acc = 0.0;
                                for (gg, wv) in grow.iter().zip(wslice.iter()) {
                                    acc += gg * wv;
                                }
                                gu[r * n + i] += acc;
                            }
                        }
                    }
                    if head[w.0].needs {
                        let uval = head[u.0].value.data().to_vec();
                        let gw = grad_of(&mut head[w.0]).data_mut();
                        for r in 0..s {
                            let grow = &g.data()[r * m..(r + 1) * m];
                            for i in 0..n {
                                let ui = uval[r * n + i];
                                if ui == 0.0 {
                                    continue;
                                }
                                let dst = &mut gw[r * n * m + i * m..r * n * m + (i + 1) * m];
                                for (d, &gg) in dst.iter_mut().zip(grow.iter()) {
                                    *d += ui * gg;
                                }
                            }
                        }
                    }
                }
                Op::RowSum(a) => {
                    if head[a.0].needs {
                        let c = head[a.0].value.cols();
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for r in 0..node.value.rows() {
                            let gg = g.at(r, 0);
                            for d in ga[r * c..(r + 1) * c].iter_mut() {
                                *d += gg;
                            }
                        }
                    }
                }
                Op::SumAll(a) => {
                    if head[a.0].needs {
                        let gg = g.data()[0];
                        for d in grad_of(&mut head[a.0]).data_mut().iter_mut() {
                            *d += gg;
                        }
                    }
                }
                Op::SegmentAttnPool {
                    query,
                    elems,
                    segs,
                    weights,
                } => {
                    let d = node.value.cols();
                    let scale = 1.0 / math::sqrt(d as f64);
                    let qval = head[query.0].value.data().to_vec();
                    let eval = head[elems.0].value.data().to_vec();
                    let mut gq = vec![0.0; qval.len()];
                    let mut ge = vec![0.0; eval.len()];
                    let mut woff = 0;
                    for (r, &(s, e)) in segs.iter().enumerate() {
                        let (s, e) = (s as usize, e as usize);
                        if e == s {
                            continue;
                        }
                        let cnt = e - s;
                        let w = &weights[woff..woff + cnt];
                        woff += cnt;
                        let grow = &g.data()[r * d..(r + 1) * d];
                        let qrow = &qval[r * d..(r + 1) * d];
                        for (k, &wk) in (s..e).zip(w.iter()) {
                            let dst = &mut ge[k * d..(k + 1) * d];
                            for (dd, &gg) in dst.iter_mut().zip(grow.iter()) {
                                *dd += wk * gg;
                            }
                        }
                        if cnt == 1 {
                            continue; // softmax weight is constant 1
                        }
                        let gdotv: Vec<f64> = (s..e)
                            .map(|k| dot(grow, &eval[k * d..(k + 1) * d]))
                            .collect();
                        let mean: f64 = w.iter().zip(gdotv.iter()).map(|(wk, gv)| wk * gv).sum();
                        for ((k, &wk), &gv) in (s..e).zip(w.iter()).zip(gdotv.iter()) {
                            let dscore = wk * (gv - mean) * scale;
                            let erow = &eval[k * d..(k + 1) * d];
                            for j in 0..d {
                                gq[r * d + j] += dscore * erow[j];
                                ge[k * d + j] += dscore * qrow[j];
                            }
                        }
                    }
                    if head[query.0].needs {
                        accumulate(grad_of(&mut head[query.0]).data_mut(), &gq);
                    }
                    if head[elems.0].needs {
                        accumulate(grad_of(&mut head[elems.0]).data_mut(), &ge);
                    }
                }
                Op::SegmentSumRows(a, segs) => {
                    if head[a.0].needs {
                        let ga = grad_of(&mut head[a.0]).data_mut();
                        for (r, &(s, e)) in segs.iter().enumerate() {
                            let gg = g.at(r, 0);
                            for i in s as usize..e as usize {
                                ga[i] += gg;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

fn map_values(t: &TensorBuf, f: impl Fn(f64) -> f64) -> TensorBuf {
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

fn zip_values(a: &TensorBuf, b: &TensorBuf, f: impl Fn(f64, f64) -> f64) -> TensorBuf {
    debug_assert_eq!(a.shape(), b.shape());
    let mut out = a.clone();
    for (v, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *v = f(*v, y);
    }
    out
}
