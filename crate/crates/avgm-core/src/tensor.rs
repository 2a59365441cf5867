//! Flat row-major tensors of `f64`.

use alloc::vec;
use alloc::vec::Vec;

/// A shaped buffer of 64-bit floats. Row-major; `product(shape) == data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBuf {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorBuf {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        TensorBuf {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        TensorBuf {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(x: f64) -> Self {
        TensorBuf {
            shape: vec![1, 1],
            data: vec![x],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows of a 2-D tensor (a 1-D tensor is a single row).
    #[inline]
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    /// Columns of a 2-D tensor (or the length of a 1-D tensor).
    #[inline]
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        for x in self.data.iter_mut() {
            *x = v;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// C = A * B for 2-D tensors, accumulating into a fresh buffer.
    pub fn matmul(&self, other: &TensorBuf) -> TensorBuf {
        let (n, k) = (self.rows(), self.cols());
        let (k2, m) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = TensorBuf::zeros(&[n, m]);
        matmul_into(self.data(), n, k, other.data(), m, out.data_mut());
        out
    }
}

/// out[n x m] += a[n x k] * b[k x m]; `out` must be zeroed by the caller
/// when a plain product is wanted. Loop order keeps `b` row-contiguous.
pub fn matmul_into(a: &[f64], n: usize, k: usize, b: &[f64], m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// out[n x k] += g[n x m] * b^T[m x k] (gradient wrt the left factor).
pub fn matmul_bt_into(g: &[f64], n: usize, m: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(g.len(), n * m);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * k);
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * m..(p + 1) * m];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow.iter()) {
                acc += gv * bv;
            }
            *o += acc;
        }
    }
}

/// out[k x m] += a^T[k x n] * g[n x m] (gradient wrt the right factor).
pub fn matmul_at_into(a: &[f64], n: usize, k: usize, g: &[f64], m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(g.len(), n * m);
    debug_assert_eq!(out.len(), k * m);
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow.iter()) {
                *o += av * gv;
            }
        }
    }
}
