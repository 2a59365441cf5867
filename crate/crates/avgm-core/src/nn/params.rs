//! Named parameter tensors with gradient and optimizer-state slots.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;
use crate::tensor::TensorBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in +-1/sqrt(fan_in); fan_in is the first shape dimension for
    /// matrices and 1 for vectors.
    FanIn,
    /// Uniform in +-bound.
    Uniform(f64),
    Zeros,
    Const(f64),
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: TensorBuf,
    pub grad: TensorBuf,
    /// RMSProp squared-gradient accumulator.
    pub acc: TensorBuf,
}

/// An ordered collection of named parameters. Order is insertion order and
/// is part of the deterministic behaviour of a run.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut Rng) -> ParamId {
        debug_assert!(
            self.find(name).is_none(),
            "duplicate parameter name {name}"
        );
        let mut value = TensorBuf::zeros(shape);
        match init {
            Init::Zeros => {}
            Init::Const(c) => value.fill(c),
            Init::FanIn => {
                let fan_in = if shape.len() >= 2 { shape[0] } else { 1 };
                let bound = 1.0 / math::sqrt(fan_in as f64);
                for v in value.data_mut() {
                    *v = rng.range_f64(-bound, bound);
                }
            }
            Init::Uniform(bound) => {
                for v in value.data_mut() {
                    *v = rng.range_f64(-bound, bound);
                }
            }
        }
        let grad = TensorBuf::zeros(shape);
        let acc = TensorBuf::zeros(shape);
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
            acc,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &TensorBuf {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut TensorBuf {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &TensorBuf {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut TensorBuf {
        &mut self.params[id.0].grad
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.iter_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Copies every parameter value from `other`; structures must match.
    pub fn copy_values_from(&mut self, other: &ParamSet) {
        assert_eq!(self.params.len(), other.params.len());
        for (dst, src) in self.params.iter_mut().zip(other.params.iter()) {
            debug_assert_eq!(dst.name, src.name);
            dst.value = src.value.clone();
        }
    }

    /// A structural clone with values copied and fresh optimizer state,
    /// used for target networks.
    pub fn target_copy(&self) -> ParamSet {
        let mut out = self.clone();
        for p in out.params.iter_mut() {
            p.grad.fill(0.0);
            p.acc.fill(0.0);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }
}
