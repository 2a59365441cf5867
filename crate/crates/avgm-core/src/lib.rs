//! Core algorithms for a cooperative multi-agent reinforcement learning lab.
//!
//! The crate is organised around a small differentiable-computation substrate
//! ([`nn`]), deterministic environments ([`env`]), the AVGM learner ([`avgm`])
//! with its action encoder ([`encoder`]), monotonic baselines ([`baselines`]),
//! exact analytic machinery for the underlying decomposition theory
//! ([`oracle`]) and the training harness ([`harness`]).
//!
//! Everything in here is `no_std` + `alloc`: file formats, the CLI and run
//! directories live in the companion `avgm-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod avgm;
pub mod baselines;
pub mod encoder;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, Result};
pub use tensor::TensorBuf;
