//! Minimal differentiable-computation substrate: dense layers, a GRU cell,
//! scaled-dot attention pooling, a state-conditioned monotonic mixer and an
//! RMSProp-style optimizer, with reverse-mode gradient accumulation.

pub mod config;
pub mod layers;
pub mod optimizer;
pub mod params;
pub mod tape;

pub use config::NetConfig;
pub use layers::{
    attention_pool, canonical_element_order, dense_eval, dense_forward, dense_tape, element_hash,
    gru_eval, gru_step, gru_tape, mix_eval, mix_tape, monotonic_mix, Activation, DenseIds, GruIds,
    MixIds,
};
pub use optimizer::optimizer_step;
pub use params::{Init, Param, ParamId, ParamSet};
pub use tape::{NodeId, Tape};
