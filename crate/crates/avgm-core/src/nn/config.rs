use crate::{CoreError, Result};

/// Network and optimizer hyperparameters shared by every learner.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Width of the recurrent hidden state (and of the dense layer before it).
    pub rnn_hidden: usize,
    /// Hidden width of the monotonic mixing network.
    pub mixing_hidden: usize,
    /// Width of the action-encoder embeddings.
    pub encoder_hidden: usize,
    /// Hidden width of the value/policy/predictor heads.
    pub head_hidden: usize,
    /// Number of discrete action categories Z.
    pub z_categories: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            rnn_hidden: 64,
            mixing_hidden: 32,
            encoder_hidden: 64,
            head_hidden: 32,
            z_categories: 32,
            learning_rate: 5e-4,
            rms_decay: 0.75,
            rms_eps: 1e-5,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("rnn_hidden", self.rnn_hidden),
            ("mixing_hidden", self.mixing_hidden),
            ("encoder_hidden", self.encoder_hidden),
            ("head_hidden", self.head_hidden),
            ("z_categories", self.z_categories),
        ];
        for (name, w) in widths {
            if w < 1 {
                return Err(CoreError::Config(alloc::format!("{name} must be >= 1")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return Err(CoreError::Config("rms_decay must be in [0, 1)".into()));
        }
        Ok(())
    }
}
