use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. Table sizes come from the [`crate::Vocabulary`]
/// and [`crate::Lookup`] the model is built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub vocab_size: usize,
    pub n_items: usize,
    pub n_users: usize,
    pub n_action_types: usize,
    pub n_time_buckets: usize,
    /// Weight of the attended action summary added to each consultation.
    pub lambda3_skip: f64,
    pub encoder_layers: usize,
    /// Tokens kept per text.
    pub max_tokens: usize,
    /// Cap on consultations, past queries and past items fed to the encoder.
    pub l_seq: usize,
    /// Cap on the most recent actions the consultations attend over.
    pub max_actions: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            vocab_size: 0,
            n_items: 0,
            n_users: 0,
            n_action_types: 3,
            n_time_buckets: 13,
            lambda3_skip: 1.0,
            encoder_layers: 1,
            max_tokens: 64,
            l_seq: 30,
            max_actions: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d == 0 {
            return Err("d must be positive".into());
        }
        if !(self.lambda3_skip >= 0.0) {
            return Err("lambda3_skip must be non-negative".into());
        }
        if self.n_action_types != 3 {
            return Err("n_action_types must be 3".into());
        }
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("n_items", self.n_items),
            ("n_users", self.n_users),
            ("n_time_buckets", self.n_time_buckets),
            ("encoder_layers", self.encoder_layers),
            ("max_tokens", self.max_tokens),
            ("l_seq", self.l_seq),
            ("max_actions", self.max_actions),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}
