use serde::{Deserialize, Serialize};

use crate::molgraph::AtomFeatureSchema;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width `d`.
    pub d_model: usize,
    /// Attention heads `h`; `d_model` must be divisible by it.
    pub heads: usize,
    /// Layers in each of the atom and motif encoders.
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Number of property tasks `c`.
    pub num_tasks: usize,
    /// Atom degrees above this share the last row of the degree table.
    pub max_atom_degree: usize,
    pub max_motif_degree: usize,
    /// Motif vocabulary size, excluding the UNK row.
    pub vocab_size: usize,
    pub ffn_multiplier: usize,
    pub dropout: f64,
    pub schema: AtomFeatureSchema,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            num_tasks: 1,
            max_atom_degree: 6,
            max_motif_degree: 8,
            vocab_size: 0,
            ffn_multiplier: 2,
            dropout: 0.1,
            schema: AtomFeatureSchema::default(),
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0
            || self.heads == 0
            || self.num_tasks == 0
            || self.ffn_multiplier == 0
            || self.decoder_layers == 0
        {
            return Err(
                "d_model, heads, num_tasks, decoder_layers and ffn_multiplier must be at least 1"
                    .into(),
            );
        }
        if self.d_model % self.heads != 0 {
            return Err(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
