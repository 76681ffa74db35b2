//! The autoregressive discrete autoencoder: a non-causal encoder pools into
//! a discrete bottleneck; the decoder is a causal local model steered by a
//! modulator that turns the quantised codes into per-block biases.

mod model;

pub use model::{collapse_threshold, AdaModel, CollapseEvent, EvalStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::QuantizerConfig;
use crate::stack::{StackConfig, StackMode};
use crate::tensor::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// Scalar channel: symbol index mapped affinely onto [-1, 1].
    Continuous,
    /// Full symbol identity through an embedding table (the one-hot path).
    OneHot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaConfig {
    pub encoder: StackConfig,
    pub modulator: StackConfig,
    pub local: StackConfig,
    pub quantizer: QuantizerConfig,
    /// Ratio between input and code sample rates.
    pub hop: usize,
    /// Encoder input representation.
    pub input_format: InputFormat,
    /// Decoder input representation (embedding by default).
    pub decoder_input_format: InputFormat,
    /// Symbol alphabet of the modelled sequence (256 for mu-law audio,
    /// k of the level below for code sequences).
    pub input_alphabet: usize,
    pub polyak_decay: f32,
    pub adam: AdamConfig,
}

impl AdaConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.modulator.validate()?;
        self.local.validate()?;
        self.quantizer.validate()?;
        if self.hop == 0 {
            return Err(Error::Config("hop size must be >= 1".into()));
        }
        if self.input_alphabet < 2 || self.input_alphabet > u16::MAX as usize {
            return Err(Error::Config(format!(
                "input alphabet {} out of supported range",
                self.input_alphabet
            )));
        }
        if self.encoder.mode != StackMode::NonCausal {
            return Err(Error::Config("encoder stack must be non-causal".into()));
        }
        if self.modulator.mode != StackMode::NonCausal {
            return Err(Error::Config("modulator stack must be non-causal".into()));
        }
        if self.local.mode != StackMode::Causal {
            return Err(Error::Config("local model stack must be causal".into()));
        }
        if self.local.cond_channels == 0 {
            return Err(Error::Config(
                "local model needs cond_channels > 0 to receive modulator biases".into(),
            ));
        }
        if self.encoder.cond_channels != 0 || self.modulator.cond_channels != 0 {
            return Err(Error::Config("encoder and modulator are unconditional stacks".into()));
        }
        // The bottleneck bitrate is fixed by the config.
        let _ = self.bits_per_input_step();
        Ok(())
    }

    /// Code bitrate: log2(k) / hop bits per input timestep.
    pub fn bits_per_input_step(&self) -> f64 {
        (self.quantizer.k as f64).log2() / self.hop as f64
    }

    /// Minimum excerpt length with full decoder context for every target.
    pub fn min_excerpt(&self) -> usize {
        self.local.receptive_field().past + self.hop
    }

    /// Encoder receptive field measured in code timesteps: how far one code
    /// can see, converted to the code sample rate.
    pub fn encoder_rf_codes(&self) -> usize {
        let side = self.encoder.receptive_field().past;
        ((side + self.hop) as f64 / self.hop as f64).floor() as usize
    }
}

/// Per-term losses of one training step. `total` recombines exactly as the
/// graph computed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Nats per timestep.
    pub nll: f32,
    pub commitment: f32,
    pub diversity: f32,
    pub total: f32,
}
