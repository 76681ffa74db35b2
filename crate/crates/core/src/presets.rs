//! Named model presets.
//!
//! `t1r*` / `t2r*` mirror the published experiment rows (Table 1 on audio,
//! Table 2 on code sequences) and exist mainly so configuration arithmetic
//! can be audited; they are far too large to train at desk scale. The `toy-*`
//! family trains in minutes-to-hours on a CPU, `micro-*` in seconds-to-minutes
//! for tests.

use crate::ada::{AdaConfig, InputFormat};
use crate::quantize::{Projection, QuantizerConfig, QuantizerKind};
use crate::stack::{presets as stacks, StackConfig};
use crate::tensor::AdamConfig;

/// Default Polyak decay; toy presets override it so short runs converge.
pub const POLYAK_DECAY: f32 = 0.9995;
const TOY_POLYAK_DECAY: f32 = 0.995;

fn ada(
    encoder: StackConfig,
    modulator: StackConfig,
    local: StackConfig,
    quantizer: QuantizerConfig,
    hop: usize,
    input_format: InputFormat,
    alphabet: usize,
    polyak_decay: f32,
) -> AdaConfig {
    AdaConfig {
        encoder,
        modulator,
        local,
        quantizer,
        hop,
        input_format,
        decoder_input_format: InputFormat::OneHot,
        input_alphabet: alphabet,
        polyak_decay,
        adam: AdamConfig::default(),
    }
}

fn faithful(quantizer: QuantizerConfig, hop: usize, input_format: InputFormat) -> AdaConfig {
    ada(
        stacks::appendix_encoder(),
        stacks::appendix_modulator(),
        stacks::appendix_local(),
        quantizer,
        hop,
        input_format,
        256,
        POLYAK_DECAY,
    )
}

fn toy(quantizer: QuantizerConfig, input_format: InputFormat) -> AdaConfig {
    let mut local = stacks::toy_local();
    local.cond_channels = 32;
    ada(
        stacks::toy_encoder(),
        stacks::toy_modulator(),
        local,
        quantizer,
        8,
        input_format,
        256,
        TOY_POLYAK_DECAY,
    )
}

fn micro(quantizer: QuantizerConfig, input_format: InputFormat) -> AdaConfig {
    let mut local = stacks::micro_local();
    local.cond_channels = 16;
    ada(
        stacks::micro_encoder(),
        stacks::micro_modulator(),
        local,
        quantizer,
        8,
        input_format,
        256,
        TOY_POLYAK_DECAY,
    )
}

/// Second-level shapes: decoder RF measured in code timesteps, defaulting to
/// 64 after the published sweep.
fn toy_level2(quantizer: QuantizerConfig, alphabet: usize) -> AdaConfig {
    let mut local = StackConfig { repeats: 1, stages: 6, ..stacks::toy_local() };
    local.cond_channels = 32; // RF 64 codes
    ada(
        stacks::toy_encoder(),
        stacks::toy_modulator(),
        local,
        quantizer,
        8,
        InputFormat::OneHot,
        alphabet,
        TOY_POLYAK_DECAY,
    )
}

fn micro_level2(quantizer: QuantizerConfig, alphabet: usize) -> AdaConfig {
    let mut local = stacks::micro_local(); // RF 64 codes
    local.cond_channels = 16;
    ada(
        stacks::micro_encoder(),
        stacks::micro_modulator(),
        local,
        quantizer,
        8,
        InputFormat::OneHot,
        alphabet,
        TOY_POLYAK_DECAY,
    )
}

/// Resolve an autoencoder preset by name.
pub fn ada_preset(name: &str) -> Option<AdaConfig> {
    let vq256 = || QuantizerConfig::vq(256, 64);
    let amae256 = || QuantizerConfig::amae(256);
    Some(match name {
        // Audio-level rows.
        "t1r2-vqvae-hop8" => faithful(vq256(), 8, InputFormat::Continuous),
        "t1r3-vqvae-onehot-hop8" => faithful(vq256(), 8, InputFormat::OneHot),
        "t1r4-amae-hop8" => faithful(amae256(), 8, InputFormat::Continuous),
        "t1r5-amae-onehot-hop8" => faithful(amae256(), 8, InputFormat::OneHot),
        "t1r6-amae-softmax-hop8" => {
            let mut q = amae256();
            q.projection = Projection::Softmax;
            faithful(q, 8, InputFormat::OneHot)
        }
        "t1r7-vqvae-hop64" => faithful(vq256(), 64, InputFormat::Continuous),
        // Code-level rows (inputs are 256-symbol code sequences).
        "t2r2-vqvae-hop8" => {
            let mut c = faithful(vq256(), 8, InputFormat::OneHot);
            c.local = StackConfig { repeats: 1, stages: 6, ..stacks::appendix_local() }; // RF 64
            c
        }
        "t2r4-amae-rf64" => {
            let mut c = faithful(amae256(), 8, InputFormat::OneHot);
            c.local = StackConfig { repeats: 1, stages: 6, ..stacks::appendix_local() };
            c
        }
        // Desk-scale presets.
        "toy-vq" => toy(QuantizerConfig::vq(64, 32), InputFormat::Continuous),
        "toy-vq-onehot" => toy(QuantizerConfig::vq(64, 32), InputFormat::OneHot),
        "toy-amae" => toy(QuantizerConfig::amae(64), InputFormat::OneHot),
        "toy-amae-softmax" => {
            let mut q = QuantizerConfig::amae(64);
            q.projection = Projection::Softmax;
            toy(q, InputFormat::OneHot)
        }
        "toy-level2-vq" => toy_level2(QuantizerConfig::vq(32, 16), 64),
        "toy-level2-amae" => toy_level2(QuantizerConfig::amae(32), 64),
        "micro-vq" => micro(QuantizerConfig::vq(64, 16), InputFormat::Continuous),
        "micro-amae" => micro(QuantizerConfig::amae(64), InputFormat::OneHot),
        "micro-amae-softmax" => {
            let mut q = QuantizerConfig::amae(64);
            q.projection = Projection::Softmax;
            micro(q, InputFormat::OneHot)
        }
        "micro-level2-vq" => micro_level2(QuantizerConfig::vq(32, 8), 64),
        "micro-level2-amae" => micro_level2(QuantizerConfig::amae(32), 64),
        _ => return None,
    })
}

pub fn ada_preset_names() -> &'static [&'static str] {
    &[
        "t1r2-vqvae-hop8",
        "t1r3-vqvae-onehot-hop8",
        "t1r4-amae-hop8",
        "t1r5-amae-onehot-hop8",
        "t1r6-amae-softmax-hop8",
        "t1r7-vqvae-hop64",
        "t2r2-vqvae-hop8",
        "t2r4-amae-rf64",
        "toy-vq",
        "toy-vq-onehot",
        "toy-amae",
        "toy-amae-softmax",
        "toy-level2-vq",
        "toy-level2-amae",
        "micro-vq",
        "micro-amae",
        "micro-amae-softmax",
        "micro-level2-vq",
        "micro-level2-amae",
    ]
}

/// Resolve an unconditional prior stack preset by name.
pub fn prior_preset(name: &str) -> Option<StackConfig> {
    Some(match name {
        "t1r1-wavenet" => StackConfig { cond_channels: 0, ..stacks::appendix_large_prior() },
        "t3r2-very-large" => StackConfig { cond_channels: 0, ..stacks::appendix_very_large_prior() },
        "t3r3-thin-large-rf" => StackConfig { cond_channels: 0, ..stacks::appendix_thin_prior() },
        "toy-prior" => stacks::toy_prior(),
        "toy-local-prior" => StackConfig { cond_channels: 0, ..stacks::toy_local() },
        "micro-prior" => stacks::micro_prior(),
        "micro-local-prior" => StackConfig { cond_channels: 0, ..stacks::micro_local() },
        _ => return None,
    })
}

pub fn prior_preset_names() -> &'static [&'static str] {
    &[
        "t1r1-wavenet",
        "t3r2-very-large",
        "t3r3-thin-large-rf",
        "toy-prior",
        "toy-local-prior",
        "micro-prior",
        "micro-local-prior",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in ada_preset_names() {
            let c = ada_preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("preset {name}: {e}"));
        }
        for name in prior_preset_names() {
            let c = prior_preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("preset {name}: {e}"));
        }
        assert!(ada_preset("no-such").is_none());
    }

    #[test]
    fn faithful_preset_bitrate_is_one_bit_per_sample() {
        // 8-bit codes at hop 8.
        let c = ada_preset("t1r2-vqvae-hop8").unwrap();
        assert!((c.bits_per_input_step() - 1.0).abs() < 1e-12);
        // Hop 64 variant: 0.125 bits per sample.
        let c = ada_preset("t1r7-vqvae-hop64").unwrap();
        assert!((c.bits_per_input_step() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn level2_decoder_rf_is_64_codes() {
        let c = ada_preset("toy-level2-vq").unwrap();
        assert_eq!(c.local.receptive_field().past, 64);
        let c = ada_preset("t2r4-amae-rf64").unwrap();
        assert_eq!(c.local.receptive_field().past, 64);
    }
}
