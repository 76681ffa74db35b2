//! Named stack shapes: the published architectures (used mostly for
//! receptive-field and parameter-count arithmetic) and desk-scale variants
//! that train in minutes on a CPU.

use super::{StackConfig, StackMode};

/// Local model: 32 blocks, 4 repeats of 8 stages, filter 2. RF 1021
/// (quoted rounded as 1024).
pub fn appendix_local() -> StackConfig {
    StackConfig {
        repeats: 4,
        stages: 8,
        filter_len: 2,
        residual: 384,
        inner: 64,
        skip: 384,
        mode: StackMode::Causal,
        cond_channels: 256,
    }
}

/// Encoder / modulator: 16 blocks, 2 repeats of 8 stages, filter 3,
/// non-causal. RF 510 per side (quoted rounded as 512).
pub fn appendix_encoder() -> StackConfig {
    StackConfig {
        repeats: 2,
        stages: 8,
        filter_len: 3,
        residual: 256,
        inner: 256,
        skip: 256,
        mode: StackMode::NonCausal,
        cond_channels: 0,
    }
}

pub fn appendix_modulator() -> StackConfig {
    appendix_encoder()
}

/// Large unconditional prior: 30 blocks, 3 repeats of 10 stages, filter 3.
/// RF 6139 (quoted rounded as 6144).
pub fn appendix_large_prior() -> StackConfig {
    StackConfig {
        repeats: 3,
        stages: 10,
        filter_len: 3,
        residual: 512,
        inner: 512,
        skip: 512,
        mode: StackMode::Causal,
        cond_channels: 0,
    }
}

/// 60-block variant of the large prior. RF 12277 (quoted 12288).
pub fn appendix_very_large_prior() -> StackConfig {
    StackConfig { repeats: 6, ..appendix_large_prior() }
}

/// Thin prior with a very large RF: 39 blocks, 3 repeats of 13 stages,
/// filter 3, 192 channels. RF 49147 (quoted 49152).
pub fn appendix_thin_prior() -> StackConfig {
    StackConfig { repeats: 3, stages: 13, residual: 192, inner: 192, skip: 192, ..appendix_large_prior() }
}

/// Desk-scale local model, RF 127.
pub fn toy_local() -> StackConfig {
    StackConfig {
        repeats: 2,
        stages: 6,
        filter_len: 2,
        residual: 64,
        inner: 32,
        skip: 64,
        mode: StackMode::Causal,
        cond_channels: 32,
    }
}

/// Desk-scale prior, RF 511.
pub fn toy_prior() -> StackConfig {
    StackConfig {
        repeats: 2,
        stages: 8,
        filter_len: 2,
        residual: 64,
        inner: 32,
        skip: 64,
        mode: StackMode::Causal,
        cond_channels: 0,
    }
}

pub fn toy_encoder() -> StackConfig {
    StackConfig {
        repeats: 1,
        stages: 6,
        filter_len: 3,
        residual: 64,
        inner: 32,
        skip: 64,
        mode: StackMode::NonCausal,
        cond_channels: 0,
    }
}

pub fn toy_modulator() -> StackConfig {
    StackConfig { stages: 5, ..toy_encoder() }
}

/// Minimal shapes for fast tests: same dilation patterns, narrow channels.
pub fn micro_local() -> StackConfig {
    StackConfig {
        repeats: 1,
        stages: 6,
        filter_len: 2,
        residual: 32,
        inner: 16,
        skip: 32,
        mode: StackMode::Causal,
        cond_channels: 16,
    }
}

pub fn micro_encoder() -> StackConfig {
    StackConfig {
        repeats: 1,
        stages: 6,
        filter_len: 3,
        residual: 32,
        inner: 16,
        skip: 32,
        mode: StackMode::NonCausal,
        cond_channels: 0,
    }
}

pub fn micro_modulator() -> StackConfig {
    StackConfig { stages: 4, ..micro_encoder() }
}

pub fn micro_prior() -> StackConfig {
    StackConfig {
        repeats: 2,
        stages: 8,
        filter_len: 2,
        residual: 32,
        inner: 16,
        skip: 32,
        mode: StackMode::Causal,
        cond_channels: 0,
    }
}
