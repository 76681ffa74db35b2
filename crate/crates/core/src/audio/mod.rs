//! Audio companding, WAV files, and the deterministic synthetic corpus.

mod corpus;
mod mulaw;
mod sampler;
mod wav;

pub use corpus::{
    corpus_manifest, piece_seed, render_note, split_pieces, synth_corpus, SymbolCorpus,
    SyntheticCorpusConfig,
};
pub use mulaw::{code_to_companded, mulaw_decode, mulaw_encode, MU};
pub use sampler::{ExcerptBatch, ExcerptSampler};
pub use wav::{load_wav, save_wav};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Continuous audio, every sample in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("waveform must contain at least one sample".into()));
        }
        if let Some(&bad) = samples.iter().find(|s| !(-1.0..=1.0).contains(*s) || !s.is_finite()) {
            return Err(Error::Input(format!("sample {} outside [-1, 1]", bad)));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// 8-bit mu-law companded audio.
#[derive(Debug, Clone, PartialEq)]
pub struct MuLawSequence {
    codes: Vec<u8>,
    sample_rate: u32,
}

impl MuLawSequence {
    pub fn new(codes: Vec<u8>, sample_rate: u32) -> Self {
        MuLawSequence { codes, sample_rate }
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn to_symbols(&self) -> Vec<u16> {
        self.codes.iter().map(|&c| c as u16).collect()
    }
}
