//! Deterministic synthetic training corpus: seeded note patterns rendered as
//! sums of exponentially decaying harmonics, with repeating 2-4 bar phrases
//! so there is structure beyond any local receptive field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mulaw_encode, Waveform, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpusConfig {
    pub seed: u64,
    pub num_pieces: usize,
    pub piece_seconds: f64,
    /// Notes per second (the beat grid).
    pub note_rate: f64,
    /// Pitch set as MIDI note numbers.
    pub scale: Vec<u8>,
    pub harmonics: usize,
    pub decay_seconds: f64,
    pub sample_rate: u32,
    /// Uniform dither amplitude added before normalisation.
    pub noise_level: f32,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            seed: 0,
            num_pieces: 64,
            piece_seconds: 30.0,
            note_rate: 3.0,
            scale: vec![60, 62, 64, 67, 69, 72, 74, 76],
            harmonics: 6,
            decay_seconds: 0.4,
            sample_rate: DEFAULT_SAMPLE_RATE,
            noise_level: 0.0,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_pieces == 0
            || self.piece_seconds <= 0.0
            || self.note_rate <= 0.0
            || self.harmonics == 0
            || self.decay_seconds <= 0.0
            || self.sample_rate == 0
        {
            return Err(Error::Config("corpus config fields must all be positive".into()));
        }
        if self.scale.is_empty() {
            return Err(Error::Config("corpus pitch set must be non-empty".into()));
        }
        Ok(())
    }
}

fn midi_to_hz(midi: u8) -> f64 {
    440.0 * 2f64.powf((midi as f64 - 69.0) / 12.0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one piece, derived so pieces can be rendered independently.
pub fn piece_seed(seed: u64, piece: usize) -> u64 {
    splitmix64(seed ^ splitmix64(piece as u64 + 1))
}

/// Additively render one decaying-harmonic note into `out`, starting at
/// `onset`. Amplitudes fall as 1/h and higher harmonics decay faster, with a
/// short linear attack to avoid clicks.
pub fn render_note(
    out: &mut [f32],
    onset: usize,
    freq_hz: f64,
    velocity: f64,
    phases: &[f64],
    sample_rate: u32,
    decay_seconds: f64,
) {
    let sr = sample_rate as f64;
    let attack = (0.002 * sr) as usize;
    let span = out.len().saturating_sub(onset);
    for (h, &phase) in phases.iter().enumerate() {
        let order = (h + 1) as f64;
        let f = freq_hz * order;
        if f >= sr / 2.0 {
            break; // stay below Nyquist
        }
        let amp = 0.5 * velocity / order;
        let tau = decay_seconds / order;
        let w = 2.0 * std::f64::consts::PI * f / sr;
        for i in 0..span {
            let t = i as f64 / sr;
            let env = (-t / tau).exp() * if i < attack { i as f64 / attack as f64 } else { 1.0 };
            out[onset + i] += (amp * env * (w * i as f64 + phase).sin()) as f32;
        }
    }
}

fn render_piece(config: &SyntheticCorpusConfig, piece: usize) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(piece_seed(config.seed, piece));
    let sr = config.sample_rate;
    let n = (config.piece_seconds * sr as f64).round() as usize;
    let mut out = vec![0.0f32; n];

    // A fixed phrase of 2-4 bars (4 beats each) repeats for the whole piece.
    let bars = rng.gen_range(2..=4usize);
    let beats = bars * 4;
    let phrase: Vec<Option<(u8, f64)>> = (0..beats)
        .map(|_| {
            if rng.gen_bool(0.1) {
                None // rest
            } else {
                let pitch = config.scale[rng.gen_range(0..config.scale.len())];
                let velocity = rng.gen_range(0.5..1.0);
                Some((pitch, velocity))
            }
        })
        .collect();

    let beat_len = sr as f64 / config.note_rate;
    let total_beats = (n as f64 / beat_len).floor() as usize;
    let tail = (4.0 * config.decay_seconds * sr as f64) as usize;
    for b in 0..total_beats {
        if let Some((pitch, velocity)) = phrase[b % beats] {
            let onset = (b as f64 * beat_len).round() as usize;
            if onset >= n {
                break;
            }
            let phases: Vec<f64> = (0..config.harmonics)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let end = (onset + tail).min(n);
            render_note(
                &mut out[..end],
                onset,
                midi_to_hz(pitch),
                velocity,
                &phases,
                sr,
                config.decay_seconds,
            );
        }
    }

    if config.noise_level > 0.0 {
        for s in out.iter_mut() {
            *s += rng.gen_range(-config.noise_level..config.noise_level);
        }
    }

    // Peak normalisation to 0.95.
    let peak = out.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let s = 0.95 / peak;
        for v in out.iter_mut() {
            *v *= s;
        }
    }
    Waveform::new(out, sr).expect("normalised synthesis stays in range")
}

/// Render the whole corpus. Deterministic in the seed; pieces are
/// independent of each other.
pub fn synth_corpus(config: &SyntheticCorpusConfig) -> Result<Vec<Waveform>> {
    config.validate()?;
    Ok((0..config.num_pieces).map(|p| render_piece(config, p)).collect())
}

/// Piece-level 99% / 1% train/eval split: the last max(1, n/100) pieces are
/// held out.
pub fn split_pieces(num_pieces: usize) -> (Vec<usize>, Vec<usize>) {
    let eval = (num_pieces / 100).max(1).min(num_pieces.saturating_sub(1)).max(1);
    let cut = num_pieces.saturating_sub(eval);
    ((0..cut).collect(), (cut..num_pieces).collect())
}

/// A dataset of discrete sequences over a fixed alphabet: mu-law audio at
/// level 1, quantiser codes above.
#[derive(Debug, Clone)]
pub struct SymbolCorpus {
    pub pieces: Vec<Vec<u16>>,
    pub alphabet: usize,
}

impl SymbolCorpus {
    pub fn new(pieces: Vec<Vec<u16>>, alphabet: usize) -> Result<Self> {
        for piece in &pieces {
            if let Some(&bad) = piece.iter().find(|&&s| s as usize >= alphabet) {
                return Err(Error::Input(format!(
                    "symbol {} out of alphabet range 0..{}",
                    bad, alphabet
                )));
            }
        }
        Ok(SymbolCorpus { pieces, alphabet })
    }

    pub fn from_waveforms(waves: &[Waveform]) -> Result<Self> {
        let pieces = waves
            .iter()
            .map(|w| Ok(mulaw_encode(w)?.to_symbols()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolCorpus { pieces, alphabet: 256 })
    }

    pub fn subset(&self, indices: &[usize]) -> SymbolCorpus {
        SymbolCorpus {
            pieces: indices.iter().map(|&i| self.pieces[i].clone()).collect(),
            alphabet: self.alphabet,
        }
    }

    /// Truncate every piece to a multiple of `m` (for hop-size chains).
    pub fn truncate_to_multiple(&mut self, m: usize) {
        for p in &mut self.pieces {
            p.truncate(p.len() / m * m);
        }
    }

    pub fn shortest_piece(&self) -> usize {
        self.pieces.iter().map(|p| p.len()).min().unwrap_or(0)
    }

    pub fn total_len(&self) -> usize {
        self.pieces.iter().map(|p| p.len()).sum()
    }
}

/// Plain-text manifest: piece id, derived seed, split assignment.
pub fn corpus_manifest(config: &SyntheticCorpusConfig) -> String {
    let (train, eval) = split_pieces(config.num_pieces);
    let mut s = String::new();
    s.push_str(&format!(
        "# synthetic corpus: seed={} pieces={} sample_rate={}\n",
        config.seed, config.num_pieces, config.sample_rate
    ));
    s.push_str("# piece_id\tseed\tsplit\n");
    for &i in train.iter().chain(eval.iter()) {
        let split = if train.contains(&i) { "train" } else { "eval" };
        s.push_str(&format!("{:04}\t{:016x}\t{}\n", i, piece_seed(config.seed, i), split));
    }
    s
}
