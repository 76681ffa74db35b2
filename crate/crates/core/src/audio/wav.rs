//! RIFF/WAVE reading and writing, 16-bit PCM mono only.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Write a waveform as 16-bit PCM mono. Floats map to int16 by scaling with
/// 32768 and clamping, so a loaded file saves back bit-identically.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let n = w.len() as u32;
    let sample_rate = w.sample_rate();
    let data_bytes = n * 2;
    let byte_rate = sample_rate * 2;

    let mut out = Vec::with_capacity(44 + data_bytes as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes()); // fmt chunk size
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in w.samples() {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }

    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

fn field_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn field_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Read a 16-bit PCM mono WAV file. Any other layout is rejected with the
/// offending field named, never silently converted.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let bytes = fs::read(&path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE header".into()));
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = field_u32(&bytes, pos + 4) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(Error::Format(format!(
                "chunk {:?} overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk shorter than 16 bytes".into()));
                }
                let format = field_u16(&bytes, pos + 8);
                let channels = field_u16(&bytes, pos + 10);
                let rate = field_u32(&bytes, pos + 12);
                let bits = field_u16(&bytes, pos + 22);
                if format != 1 {
                    return Err(Error::Format(format!("audio format {} (want PCM=1)", format)));
                }
                if channels != 1 {
                    return Err(Error::Format(format!("channels {} (want mono=1)", channels)));
                }
                if bits != 16 {
                    return Err(Error::Format(format!("bits per sample {} (want 16)", bits)));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(&bytes[pos + 8..body_end]),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let sample_rate = sample_rate.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(Error::Format("odd data chunk length for 16-bit samples".into()));
    }
    let samples: Vec<f32> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
        .collect();
    Waveform::new(samples, sample_rate)
}
