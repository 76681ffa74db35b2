//! Mu-law companding to 8 bits (256 levels).
//!
//! Encode: y = sign(x) * ln(1 + MU*|x|) / ln(1 + MU), then
//! code = floor((y + 1) / 2 * 255 + 0.5). Decode dequantises to the level
//! centre y = code / 127.5 - 1 and inverts the companding curve. With this
//! rounding, x = 0 lands on code 128 and the endpoints map to 0 / 255.

use super::{MuLawSequence, Waveform};
use crate::error::{Error, Result};

pub const MU: f64 = 255.0;

fn compand(x: f64) -> f64 {
    x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln()
}

fn expand(y: f64) -> f64 {
    y.signum() * ((1.0 + MU).powf(y.abs()) - 1.0) / MU
}

pub fn encode_sample(x: f32) -> u8 {
    let y = compand(x as f64);
    ((y + 1.0) / 2.0 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn decode_sample(code: u8) -> f32 {
    let y = code as f64 / 127.5 - 1.0;
    expand(y) as f32
}

pub fn mulaw_encode(w: &Waveform) -> Result<MuLawSequence> {
    // Waveform construction already guarantees the [-1, 1] range.
    let codes = w.samples().iter().map(|&x| encode_sample(x)).collect();
    Ok(MuLawSequence::new(codes, w.sample_rate()))
}

pub fn mulaw_decode(m: &MuLawSequence) -> Result<Waveform> {
    if m.is_empty() {
        return Err(Error::Input("empty mu-law sequence".into()));
    }
    let samples = m.codes().iter().map(|&c| decode_sample(c)).collect();
    Waveform::new(samples, m.sample_rate())
}

/// Companded value of a code scaled to [-1, 1], used as the continuous
/// network input representation.
pub fn code_to_companded(code: u8) -> f32 {
    (code as f32) / 127.5 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_endpoints() {
        assert_eq!(encode_sample(1.0), 255);
        assert_eq!(encode_sample(-1.0), 0);
    }

    #[test]
    fn zero_maps_to_code_128() {
        assert_eq!(encode_sample(0.0), 128);
    }

    #[test]
    fn round_trip_error_below_peak_step() {
        // One quantisation step at peak is about 0.031; the level-centre
        // convention keeps the error to roughly half of that.
        let n = 10_000;
        let mut worst = 0.0f32;
        for i in 0..=n {
            let x = -1.0 + 2.0 * i as f32 / n as f32;
            let back = decode_sample(encode_sample(x));
            worst = worst.max((x - back).abs());
        }
        assert!(worst < 0.031, "max companding error {} >= 0.031", worst);
    }

    #[test]
    fn encode_decode_idempotent_on_all_codes() {
        for c in 0..=255u8 {
            assert_eq!(encode_sample(decode_sample(c)), c, "code {} drifted", c);
        }
    }

    #[test]
    fn decode_strictly_increasing() {
        for c in 0..255u8 {
            assert!(decode_sample(c) < decode_sample(c + 1));
        }
    }

    #[test]
    fn code_255_decodes_near_one() {
        let x = decode_sample(255);
        assert!((x - 1.0).abs() < 0.031);
    }

    #[test]
    fn sign_symmetry_off_center() {
        let n = 10_000;
        for i in 0..=n {
            let x = -1.0 + 2.0 * i as f32 / n as f32;
            let y = (compand(x as f64) + 1.0) / 2.0 * 255.0 + 0.5;
            // Skip exact rounding-boundary ties where floor breaks symmetry.
            if (y - y.floor()).abs() < 1e-9 {
                continue;
            }
            let e = encode_sample(x);
            let em = encode_sample(-x);
            assert_eq!(em as i32, 255 - e as i32, "asymmetry at x={}", x);
        }
    }
}
