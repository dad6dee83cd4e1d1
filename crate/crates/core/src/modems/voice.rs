//! Audio program surrogates that feed the AM and SSB modulators.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp::{fft_in_place, ifft_in_place};
use crate::error::{Error, Result};
use crate::signal::SeededRng;
use crate::SYNTH_RATE_HZ;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoiceKind {
    SpeechLike,
    MusicLike,
}

/// Speech band of the surrogate, in Hz.
pub const SPEECH_BAND_HZ: (f64, f64) = (300.0, 2700.0);

/// Applies a real spectral gain `gain(f)` (f ≥ 0 in Hz) circularly.
fn shape_spectrum(x: &[f64], fs: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        *z *= gain(f);
    }
    ifft_in_place(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Keeps only `lo ≤ |f| ≤ hi`; the result has no energy outside the band.
pub fn band_limit_real(x: &[f64], lo_hz: f64, hi_hz: f64, fs: f64) -> Vec<f64> {
    shape_spectrum(x, fs, |f| if f >= lo_hz && f <= hi_hz { 1.0 } else { 0.0 })
}

fn normalize_unit(mut x: Vec<f64>) -> Vec<f64> {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if p > 0.0 {
        let k = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= k);
    }
    x
}

/// Speech surrogate together with the syllabic envelope that shaped it.
///
/// White Gaussian noise is multiplied by a nonnegative 2–8 Hz envelope, then
/// band-limited to 300–2700 Hz with a spectral tilt (flat to 500 Hz, falling
/// above) so that upper and lower sideband placements differ in shape.
pub fn speech_with_envelope(duration_s: f64, rng: &mut SeededRng) -> (Vec<f64>, Vec<f64>) {
    let fs = SYNTH_RATE_HZ;
    let n = (duration_s * fs).ceil() as usize;
    let syllabic_hz = rng.uniform(2.0, 8.0);
    let raw: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
    let slow = shape_spectrum(&raw, fs, |f| if f <= syllabic_hz { 1.0 } else { 0.0 });
    let mut envelope: Vec<f64> = slow.iter().map(|v| v * v).collect();
    let mean = envelope.iter().sum::<f64>() / n as f64;
    if mean > 0.0 {
        envelope.iter_mut().for_each(|e| *e /= mean);
    }
    let carrier: Vec<f64> = (0..n).map(|i| rng.gaussian() * envelope[i]).collect();
    let (lo, hi) = SPEECH_BAND_HZ;
    let audio = shape_spectrum(&carrier, fs, |f| {
        if f < lo || f > hi {
            return 0.0;
        }
        let taper = |d: f64| if d < 40.0 { 0.5 - 0.5 * (PI * d / 40.0).cos() } else { 1.0 };
        let tilt = if f <= 500.0 { 1.0 } else { (500.0 / f).powf(0.9) };
        tilt * taper(f - lo) * taper(hi - f)
    });
    (normalize_unit(audio), envelope)
}

fn music(duration_s: f64, rng: &mut SeededRng) -> Vec<f64> {
    let fs = SYNTH_RATE_HZ;
    let n = (duration_s * fs).ceil() as usize;
    let mut out = vec![0.0; n];
    let mut start = -(rng.uniform(0.0, 0.4) * fs) as isize;
    while (start as f64) < n as f64 {
        let len = (rng.uniform(0.15, 0.6) * fs) as isize;
        let f0 = 110.0 * 2f64.powf(rng.index(37) as f64 / 12.0);
        let decay = rng.uniform(1.0, 6.0);
        let voices = 1 + rng.index(3);
        for v in 0..voices {
            let f = f0 * [1.0, 1.26, 1.5][v];
            let phase = rng.uniform(0.0, 2.0 * PI);
            for i in start.max(0)..(start + len).min(n as isize) {
                let t = (i - start) as f64 / fs;
                let attack = (t / 0.01).min(1.0);
                let env = attack * (-decay * t).exp();
                let mut s = 0.0;
                for h in 1..=5 {
                    let fh = f * h as f64;
                    if fh < fs / 2.0 {
                        s += (2.0 * PI * fh * t + phase * h as f64).sin() / h as f64;
                    }
                }
                out[i as usize] += env * s;
            }
        }
        start += len;
    }
    for v in out.iter_mut() {
        *v += 0.05 * rng.gaussian();
    }
    normalize_unit(band_limit_real(&out, 50.0, SPEECH_BAND_HZ.1, fs))
}

/// Real-valued audio program at the synthesis rate with unit power.
pub fn synthesize_voice_program(
    kind: VoiceKind,
    duration_s: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if !(duration_s >= super::MIN_DURATION_S) {
        return Err(Error::out_of_range("duration_s", duration_s, super::MIN_DURATION_S, f64::INFINITY));
    }
    Ok(match kind {
        VoiceKind::SpeechLike => speech_with_envelope(duration_s, rng).0,
        VoiceKind::MusicLike => music(duration_s, rng),
    })
}
