//! Watterson tapped-delay-line fading.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::presets::WattersonPreset;
use crate::error::Result;
use crate::signal::{IqSignal, SeededRng};

/// Lowest rate the tap gains are generated at before interpolation.
pub const TAP_BASE_RATE_HZ: f64 = 64.0;

/// Generation rate for a given spread: 64 Hz, raised for fast flutter so the
/// Gaussian spectrum stays well inside Nyquist.
pub fn tap_generation_rate(spread_hz: f64) -> f64 {
    TAP_BASE_RATE_HZ.max(4.0 * spread_hz)
}

/// Unit-power complex Gaussian gain process sampled at the tap generation rate.
///
/// Complex white noise is filtered by a Gaussian FIR whose magnitude response
/// has standard deviation `spread_hz / 2`, truncated at ±4σ in time and
/// normalized to unit energy.
pub fn tap_process_native(spread_hz: f64, len: usize, rng: &mut SeededRng) -> (Vec<Complex64>, f64) {
    let rate = tap_generation_rate(spread_hz);
    let sigma_f = spread_hz / 2.0;
    let sigma_t = rate / (2.0 * PI * sigma_f);
    let half = (4.0 * sigma_t).ceil() as usize;
    let mut h: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            (-t * t / (2.0 * sigma_t * sigma_t)).exp()
        })
        .collect();
    let energy = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= energy);

    let noise: Vec<Complex64> = (0..len + h.len() - 1).map(|_| rng.complex_gaussian()).collect();
    let out = (0..len)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(j, w)| noise[i + h.len() - 1 - j] * *w)
                .sum()
        })
        .collect();
    (out, rate)
}

fn catmull_rom(p: [Complex64; 4], t: f64) -> Complex64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (p[1] * 2.0
        + (p[2] - p[0]) * t
        + (p[0] * 2.0 - p[1] * 5.0 + p[2] * 4.0 - p[3]) * t2
        + (p[1] * 3.0 - p[0] - p[2] * 3.0 + p[3]) * t3)
        * 0.5
}

/// Tap gain process at `sample_rate_hz`, cubic-interpolated from the
/// generation rate. Zero spread gives a constant unit gain.
pub fn tap_process(spread_hz: f64, sample_rate_hz: f64, n: usize, rng: &mut SeededRng) -> Vec<Complex64> {
    if spread_hz <= 0.0 {
        return vec![Complex64::new(1.0, 0.0); n];
    }
    let rate = tap_generation_rate(spread_hz);
    let coarse_len = (n as f64 * rate / sample_rate_hz).ceil() as usize + 4;
    let (coarse, _) = tap_process_native(spread_hz, coarse_len, rng);
    (0..n)
        .map(|i| {
            let pos = 1.0 + i as f64 * rate / sample_rate_hz;
            let k = pos.floor() as usize;
            let t = pos - k as f64;
            catmull_rom([coarse[k - 1], coarse[k], coarse[k + 1], coarse[k + 2]], t)
        })
        .collect()
}

/// `y[n] = Σ g_i[n] · x[n − d_i]` with independent Gaussian-Doppler tap
/// gains, scaled so the tap powers sum to one.
pub fn apply_watterson(signal: &IqSignal, preset: &WattersonPreset, rng: &mut SeededRng) -> Result<IqSignal> {
    preset.validate()?;
    if preset.is_identity() {
        return Ok(signal.clone());
    }
    let fs = signal.sample_rate_hz;
    let n = signal.len();
    let powers: Vec<f64> = preset.tap_gains_db.iter().map(|g| 10f64.powf(g / 10.0)).collect();
    let total: f64 = powers.iter().sum();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (tap, power) in powers.iter().enumerate() {
        let mut tap_rng = rng.derive(tap as u64);
        let gains = tap_process(preset.doppler_spread_hz[tap], fs, n, &mut tap_rng);
        let amp = (power / total).sqrt();
        let delay = (preset.tap_delays_ms[tap] * 1e-3 * fs).round() as usize;
        let shift = preset.frequency_shift_hz[tap];
        for i in delay..n {
            let mut g = gains[i] * amp;
            if shift != 0.0 {
                g *= Complex64::from_polar(1.0, 2.0 * PI * shift * i as f64 / fs);
            }
            out[i] += g * signal.samples[i - delay];
        }
    }
    Ok(IqSignal::new(out, fs))
}
