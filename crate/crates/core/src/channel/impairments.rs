//! Individual receiver and propagation impairments.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp::{convolve_same, lowpass_kaiser, modulate_taps, resample_by_step};
use crate::error::{Error, Result};
use crate::signal::{measure_power, IqSignal, SeededRng};

pub const MAX_FREQ_OFFSET_HZ: f64 = 500.0;
pub const MAX_RATE_OFFSET: f64 = 0.01;
pub const MAX_EXCESS_BW: f64 = 0.5;
pub const SNR_RANGE_DB: (f64, f64) = (-10.0, 25.0);
pub const MAX_IMPULSE_PROB: f64 = 0.02;

/// Band filter transition width, Hz.
pub const BAND_FILTER_TRANSITION_HZ: f64 = 100.0;
/// Band filter stopband attenuation, dB.
pub const BAND_FILTER_ATTEN_DB: f64 = 70.0;

/// `x[n] · exp(j(2π f n / fs + φ))`.
pub fn apply_freq_phase(signal: &IqSignal, freq_offset_hz: f64, phase_rad: f64) -> Result<IqSignal> {
    let fs = signal.sample_rate_hz;
    if freq_offset_hz.abs() > fs / 2.0 {
        return Err(Error::out_of_range("freq_offset_hz", freq_offset_hz, -fs / 2.0, fs / 2.0));
    }
    if freq_offset_hz == 0.0 && phase_rad == 0.0 {
        return Ok(signal.clone());
    }
    let w = 2.0 * PI * freq_offset_hz / fs;
    let samples = signal
        .samples
        .iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::from_polar(1.0, w * n as f64 + phase_rad))
        .collect();
    Ok(IqSignal::new(samples, fs))
}

/// Resamples as if the transmitter clock ran `1 + rate_offset_frac` fast:
/// every frequency scales by that factor and the output has
/// `floor(len / (1 + rate_offset_frac))` samples.
pub fn apply_rate_offset(signal: &IqSignal, rate_offset_frac: f64) -> Result<IqSignal> {
    if !(0.0..=MAX_RATE_OFFSET).contains(&rate_offset_frac) {
        return Err(Error::out_of_range("rate_offset_frac", rate_offset_frac, 0.0, MAX_RATE_OFFSET));
    }
    let step = 1.0 + rate_offset_frac;
    let out_len = (signal.len() as f64 / step).floor() as usize;
    Ok(IqSignal::new(
        resample_by_step(&signal.samples, step, out_len),
        signal.sample_rate_hz,
    ))
}

/// Kaiser band filter around `center_hz`, passband half-width
/// `nominal_bw_hz · (1 + excess_bw_frac) / 2`, 100 Hz transition, 70 dB stopband.
pub fn apply_band_filter(
    signal: &IqSignal,
    center_hz: f64,
    nominal_bw_hz: f64,
    excess_bw_frac: f64,
) -> Result<IqSignal> {
    let fs = signal.sample_rate_hz;
    if !(0.0..=MAX_EXCESS_BW).contains(&excess_bw_frac) {
        return Err(Error::out_of_range("excess_bw_frac", excess_bw_frac, 0.0, MAX_EXCESS_BW));
    }
    let width = nominal_bw_hz * (1.0 + excess_bw_frac);
    if !(nominal_bw_hz > 0.0) || width > fs {
        return Err(Error::InvalidArgument(format!(
            "band filter width {width} Hz exceeds the sample rate {fs} Hz"
        )));
    }
    let edge = width / 2.0;
    if edge + BAND_FILTER_TRANSITION_HZ >= fs / 2.0 {
        // The whole band would pass.
        return Ok(signal.clone());
    }
    let proto = lowpass_kaiser(
        edge + BAND_FILTER_TRANSITION_HZ / 2.0,
        BAND_FILTER_TRANSITION_HZ,
        BAND_FILTER_ATTEN_DB,
        fs,
    );
    let taps = modulate_taps(&proto, center_hz, fs);
    Ok(IqSignal::new(convolve_same(&signal.samples, &taps), fs))
}

/// Circular complex Gaussian noise of the given power.
pub(crate) fn gaussian_noise(len: usize, power: f64, rng: &mut SeededRng) -> Vec<Complex64> {
    let a = power.sqrt();
    (0..len).map(|_| rng.complex_gaussian() * a).collect()
}

/// Adds white Gaussian noise at `snr_db` relative to the record's own power,
/// measured over the full sample bandwidth.
pub fn apply_awgn(signal: &IqSignal, snr_db: f64, rng: &mut SeededRng) -> Result<IqSignal> {
    let p = measure_power(signal)?;
    if p <= 0.0 {
        return Err(Error::SilentSignal);
    }
    let noise = gaussian_noise(signal.len(), p / 10f64.powf(snr_db / 10.0), rng);
    Ok(IqSignal::new(
        signal.samples.iter().zip(&noise).map(|(s, n)| s + n).collect(),
        signal.sample_rate_hz,
    ))
}

/// Bernoulli–Gaussian impulses: each sample is hit with probability
/// `impulse_prob` by a complex Gaussian of RMS `impulse_scale · √P`.
pub(crate) fn impulse_train(
    len: usize,
    reference_power: f64,
    impulse_prob: f64,
    impulse_scale: f64,
    rng: &mut SeededRng,
) -> Vec<Complex64> {
    let rms = impulse_scale * reference_power.sqrt();
    (0..len)
        .map(|_| {
            if rng.bernoulli(impulse_prob) {
                rng.complex_gaussian() * rms
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

pub fn apply_impulsive_noise(
    signal: &IqSignal,
    impulse_prob: f64,
    impulse_scale: f64,
    rng: &mut SeededRng,
) -> Result<IqSignal> {
    if !(0.0..=MAX_IMPULSE_PROB).contains(&impulse_prob) {
        return Err(Error::out_of_range("impulse_prob", impulse_prob, 0.0, MAX_IMPULSE_PROB));
    }
    if impulse_prob == 0.0 {
        return Ok(signal.clone());
    }
    let p = measure_power(signal)?;
    let hits = impulse_train(signal.len(), p, impulse_prob, impulse_scale, rng);
    Ok(IqSignal::new(
        signal.samples.iter().zip(&hits).map(|(s, h)| s + h).collect(),
        signal.sample_rate_hz,
    ))
}
