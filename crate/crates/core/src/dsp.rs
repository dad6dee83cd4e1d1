//! Filter design and the resampling, convolution and spectral helpers shared
//! by the modulators, the channel stages and the inspection tools.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser's empirical shape parameter for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let m = (len - 1) as f64;
    let denom = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// 4-term Blackman-Harris window (about 92 dB sidelobes).
pub fn blackman_harris(len: usize) -> Vec<f64> {
    let (a0, a1, a2, a3) = (0.35875, 0.48829, 0.14128, 0.01168);
    (0..len)
        .map(|n| {
            let x = 2.0 * PI * n as f64 / len as f64;
            a0 - a1 * x.cos() + a2 * (2.0 * x).cos() - a3 * (3.0 * x).cos()
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Odd-length linear-phase Kaiser low-pass with unit DC gain.
///
/// `cutoff_hz` is the -6 dB point, `transition_hz` the full transition width.
pub fn lowpass_kaiser(cutoff_hz: f64, transition_hz: f64, atten_db: f64, fs: f64) -> Vec<f64> {
    let dw = 2.0 * PI * transition_hz / fs;
    let mut len = ((atten_db - 7.95) / (2.285 * dw)).ceil().max(3.0) as usize + 1;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let win = kaiser_window(len, kaiser_beta(atten_db));
    let mid = (len / 2) as f64;
    let fc = cutoff_hz / fs;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| 2.0 * fc * sinc(2.0 * fc * (n as f64 - mid)) * win[n])
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Shifts a real low-pass prototype to `center_hz`, giving complex band-pass taps.
pub fn modulate_taps(taps: &[f64], center_hz: f64, fs: f64) -> Vec<Complex64> {
    let mid = (taps.len() / 2) as f64;
    taps.iter()
        .enumerate()
        .map(|(n, &h)| h * Complex64::from_polar(1.0, 2.0 * PI * center_hz * (n as f64 - mid) / fs))
        .collect()
}

pub fn fft_in_place(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

/// Unnormalized inverse FFT.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_inverse(buf.len()).process(buf);
}

/// Linear convolution with an odd-length filter, trimmed so the output is
/// aligned with the input (group delay removed) and has the same length.
pub fn convolve_same(x: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let l = taps.len();
    if n == 0 {
        return Vec::new();
    }
    let delay = l / 2;
    if l <= 32 || n <= 64 {
        return (0..n)
            .map(|i| {
                let k = i + delay;
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, t) in taps.iter().enumerate() {
                    if k >= j && k - j < n {
                        acc += t * x[k - j];
                    }
                }
                acc
            })
            .collect();
    }
    let size = (n + l - 1).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); size];
    let mut b = vec![Complex64::new(0.0, 0.0); size];
    a[..n].copy_from_slice(x);
    b[..l].copy_from_slice(taps);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    planner.plan_fft_inverse(size).process(&mut a);
    let scale = 1.0 / size as f64;
    a[delay..delay + n].iter().map(|z| z * scale).collect()
}

pub fn convolve_same_real(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let taps: Vec<Complex64> = taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    convolve_same(x, &taps)
}

/// Integer-factor decimator: anti-alias FIR evaluated only at kept outputs.
#[derive(Debug, Clone)]
pub struct Decimator {
    factor: usize,
    taps: Vec<f64>,
}

impl Decimator {
    pub fn new(factor: usize, taps: Vec<f64>) -> Self {
        assert!(factor >= 1 && taps.len() % 2 == 1);
        Self { factor, taps }
    }

    /// 12 kHz to 4 kHz: flat to ±1850 Hz, 80 dB down from ±2150 Hz.
    pub fn by_three() -> Self {
        Self::new(3, lowpass_kaiser(2000.0, 300.0, 80.0, 12000.0))
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    /// Output sample `m` is the filter centered on input `m * factor`.
    pub fn process(&self, x: &[Complex64]) -> Vec<Complex64> {
        let half = self.taps.len() / 2;
        let n = x.len();
        let out_len = n.div_ceil(self.factor);
        (0..out_len)
            .map(|m| {
                let c = m * self.factor;
                let lo = c.saturating_sub(half);
                let hi = (c + half).min(n - 1);
                let mut acc = Complex64::new(0.0, 0.0);
                for (xi, t) in x[lo..=hi].iter().zip(&self.taps[lo + half - c..]) {
                    acc += xi * t;
                }
                acc
            })
            .collect()
    }
}

/// Band-limited fractional resampler (Kaiser-windowed sinc).
///
/// Output sample `m` reads the input at position `m * step`; a step above one
/// shortens the signal and scales every frequency by `step`.
pub fn resample_by_step(x: &[Complex64], step: f64, out_len: usize) -> Vec<Complex64> {
    const HALF: isize = 16;
    let beta = kaiser_beta(80.0);
    let i0b = bessel_i0(beta);
    let fc = 1.0 / step.max(1.0);
    let n = x.len() as isize;
    (0..out_len)
        .map(|m| {
            let t = m as f64 * step;
            let base = t.floor() as isize;
            let frac = t - base as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for k in (base - HALF + 1)..=(base + HALF) {
                if k < 0 || k >= n {
                    continue;
                }
                let d = k as f64 - t;
                let r = d / (HALF as f64 + frac.max(1.0 - frac));
                if r.abs() >= 1.0 {
                    continue;
                }
                let w = bessel_i0(beta * (1.0 - r * r).sqrt()) / i0b;
                acc += x[k as usize] * (fc * sinc(fc * d) * w);
            }
            acc
        })
        .collect()
}

/// Analytic signal of a real sequence (FFT Hilbert transformer).
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            continue;
        } else if k < n.div_ceil(2) {
            *z *= 2.0;
        } else {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut buf);
    let s = 1.0 / n as f64;
    buf.iter().map(|z| z * s).collect()
}

/// Bin frequency (Hz) for a centered FFT of size `nfft`.
pub fn centered_bin_hz(bin: usize, nfft: usize, fs: f64) -> f64 {
    (bin as f64 - (nfft / 2) as f64) * fs / nfft as f64
}

/// Averaged periodogram with 50 % overlap; the spectrum is fftshifted so
/// index `nfft/2` is DC.
pub fn welch_psd(x: &[Complex64], nfft: usize, window: &[f64]) -> Vec<f64> {
    assert_eq!(window.len(), nfft);
    let hop = nfft / 2;
    let mut acc = vec![0.0; nfft];
    let mut count = 0usize;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut start = 0;
    while start + nfft <= x.len() {
        let mut buf: Vec<Complex64> = x[start..start + nfft]
            .iter()
            .zip(window)
            .map(|(z, w)| z * w)
            .collect();
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    assert!(count > 0, "signal shorter than one segment");
    let mut out = vec![0.0; nfft];
    for (k, v) in acc.iter().enumerate() {
        out[(k + nfft / 2) % nfft] = v / count as f64;
    }
    out
}

/// Frequency of the largest FFT bin over the whole signal (rectangular window).
pub fn peak_frequency_hz(x: &[Complex64], fs: f64) -> f64 {
    let n = x.len();
    let mut buf = x.to_vec();
    fft_in_place(&mut buf);
    let (k, _) = buf
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .expect("nonempty");
    let k = if k > n / 2 { k as f64 - n as f64 } else { k as f64 };
    k * fs / n as f64
}

/// Instantaneous frequency by phase-difference discriminator, in Hz.
pub fn instantaneous_frequency(x: &[Complex64], fs: f64) -> Vec<f64> {
    x.windows(2)
        .map(|w| (w[1] * w[0].conj()).arg() * fs / (2.0 * PI))
        .collect()
}

/// Short-time log-magnitude spectrum: Hann window, given hop, fftshifted
/// rows in dB relative to the global maximum, floored at `-range_db`.
pub fn spectrogram_db(x: &[Complex64], nfft: usize, hop: usize, range_db: f64) -> Vec<Vec<f64>> {
    let win = hann(nfft);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut rows = Vec::new();
    let mut start = 0;
    while start + nfft <= x.len() {
        let mut buf: Vec<Complex64> = x[start..start + nfft]
            .iter()
            .zip(&win)
            .map(|(z, w)| z * w)
            .collect();
        fft.process(&mut buf);
        let mut row = vec![0.0; nfft];
        for (k, z) in buf.iter().enumerate() {
            row[(k + nfft / 2) % nfft] = 10.0 * (z.norm_sqr() + 1e-300).log10();
        }
        rows.push(row);
        start += hop;
    }
    let peak = rows
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    for r in &mut rows {
        for v in r.iter_mut() {
            *v = (*v - peak).max(-range_db);
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, fs: f64, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * f * i as f64 / fs))
            .collect()
    }

    fn gain_at(taps: &[f64], f: f64, fs: f64) -> f64 {
        taps.iter()
            .enumerate()
            .map(|(n, &h)| h * Complex64::from_polar(1.0, -2.0 * PI * f * n as f64 / fs))
            .sum::<Complex64>()
            .norm()
    }

    #[test]
    fn kaiser_lowpass_meets_its_mask() {
        let fs = 12000.0;
        let taps = lowpass_kaiser(550.0, 100.0, 70.0, fs);
        for f in (0..=500).step_by(10) {
            let g = 20.0 * gain_at(&taps, f as f64, fs).log10();
            assert!(g.abs() < 0.1, "passband {f} Hz: {g} dB");
        }
        for f in (600..6000).step_by(7) {
            let g = 20.0 * gain_at(&taps, f as f64, fs).log10();
            assert!(g < -65.0, "stopband {f} Hz: {g} dB");
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let x: Vec<Complex64> = (0..300)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let taps: Vec<Complex64> = (0..41)
            .map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.01 * i as f64))
            .collect();
        let fast = convolve_same(&x, &taps);
        let direct: Vec<Complex64> = (0..x.len())
            .map(|i| {
                let k = i + 20;
                (0..taps.len())
                    .filter(|&j| k >= j && k - j < x.len())
                    .map(|j| taps[j] * x[k - j])
                    .sum()
            })
            .collect();
        for (a, b) in fast.iter().zip(&direct) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn decimator_keeps_passband_tone() {
        let x = tone(1200.0, 12000.0, 6000);
        let y = Decimator::by_three().process(&x);
        assert_eq!(y.len(), 2000);
        for (m, z) in y.iter().enumerate().skip(100).take(1800) {
            let expect = x[m * 3];
            assert!((z - expect).norm() < 1e-3);
        }
    }

    #[test]
    fn decimator_rejects_alias_band() {
        let x = tone(3000.0, 12000.0, 6000);
        let y = Decimator::by_three().process(&x);
        let p: f64 = y[100..1900].iter().map(|z| z.norm_sqr()).sum::<f64>() / 1800.0;
        assert!(10.0 * p.log10() < -75.0);
    }

    #[test]
    fn unit_step_resampling_is_identity() {
        let x = tone(321.0, 4000.0, 500);
        let y = resample_by_step(&x, 1.0, x.len());
        let dev = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn analytic_signal_of_cosine_is_exponential() {
        let n = 1024;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 50.0 * i as f64 / n as f64).cos()).collect();
        let a = analytic_signal(&x);
        for (i, z) in a.iter().enumerate() {
            let e = Complex64::from_polar(1.0, 2.0 * PI * 50.0 * i as f64 / n as f64);
            assert!((z - e).norm() < 1e-9);
        }
    }

    #[test]
    fn peak_frequency_finds_tone() {
        let x = tone(-731.25, 4000.0, 4096);
        assert!((peak_frequency_hz(&x, 4000.0) + 731.25).abs() < 4000.0 / 4096.0);
    }
}
