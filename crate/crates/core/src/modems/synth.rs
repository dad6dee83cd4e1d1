use std::f64::consts::PI;

use num_complex::Complex64;

use super::voice::{band_limit_real, speech_with_envelope, synthesize_voice_program, VoiceKind};
use super::{ModeSpec, ModemOutput, ModulatorKind, SymbolSource, MIN_DURATION_S};
use crate::dsp::analytic_signal;
use crate::error::{Error, Result};
use crate::signal::{normalize_power, IqSignal, SeededRng};
use crate::SYNTH_RATE_HZ;

/// Half-width of the band that survives decimation to 4 kHz; every mode's
/// nominal band is placed inside ±this.
pub const USABLE_HALF_BAND_HZ: f64 = 1850.0;

/// Clean baseband waveform for `mode`, centered at a random offset inside
/// the usable band.
pub fn synthesize_mode(
    mode: &ModeSpec,
    duration_s: f64,
    src: &mut SymbolSource,
    rng: &mut SeededRng,
) -> Result<ModemOutput> {
    if !(duration_s >= MIN_DURATION_S) {
        return Err(Error::out_of_range("duration_s", duration_s, MIN_DURATION_S, f64::INFINITY));
    }
    let fs = SYNTH_RATE_HZ;
    let n = (duration_s * fs).ceil() as usize;
    let room = (USABLE_HALF_BAND_HZ - mode.nominal_bandwidth_hz / 2.0).max(0.0);
    let center_hz = rng.uniform(-room, room);
    let phase0 = rng.uniform(0.0, 2.0 * PI);

    let baseband = match mode.modulator_kind {
        ModulatorKind::Morse => {
            let key = morse_keying(n, fs, mode.require("wpm")?, mode.require("ramp_ms")?, src, rng);
            key.into_iter().map(|k| Complex64::new(k, 0.0)).collect()
        }
        ModulatorKind::Cpfsk | ModulatorKind::Gfsk => {
            let baud = mode.require("baud")?;
            let shaping = if mode.modulator_kind == ModulatorKind::Gfsk {
                FreqShaping::Gaussian { bt: mode.require("bt")? }
            } else {
                FreqShaping::RaisedCosine {
                    fraction: mode.param("smooth").unwrap_or(0.0),
                }
            };
            let fsk = FskParams {
                baud,
                spacing_hz: mode.require("shift_hz")?,
                tones: mode.require("tones")? as usize,
                persistence: mode.param("persistence").unwrap_or(0.0),
                shaping,
            };
            fsk_baseband(n, fs, &fsk, src, rng)
        }
        ModulatorKind::PskRaisedCosine | ModulatorKind::PskRootRaisedCosine => {
            let pulse = if mode.modulator_kind == ModulatorKind::PskRaisedCosine {
                Pulse::ReversalCosine
            } else {
                Pulse::RootRaisedCosine {
                    rolloff: mode.require("rolloff")?,
                }
            };
            psk_baseband(n, fs, mode.require("baud")?, mode.require("order")? as usize, pulse, src, rng)
        }
        ModulatorKind::Am => {
            let kind = if rng.bernoulli(0.5) {
                VoiceKind::SpeechLike
            } else {
                VoiceKind::MusicLike
            };
            let audio = synthesize_voice_program(kind, duration_s, rng)?;
            // broadcast-style limiting gives a loud average modulation; the
            // band limit afterwards removes the limiter's harmonics
            let rms = (audio.iter().map(|v| v * v).sum::<f64>() / audio.len() as f64).sqrt().max(1e-12);
            let drive = mode.require("drive")? / rms;
            let limited: Vec<f64> = audio.iter().map(|a| (drive * a).tanh()).collect();
            let audio = band_limit_real(&limited, 50.0, mode.require("audio_hz")?, fs);
            let depth = (mode.require("depth")? * rng.uniform(0.8, 1.2)).min(0.9);
            audio[..n]
                .iter()
                .map(|a| Complex64::new((1.0 + depth * a).max(0.0), 0.0))
                .collect()
        }
        ModulatorKind::Usb | ModulatorKind::Lsb => {
            let (audio, _) = speech_with_envelope(duration_s, rng);
            let lo = mode.require("low_hz")?;
            let hi = mode.require("high_hz")?;
            let mid = 0.5 * (lo + hi);
            let analytic = analytic_signal(&audio);
            let upper = mode.modulator_kind == ModulatorKind::Usb;
            analytic[..n]
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let z = if upper { *z } else { z.conj() };
                    let shift = if upper { -mid } else { mid };
                    z * Complex64::from_polar(1.0, 2.0 * PI * shift * i as f64 / fs)
                })
                .collect()
        }
        ModulatorKind::Carrier => vec![Complex64::new(1.0, 0.0); n],
    };

    let samples: Vec<Complex64> = baseband
        .into_iter()
        .enumerate()
        .map(|(i, z)| z * Complex64::from_polar(1.0, 2.0 * PI * center_hz * i as f64 / fs + phase0))
        .collect();
    let signal = normalize_power(&IqSignal::new(samples, fs), 1.0)?;
    Ok(ModemOutput {
        signal,
        mode: mode.clone(),
        center_hz,
    })
}

/// Hann kernel normalized to unit sum.
fn hann_kernel(len: usize) -> Vec<f64> {
    let k: Vec<f64> = (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 1.0) / (len as f64 + 1.0)).cos())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Centered smoothing with endpoint replication.
fn smooth(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    if kernel.len() <= 1 {
        return x.to_vec();
    }
    let half = (kernel.len() / 2) as isize;
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * x[(i + j as isize - half).clamp(0, n - 1) as usize])
                .sum()
        })
        .collect()
}

const MORSE: &[(char, &str)] = &[
    ('A', ".-"), ('B', "-..."), ('C', "-.-."), ('D', "-.."), ('E', "."), ('F', "..-."),
    ('G', "--."), ('H', "...."), ('I', ".."), ('J', ".---"), ('K', "-.-"), ('L', ".-.."),
    ('M', "--"), ('N', "-."), ('O', "---"), ('P', ".--."), ('Q', "--.-"), ('R', ".-."),
    ('S', "..."), ('T', "-"), ('U', "..-"), ('V', "...-"), ('W', ".--"), ('X', "-..-"),
    ('Y', "-.--"), ('Z', "--.."), ('0', "-----"), ('1', ".----"), ('2', "..---"),
    ('3', "...--"), ('4', "....-"), ('5', "....."), ('6', "-...."), ('7', "--..."),
    ('8', "---.."), ('9', "----."),
];

/// On/off keying envelope in `[0, 1]`; a dit lasts `1.2 / wpm` seconds.
fn morse_keying(
    n: usize,
    fs: f64,
    wpm: f64,
    ramp_ms: f64,
    src: &mut SymbolSource,
    rng: &mut SeededRng,
) -> Vec<f64> {
    let unit = 1.2 / wpm;
    let skip_s = rng.uniform(0.0, 3.0);
    let total_units = ((n as f64 / fs + skip_s) / unit).ceil() as usize + 16;

    // (on, length in units)
    let mut elements: Vec<(bool, usize)> = Vec::new();
    let mut used = 0;
    while used < total_units {
        let c = src.next_char();
        if c == ' ' {
            elements.push((false, 4));
            used += 4;
            continue;
        }
        let code = MORSE.iter().find(|(k, _)| *k == c).map(|(_, v)| *v).unwrap_or(".");
        for (i, e) in code.chars().enumerate() {
            if i > 0 {
                elements.push((false, 1));
                used += 1;
            }
            let len = if e == '-' { 3 } else { 1 };
            elements.push((true, len));
            used += len;
        }
        elements.push((false, 3));
        used += 3;
    }

    let mut key = vec![0.0; n];
    let mut t_units = 0usize;
    for (on, len) in elements {
        let start = t_units as f64 * unit - skip_s;
        let end = (t_units + len) as f64 * unit - skip_s;
        t_units += len;
        if !on || end <= 0.0 {
            continue;
        }
        let a = (start * fs).round().max(0.0) as usize;
        let b = ((end * fs).round() as usize).min(n);
        if a >= n {
            break;
        }
        key[a..b].iter_mut().for_each(|k| *k = 1.0);
    }
    let ramp = ((ramp_ms * 1e-3 * fs).round() as usize) | 1;
    smooth(&key, &hann_kernel(ramp))
}

#[derive(Debug, Clone, Copy)]
enum FreqShaping {
    /// Hann smoothing over `fraction` of a symbol.
    RaisedCosine { fraction: f64 },
    /// Gaussian frequency pulse with bandwidth-time product `bt`.
    Gaussian { bt: f64 },
}

#[derive(Debug, Clone, Copy)]
struct FskParams {
    baud: f64,
    spacing_hz: f64,
    tones: usize,
    persistence: f64,
    shaping: FreqShaping,
}

/// Continuous-phase M-FSK; unit constant envelope.
fn fsk_baseband(
    n: usize,
    fs: f64,
    p: &FskParams,
    src: &mut SymbolSource,
    rng: &mut SeededRng,
) -> Vec<Complex64> {
    let sps = fs / p.baud;
    let t0 = rng.uniform(0.0, sps);
    let count = ((n as f64 + t0) / sps).ceil() as usize + 1;
    let mut symbols = Vec::with_capacity(count);
    for k in 0..count {
        let s = if k > 0 && p.persistence > 0.0 && src.next_unit() < p.persistence {
            symbols[k - 1]
        } else {
            src.next_symbol(p.tones)
        };
        symbols.push(s);
    }
    let mid = (p.tones as f64 - 1.0) / 2.0;
    let freq: Vec<f64> = (0..n)
        .map(|i| {
            let k = ((i as f64 + t0) / sps).floor() as usize;
            (symbols[k] as f64 - mid) * p.spacing_hz
        })
        .collect();
    let kernel = match p.shaping {
        FreqShaping::RaisedCosine { fraction } => {
            let len = (fraction * sps).round() as usize;
            if len >= 3 {
                hann_kernel(len | 1)
            } else {
                vec![1.0]
            }
        }
        FreqShaping::Gaussian { bt } => {
            let sigma = (2f64.ln()).sqrt() / (2.0 * PI * bt * p.baud) * fs;
            let half = (3.0 * sigma).ceil() as isize;
            let k: Vec<f64> = (-half..=half)
                .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
                .collect();
            let s: f64 = k.iter().sum();
            k.into_iter().map(|v| v / s).collect()
        }
    };
    let freq = smooth(&freq, &kernel);
    let mut phase = 0.0;
    freq.iter()
        .map(|f| {
            let z = Complex64::from_polar(1.0, phase);
            phase = (phase + 2.0 * PI * f / fs) % (2.0 * PI);
            z
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Pulse {
    /// Overlapping two-symbol Hann pulses: constant amplitude between equal
    /// symbols, a cosine dip through zero on each phase reversal.
    ReversalCosine,
    RootRaisedCosine { rolloff: f64 },
}

const RRC_SPAN: f64 = 8.0;

/// Root-raised-cosine impulse response, `t` in symbols, tapered to ±RRC_SPAN.
fn rrc(t: f64, beta: f64) -> f64 {
    if t.abs() >= RRC_SPAN {
        return 0.0;
    }
    let taper = 0.5 + 0.5 * (PI * t / RRC_SPAN).cos();
    let v = if t.abs() < 1e-9 {
        1.0 - beta + 4.0 * beta / PI
    } else if (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
        beta / 2f64.sqrt()
            * ((1.0 + 2.0 / PI) * (PI / (4.0 * beta)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * beta)).cos())
    } else {
        ((PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
            / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
    };
    v * taper
}

fn psk_baseband(
    n: usize,
    fs: f64,
    baud: f64,
    order: usize,
    pulse: Pulse,
    src: &mut SymbolSource,
    rng: &mut SeededRng,
) -> Vec<Complex64> {
    let sym_s = 1.0 / baud;
    let t0 = rng.uniform(0.0, sym_s);
    let lead = RRC_SPAN.ceil() as isize + 1;
    let last = ((n as f64 / fs + t0) / sym_s).ceil() as isize + lead;
    let rotation = if order == 4 { PI / 4.0 } else { 0.0 };
    let symbols: Vec<Complex64> = (-lead..=last)
        .map(|_| {
            let s = src.next_symbol(order);
            Complex64::from_polar(1.0, 2.0 * PI * s as f64 / order as f64 + rotation)
        })
        .collect();
    let sym = |k: isize| symbols[(k + lead) as usize];
    (0..n)
        .map(|i| {
            let u = (i as f64 / fs + t0) / sym_s;
            let k = u.floor() as isize;
            match pulse {
                Pulse::ReversalCosine => {
                    // Pulse k spans [k, k+2) symbols.
                    let w = |tau: f64| 0.5 - 0.5 * (PI * tau).cos();
                    sym(k) * w(u - k as f64) + sym(k - 1) * w(u - (k - 1) as f64)
                }
                Pulse::RootRaisedCosine { rolloff } => {
                    let span = RRC_SPAN as isize;
                    (k - span..=k + span + 1)
                        .map(|j| sym(j) * rrc(u - j as f64, rolloff))
                        .sum()
                }
            }
        })
        .collect()
}
