//! Ionospheric channel and receiver impairments.
//!
//! A record's [`AugmentationPlan`] fixes every random draw up front; applying
//! it runs, in order: band filter, Watterson fading, sampling-rate offset,
//! decimation to 4 kHz, frequency/phase offset, crop to 4096 samples,
//! impulsive noise, AWGN and power normalization.

mod impairments;
mod presets;
mod watterson;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use impairments::{
    apply_awgn, apply_band_filter, apply_freq_phase, apply_impulsive_noise, apply_rate_offset,
    BAND_FILTER_ATTEN_DB, BAND_FILTER_TRANSITION_HZ, MAX_EXCESS_BW, MAX_FREQ_OFFSET_HZ,
    MAX_IMPULSE_PROB, MAX_RATE_OFFSET, SNR_RANGE_DB,
};
pub use presets::{PresetPool, PresetTable, WattersonPreset, DEFAULT_PRESETS};
pub use watterson::{apply_watterson, tap_generation_rate, tap_process, tap_process_native};

use crate::dsp::Decimator;
use crate::error::{Error, Result};
use crate::modems::{ModemOutput, MIN_DURATION_S};
use crate::signal::{normalize_power, power_of, IqSignal, SeededRng};
use crate::{RECORD_LEN, SYNTH_RATE_HZ, SYSTEM_RATE_HZ};

/// Impulse probability range, drawn log-uniformly.
pub const IMPULSE_PROB_RANGE: (f64, f64) = (1e-4, 1e-2);
/// Impulse RMS relative to signal RMS, drawn uniformly.
pub const IMPULSE_SCALE_RANGE: (f64, f64) = (10.0, 30.0);
/// Samples at 4 kHz kept clear of filter start-up at each end before cropping.
pub const CROP_MARGIN: usize = 128;

// Sub-stream tags for the channel realization.
const TAG_WATTERSON: u64 = 1;
const TAG_CROP: u64 = 2;
const TAG_IMPULSE: u64 = 3;
const TAG_AWGN: u64 = 4;

/// Every random choice for one record.
#[derive(Debug, Clone)]
pub struct AugmentationPlan {
    pub freq_offset_hz: f64,
    pub phase_rad: f64,
    pub rate_offset_frac: f64,
    pub excess_bw_frac: f64,
    pub snr_db: f64,
    pub impulse_prob: f64,
    pub impulse_scale: f64,
    pub preset: WattersonPreset,
    /// Drives the fading, crop position and noise realizations.
    pub seed: SeededRng,
}

impl AugmentationPlan {
    /// A plan that changes nothing except the decimation, crop and the
    /// given SNR.
    pub fn near_identity(snr_db: f64, seed: SeededRng) -> Self {
        Self {
            freq_offset_hz: 0.0,
            phase_rad: 0.0,
            rate_offset_frac: 0.0,
            excess_bw_frac: 0.0,
            snr_db,
            impulse_prob: 0.0,
            impulse_scale: IMPULSE_SCALE_RANGE.0,
            preset: WattersonPreset::identity(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name, v: f64, lo: f64, hi: f64| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::out_of_range(name, v, lo, hi))
            }
        };
        check("freq_offset_hz", self.freq_offset_hz, -MAX_FREQ_OFFSET_HZ, MAX_FREQ_OFFSET_HZ)?;
        check("phase_rad", self.phase_rad, 0.0, 2.0 * PI)?;
        if self.phase_rad >= 2.0 * PI {
            return Err(Error::out_of_range("phase_rad", self.phase_rad, 0.0, 2.0 * PI));
        }
        check("rate_offset_frac", self.rate_offset_frac, 0.0, MAX_RATE_OFFSET)?;
        check("excess_bw_frac", self.excess_bw_frac, 0.0, MAX_EXCESS_BW)?;
        check("snr_db", self.snr_db, SNR_RANGE_DB.0, SNR_RANGE_DB.1)?;
        check("impulse_prob", self.impulse_prob, 0.0, MAX_IMPULSE_PROB)?;
        check("impulse_scale", self.impulse_scale, 0.0, f64::MAX)?;
        self.preset.validate()
    }
}

/// Draws a plan: offsets, rate, excess bandwidth and SNR uniform over their
/// ranges, impulse probability log-uniform, preset uniform over `presets`.
pub fn draw_plan(rng: &mut SeededRng, presets: &[&WattersonPreset]) -> Result<AugmentationPlan> {
    if presets.is_empty() {
        return Err(Error::InvalidArgument("no channel presets to draw from".into()));
    }
    let (plo, phi) = IMPULSE_PROB_RANGE;
    let plan = AugmentationPlan {
        freq_offset_hz: rng.uniform(-MAX_FREQ_OFFSET_HZ, MAX_FREQ_OFFSET_HZ),
        phase_rad: rng.uniform(0.0, 2.0 * PI),
        rate_offset_frac: rng.uniform(0.0, MAX_RATE_OFFSET),
        excess_bw_frac: rng.uniform(0.0, MAX_EXCESS_BW),
        snr_db: rng.uniform(SNR_RANGE_DB.0, SNR_RANGE_DB.1),
        impulse_prob: (rng.uniform(plo.ln(), phi.ln())).exp(),
        impulse_scale: rng.uniform(IMPULSE_SCALE_RANGE.0, IMPULSE_SCALE_RANGE.1),
        preset: presets[rng.index(presets.len())].clone(),
        seed: rng.derive(0x6368_616e),
    };
    plan.validate()?;
    Ok(plan)
}

/// Intermediate components of one plan application.
#[derive(Debug, Clone)]
pub struct PlanTrace {
    /// Final normalized record.
    pub output: IqSignal,
    /// Cropped signal before any noise (4 kHz).
    pub clean: Vec<Complex64>,
    pub impulses: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    /// Scale applied to `clean + impulses + noise` to reach unit power.
    pub scale: f64,
    /// First kept sample of the decimated signal.
    pub crop_start: usize,
}

impl PlanTrace {
    /// SNR of the record from its known clean/noise split.
    pub fn realized_snr_db(&self) -> f64 {
        let ps = power_of(&self.clean).unwrap_or(0.0);
        let pn = power_of(&self.noise).unwrap_or(0.0);
        10.0 * (ps / pn).log10()
    }
}

pub fn apply_plan(input: &ModemOutput, plan: &AugmentationPlan) -> Result<IqSignal> {
    Ok(apply_plan_traced(input, plan)?.output)
}

pub fn apply_plan_traced(input: &ModemOutput, plan: &AugmentationPlan) -> Result<PlanTrace> {
    plan.validate()?;
    let signal = &input.signal;
    if signal.sample_rate_hz != SYNTH_RATE_HZ {
        return Err(Error::InvalidArgument(format!(
            "expected a {SYNTH_RATE_HZ} Hz signal, got {} Hz",
            signal.sample_rate_hz
        )));
    }
    if signal.duration_s() < MIN_DURATION_S - 1e-9 {
        return Err(Error::out_of_range("duration_s", signal.duration_s(), MIN_DURATION_S, f64::INFINITY));
    }

    let filtered = apply_band_filter(signal, input.center_hz, input.mode.nominal_bandwidth_hz, plan.excess_bw_frac)?;
    let faded = apply_watterson(&filtered, &plan.preset, &mut plan.seed.derive(TAG_WATTERSON))?;
    let drifted = apply_rate_offset(&faded, plan.rate_offset_frac)?;
    let decimator = Decimator::by_three();
    let decimated = IqSignal::new(decimator.process(&drifted.samples), SYSTEM_RATE_HZ);
    let mixed = apply_freq_phase(&decimated, plan.freq_offset_hz, plan.phase_rad)?;

    let room = mixed.len().saturating_sub(RECORD_LEN + 2 * CROP_MARGIN);
    if mixed.len() < RECORD_LEN + 2 * CROP_MARGIN {
        return Err(Error::InvalidArgument(format!(
            "only {} samples after decimation, need {}",
            mixed.len(),
            RECORD_LEN + 2 * CROP_MARGIN
        )));
    }
    let crop_start = CROP_MARGIN + plan.seed.derive(TAG_CROP).index(room + 1);
    let clean = mixed.samples[crop_start..crop_start + RECORD_LEN].to_vec();

    let p_sig = power_of(&clean)?;
    if p_sig <= 0.0 {
        return Err(Error::SilentSignal);
    }
    let impulses = if plan.impulse_prob > 0.0 {
        impairments::impulse_train(
            RECORD_LEN,
            p_sig,
            plan.impulse_prob,
            plan.impulse_scale,
            &mut plan.seed.derive(TAG_IMPULSE),
        )
    } else {
        vec![Complex64::new(0.0, 0.0); RECORD_LEN]
    };
    let noise = impairments::gaussian_noise(
        RECORD_LEN,
        p_sig / 10f64.powf(plan.snr_db / 10.0),
        &mut plan.seed.derive(TAG_AWGN),
    );
    let noisy: Vec<Complex64> = (0..RECORD_LEN).map(|i| clean[i] + impulses[i] + noise[i]).collect();
    let noisy = IqSignal::new(noisy, SYSTEM_RATE_HZ);
    let p_noisy = power_of(&noisy.samples)?;
    let output = normalize_power(&noisy, 1.0)?;
    Ok(PlanTrace {
        output,
        clean,
        impulses,
        noise,
        scale: (1.0 / p_noisy).sqrt(),
        crop_start,
    })
}
