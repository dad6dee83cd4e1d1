//! Complex baseband signals and the seeded randomness every stage draws from.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Complex baseband samples plus the rate they were taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl IqSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        debug_assert!(sample_rate_hz > 0.0);
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, k: f64) -> IqSignal {
        IqSignal::new(self.samples.iter().map(|z| z * k).collect(), self.sample_rate_hz)
    }
}

/// Mean squared magnitude, `(1/N) Σ |x[n]|²`.
pub fn measure_power(signal: &IqSignal) -> Result<f64> {
    power_of(&signal.samples)
}

pub(crate) fn power_of(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64)
}

/// Scales `signal` so that its mean power equals `target_power`.
pub fn normalize_power(signal: &IqSignal, target_power: f64) -> Result<IqSignal> {
    if !(target_power > 0.0) {
        return Err(Error::out_of_range("target_power", target_power, 0.0, f64::INFINITY));
    }
    let p = measure_power(signal)?;
    if p <= 0.0 {
        return Err(Error::SilentSignal);
    }
    let k = (target_power / p).sqrt();
    if k == 1.0 {
        return Ok(signal.clone());
    }
    Ok(signal.scaled(k))
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 generator addressed by `(seed, stream_id)`.
///
/// Each record owns its own stream, so records can be generated in any order
/// or on any number of threads and still see the same draws. Sub-streams for
/// independent stages come from [`SeededRng::derive`].
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent generator for a named sub-stage of the same record.
    ///
    /// Depends only on `(seed, stream_id, tag)`, never on how many draws the
    /// parent has already made.
    pub fn derive(&self, tag: u64) -> SeededRng {
        let seed = splitmix64(self.seed ^ splitmix64(tag.wrapping_mul(GOLDEN) ^ 0x5bd1_e995));
        SeededRng::new(seed, self.stream_id)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Circular complex Gaussian with `E|z|² = 1`.
    pub fn complex_gaussian(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Complex64::new(self.gaussian() * s, self.gaussian() * s)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest};

    fn constant(z: Complex64, n: usize) -> IqSignal {
        IqSignal::new(vec![z; n], 4000.0)
    }

    #[test]
    fn power_of_zero_and_unit_constant() {
        assert_eq!(measure_power(&constant(Complex64::new(0.0, 0.0), 8)).unwrap(), 0.0);
        assert_eq!(measure_power(&constant(Complex64::new(1.0, 0.0), 100)).unwrap(), 1.0);
    }

    #[test]
    fn power_of_unit_tone() {
        let n = 4096;
        let s: Vec<_> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 0.123 * i as f64))
            .collect();
        let p = measure_power(&IqSignal::new(s, 4000.0)).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_signal_is_rejected() {
        let err = measure_power(&IqSignal::new(vec![], 4000.0)).unwrap_err();
        assert_eq!(err.to_string(), "empty signal");
    }

    #[test]
    fn silent_signal_cannot_be_normalized() {
        let err = normalize_power(&constant(Complex64::new(0.0, 0.0), 16), 1.0).unwrap_err();
        assert_eq!(err.to_string(), "silent signal");
    }

    #[test]
    fn normalize_scales_constant() {
        let out = normalize_power(&constant(Complex64::new(2.0, 0.0), 10), 1.0).unwrap();
        assert!(out.samples.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let same = normalize_power(&out, 1.0).unwrap();
        assert_eq!(same, out);
    }

    #[test]
    fn normalize_random_gaussian() {
        let mut rng = SeededRng::new(3, 0);
        let s: Vec<_> = (0..5000).map(|_| rng.complex_gaussian() * 3.7).collect();
        let out = normalize_power(&IqSignal::new(s, 4000.0), 1.0).unwrap();
        assert!((measure_power(&out).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, stream| {
            let mut r = SeededRng::new(seed, stream);
            (0..4).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        assert_eq!(draw(1, 7), draw(1, 7));
        assert_ne!(draw(1, 7), draw(1, 8));
        assert_ne!(draw(1, 7), draw(2, 7));

        let mut a = SeededRng::new(5, 9);
        let b = a.derive(1);
        a.next_u64();
        let c = a.derive(1);
        assert_eq!(b.clone().next_u64(), c.clone().next_u64());
        assert_ne!(a.derive(2).next_u64(), b.clone().next_u64());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(
            seed in any::<u64>(),
            n in 1usize..256,
            gain in 1e-3f64..1e3,
            target in 1e-3f64..1e3,
        ) {
            let mut rng = SeededRng::new(seed, 0);
            let s: Vec<_> = (0..n).map(|_| rng.complex_gaussian() * gain).collect();
            let once = normalize_power(&IqSignal::new(s, 4000.0), target).unwrap();
            let twice = normalize_power(&once, target).unwrap();
            let p = measure_power(&once).unwrap();
            prop_assert!(((p - target) / target).abs() < 1e-9);
            for (a, b) in once.samples.iter().zip(&twice.samples) {
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
            }
        }
    }
}
