//! Watterson channel presets and their text table.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Preset table shipped with the crate.
pub const DEFAULT_PRESETS: &str = include_str!("presets.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct WattersonPreset {
    pub name: String,
    pub tap_delays_ms: Vec<f64>,
    pub tap_gains_db: Vec<f64>,
    /// Two-sided spread (2σ) of each tap's Gaussian Doppler spectrum.
    pub doppler_spread_hz: Vec<f64>,
    pub frequency_shift_hz: Vec<f64>,
    /// Held back from training; only the holdout set draws it.
    pub reserved: bool,
}

impl WattersonPreset {
    pub fn taps(&self) -> usize {
        self.tap_delays_ms.len()
    }

    pub fn is_identity(&self) -> bool {
        self.taps() == 1
            && self.tap_delays_ms[0] == 0.0
            && self.doppler_spread_hz[0] == 0.0
            && self.frequency_shift_hz[0] == 0.0
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            tap_delays_ms: vec![0.0],
            tap_gains_db: vec![0.0],
            doppler_spread_hz: vec![0.0],
            frequency_shift_hz: vec![0.0],
            reserved: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.taps();
        let bad = |msg: String| Err(Error::InvalidArgument(format!("preset {}: {msg}", self.name)));
        if !(1..=2).contains(&n) {
            return bad(format!("{n} taps, expected 1 or 2"));
        }
        if self.tap_gains_db.len() != n || self.doppler_spread_hz.len() != n || self.frequency_shift_hz.len() != n {
            return bad("per-tap field lengths differ".into());
        }
        if self.tap_delays_ms[0] != 0.0 {
            return bad("first delay must be 0".into());
        }
        if self.tap_delays_ms.windows(2).any(|w| w[1] < w[0]) {
            return bad("delays must be ascending".into());
        }
        if self.doppler_spread_hz.iter().any(|s| !(*s >= 0.0)) {
            return bad("negative Doppler spread".into());
        }
        Ok(())
    }
}

/// Which presets a plan may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetPool {
    /// Everything not marked reserved (training and validation).
    Training,
    /// Only the reserved presets (holdout).
    Holdout,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetTable {
    presets: Vec<WattersonPreset>,
    hash: String,
}

impl Default for PresetTable {
    fn default() -> Self {
        Self::parse(DEFAULT_PRESETS).expect("built-in preset table parses")
    }
}

fn parse_list(field: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    field.split(',').map(str::parse).collect()
}

impl PresetTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut presets = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cfg = |msg: String| Error::Config { line: i + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(cfg(format!("expected 6 fields, found {}", f.len())));
            }
            let list = |s: &str| parse_list(s).map_err(|e| cfg(format!("{s:?}: {e}")));
            let preset = WattersonPreset {
                name: f[0].to_string(),
                reserved: match f[1] {
                    "0" => false,
                    "1" => true,
                    other => return Err(cfg(format!("reserved flag {other:?}"))),
                },
                tap_delays_ms: list(f[2])?,
                tap_gains_db: list(f[3])?,
                doppler_spread_hz: list(f[4])?,
                frequency_shift_hz: list(f[5])?,
            };
            preset.validate().map_err(|e| cfg(e.to_string()))?;
            presets.push(preset);
        }
        if presets.is_empty() {
            return Err(Error::Config {
                line: 0,
                msg: "preset table is empty".into(),
            });
        }
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self { presets, hash })
    }

    /// SHA-256 of the table text, recorded in dataset manifests.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn presets(&self) -> &[WattersonPreset] {
        &self.presets
    }

    pub fn len(&self) -> usize {
        self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presets.is_empty()
    }

    pub fn by_name(&self, name: &str) -> Result<&WattersonPreset> {
        self.presets
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown channel preset {name:?}")))
    }

    pub fn pool(&self, pool: PresetPool) -> Vec<&WattersonPreset> {
        self.presets
            .iter()
            .filter(|p| match pool {
                PresetPool::Training => !p.reserved,
                PresetPool::Holdout => p.reserved,
                PresetPool::All => true,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_has_sixteen_valid_presets() {
        let t = PresetTable::default();
        assert_eq!(t.len(), 16);
        assert!(t.presets().iter().any(|p| p.is_identity()));
        for p in t.presets() {
            p.validate().unwrap();
        }
        let ccir_poor = t.by_name("ccir_poor").unwrap();
        assert_eq!(ccir_poor.tap_delays_ms, vec![0.0, 2.0]);
        assert_eq!(ccir_poor.doppler_spread_hz, vec![1.0, 1.0]);
    }

    #[test]
    fn pools_partition_the_table() {
        let t = PresetTable::default();
        let train = t.pool(PresetPool::Training);
        let hold = t.pool(PresetPool::Holdout);
        assert_eq!(train.len() + hold.len(), t.len());
        assert!(!hold.is_empty());
        assert!(train.iter().all(|p| !hold.iter().any(|h| h.name == p.name)));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(PresetTable::parse("x 0 0,1 0 0 0").is_err());
        assert!(PresetTable::parse("x 0 1 0 0 0").is_err());
        assert!(PresetTable::parse("x 0 0,2,3 0,0,0 1,1,1 0,0,0").is_err());
        assert!(PresetTable::parse("x 2 0 0 0 0").is_err());
        assert!(PresetTable::parse("x 0 0,1 0,0 0,0").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PresetTable::parse("x 0 0 0 0 0").unwrap();
        let b = PresetTable::parse("x 0 0 0 1 0").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert_eq!(PresetTable::default().hash(), PresetTable::default().hash());
    }
}
