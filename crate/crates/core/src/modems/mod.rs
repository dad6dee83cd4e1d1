//! Registry of signal classes and the clean baseband modulators behind them.
//!
//! The default registry covers 18 classes spanning on-off keying, 2-FSK,
//! M-FSK, GFSK, raised-cosine BPSK/QPSK, a root-raised-cosine serial-tone
//! 8-PSK, AM, both SSB sidebands, a bare carrier and a Hell-like FSK. All
//! synthesis runs at [`SYNTH_RATE_HZ`](crate::SYNTH_RATE_HZ).

mod synth;
mod voice;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::signal::{IqSignal, SeededRng};

pub use synth::{synthesize_mode, USABLE_HALF_BAND_HZ};
pub use voice::{band_limit_real, synthesize_voice_program, speech_with_envelope, VoiceKind};

/// Registry text shipped with the crate.
pub const DEFAULT_REGISTRY: &str = include_str!("modes.conf");

/// Shortest clean signal any caller may request.
pub const MIN_DURATION_S: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModulatorKind {
    Morse,
    Cpfsk,
    Gfsk,
    PskRaisedCosine,
    PskRootRaisedCosine,
    Am,
    Usb,
    Lsb,
    Carrier,
}

impl ModulatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModulatorKind::Morse => "morse",
            ModulatorKind::Cpfsk => "cpfsk",
            ModulatorKind::Gfsk => "gfsk",
            ModulatorKind::PskRaisedCosine => "psk_rc",
            ModulatorKind::PskRootRaisedCosine => "psk_rrc",
            ModulatorKind::Am => "am",
            ModulatorKind::Usb => "usb",
            ModulatorKind::Lsb => "lsb",
            ModulatorKind::Carrier => "carrier",
        }
    }

    /// Constant-envelope families.
    pub fn is_fsk(self) -> bool {
        matches!(self, ModulatorKind::Cpfsk | ModulatorKind::Gfsk)
    }
}

impl fmt::Display for ModulatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModulatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "morse" => ModulatorKind::Morse,
            "cpfsk" => ModulatorKind::Cpfsk,
            "gfsk" => ModulatorKind::Gfsk,
            "psk_rc" => ModulatorKind::PskRaisedCosine,
            "psk_rrc" => ModulatorKind::PskRootRaisedCosine,
            "am" => ModulatorKind::Am,
            "usb" => ModulatorKind::Usb,
            "lsb" => ModulatorKind::Lsb,
            "carrier" => ModulatorKind::Carrier,
            other => return Err(format!("unknown modulator kind {other:?}")),
        })
    }
}

/// One registered signal class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub label_id: usize,
    pub name: String,
    pub modulator_kind: ModulatorKind,
    pub params: BTreeMap<String, f64>,
    pub nominal_bandwidth_hz: f64,
}

impl ModeSpec {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub(crate) fn require(&self, key: &str) -> Result<f64> {
        self.param(key).ok_or_else(|| {
            Error::InvalidArgument(format!("mode {} is missing parameter {key}", self.name))
        })
    }

    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Ordered set of modes; label ids are the positions in the list.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRegistry {
    modes: Vec<ModeSpec>,
}

impl Default for ModeRegistry {
    fn default() -> Self {
        Self::parse(DEFAULT_REGISTRY).expect("built-in registry parses")
    }
}

impl ModeRegistry {
    /// Parses the whitespace-separated registry format (see `modes.conf`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut modes: Vec<ModeSpec> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cfg = |msg: String| Error::Config { line: i + 1, msg };
            let mut fields = line.split_whitespace();
            let name = fields.next().unwrap().to_string();
            let kind: ModulatorKind = fields
                .next()
                .ok_or_else(|| cfg("missing modulator kind".into()))?
                .parse()
                .map_err(cfg)?;
            let bw: f64 = fields
                .next()
                .ok_or_else(|| cfg("missing bandwidth".into()))?
                .parse()
                .map_err(|e| cfg(format!("bandwidth: {e}")))?;
            if !(bw > 0.0 && bw <= crate::SYSTEM_RATE_HZ) {
                return Err(cfg(format!("bandwidth {bw} Hz outside (0, 4000]")));
            }
            let mut params = BTreeMap::new();
            for kv in fields {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| cfg(format!("expected key=value, got {kv:?}")))?;
                let v: f64 = v.parse().map_err(|e| cfg(format!("{k}: {e}")))?;
                params.insert(k.to_string(), v);
            }
            if modes.iter().any(|m| m.name == name) {
                return Err(cfg(format!("duplicate mode {name}")));
            }
            modes.push(ModeSpec {
                label_id: modes.len(),
                name,
                modulator_kind: kind,
                params,
                nominal_bandwidth_hz: bw,
            });
        }
        if modes.is_empty() {
            return Err(Error::Config {
                line: 0,
                msg: "registry has no modes".into(),
            });
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn by_name(&self, name: &str) -> Result<&ModeSpec> {
        self.modes
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::UnregisteredMode(name.to_string()))
    }

    pub fn by_label(&self, label: usize) -> Option<&ModeSpec> {
        self.modes.get(label)
    }

    pub fn names(&self) -> Vec<String> {
        self.modes.iter().map(|m| m.name.clone()).collect()
    }

    /// Synthesizes `mode`, which must be one of this registry's entries.
    pub fn synthesize(
        &self,
        mode: &ModeSpec,
        duration_s: f64,
        src: &mut SymbolSource,
        rng: &mut SeededRng,
    ) -> Result<ModemOutput> {
        if self.modes.get(mode.label_id) != Some(mode) {
            return Err(Error::UnregisteredMode(mode.name.clone()));
        }
        synthesize_mode(mode, duration_s, src, rng)
    }
}

/// The default 18-entry registry.
pub fn list_modes() -> Vec<ModeSpec> {
    ModeRegistry::default().modes
}

/// A clean synthesized waveform at the internal rate.
#[derive(Debug, Clone)]
pub struct ModemOutput {
    pub signal: IqSignal,
    pub mode: ModeSpec,
    /// Center of the occupied band relative to the 0 Hz of the baseband.
    pub center_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    RandomBits,
    RandomText,
    /// Fixed preamble of `preamble` symbols at the start of every `frame`.
    PreamblePayload { preamble: usize, frame: usize },
}

/// Message content for a modulator.
#[derive(Debug, Clone)]
pub struct SymbolSource {
    kind: SymbolKind,
    rng: SeededRng,
    position: usize,
}

// Fixed so every record of a mode carries the same preamble.
const PREAMBLE_SEED: u64 = 0x4854_5052_4541_4d42;

impl SymbolSource {
    pub fn new(kind: SymbolKind, rng: SeededRng) -> Self {
        Self {
            kind,
            rng,
            position: 0,
        }
    }

    /// The source a mode uses in dataset generation.
    pub fn for_mode(mode: &ModeSpec, rng: SeededRng) -> Self {
        let kind = match mode.modulator_kind {
            ModulatorKind::Morse => SymbolKind::RandomText,
            _ => match (mode.param("preamble"), mode.param("frame")) {
                (Some(p), Some(f)) => SymbolKind::PreamblePayload {
                    preamble: p as usize,
                    frame: f as usize,
                },
                _ => SymbolKind::RandomBits,
            },
        };
        Self::new(kind, rng)
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    /// Next symbol from an alphabet of size `m`.
    pub fn next_symbol(&mut self, m: usize) -> usize {
        let pos = self.position;
        self.position += 1;
        if let SymbolKind::PreamblePayload { preamble, frame } = self.kind {
            let within = pos % frame.max(1);
            if within < preamble {
                let mut fixed = SeededRng::new(PREAMBLE_SEED, within as u64);
                return fixed.index(m);
            }
        }
        self.rng.index(m)
    }

    /// Next character of plain text: letters, digits and word spaces.
    pub fn next_char(&mut self) -> char {
        const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        self.position += 1;
        if self.rng.bernoulli(0.18) {
            ' '
        } else {
            ALPHABET[self.rng.index(ALPHABET.len())] as char
        }
    }

    pub fn next_unit(&mut self) -> f64 {
        self.rng.uniform(0.0, 1.0)
    }
}
