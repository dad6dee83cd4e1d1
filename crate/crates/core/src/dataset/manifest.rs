//! Plain-text side files: the shard manifest and per-record metadata.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::channel::PresetTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Holdout,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Holdout];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Holdout => "holdout",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "holdout" => Ok(Split::Holdout),
            other => Err(Error::Manifest(format!("unknown split '{other}'"))),
        }
    }
}

/// Key/value description of one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub split: Split,
    pub master_seed: u64,
    pub per_mode: usize,
    pub record_count: u64,
    pub preset_hash: String,
    /// Label table, index = label id.
    pub labels: Vec<String>,
}

impl Manifest {
    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format = HFDS").unwrap();
        writeln!(s, "version = {}", super::SHARD_VERSION).unwrap();
        writeln!(s, "split = {}", self.split.as_str()).unwrap();
        writeln!(s, "master_seed = {}", self.master_seed).unwrap();
        writeln!(s, "per_mode = {}", self.per_mode).unwrap();
        writeln!(s, "record_count = {}", self.record_count).unwrap();
        writeln!(s, "samples_per_record = {}", crate::RECORD_LEN).unwrap();
        writeln!(s, "sample_rate_hz = {}", crate::SYSTEM_RATE_HZ).unwrap();
        writeln!(s, "preset_hash = {}", self.preset_hash).unwrap();
        writeln!(s, "class_count = {}", self.labels.len()).unwrap();
        for (id, name) in self.labels.iter().enumerate() {
            writeln!(s, "label {id} = {name}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut split = None;
        let mut master_seed = None;
        let mut per_mode = None;
        let mut record_count = None;
        let mut preset_hash = None;
        let mut class_count = None;
        let mut labels: Vec<(usize, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Manifest(format!("line {}: expected key = value", n + 1)))?;
            let num = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| Error::Manifest(format!("line {}: bad number '{v}'", n + 1)))
            };
            if let Some(id) = key.strip_prefix("label ") {
                let id = num(id.trim())? as usize;
                labels.push((id, value.to_string()));
                continue;
            }
            match key {
                "format" if value != "HFDS" => {
                    return Err(Error::Manifest(format!("unknown format '{value}'")))
                }
                "version" => {
                    let v = num(value)? as u32;
                    if v != super::SHARD_VERSION {
                        return Err(Error::UnsupportedVersion(v));
                    }
                }
                "split" => split = Some(value.parse()?),
                "master_seed" => master_seed = Some(num(value)?),
                "per_mode" => per_mode = Some(num(value)? as usize),
                "record_count" => record_count = Some(num(value)?),
                "preset_hash" => preset_hash = Some(value.to_string()),
                "class_count" => class_count = Some(num(value)? as usize),
                _ => {}
            }
        }
        labels.sort_by_key(|(id, _)| *id);
        if labels.iter().enumerate().any(|(i, (id, _))| i != *id) {
            return Err(Error::Manifest("label ids are not 0..n".into()));
        }
        let labels: Vec<String> = labels.into_iter().map(|(_, name)| name).collect();
        let missing = |k: &str| Error::Manifest(format!("missing key '{k}'"));
        if let Some(c) = class_count {
            if c != labels.len() {
                return Err(Error::Manifest(format!(
                    "class_count {c} but {} labels listed",
                    labels.len()
                )));
            }
        }
        Ok(Self {
            split: split.ok_or_else(|| missing("split"))?,
            master_seed: master_seed.ok_or_else(|| missing("master_seed"))?,
            per_mode: per_mode.ok_or_else(|| missing("per_mode"))?,
            record_count: record_count.ok_or_else(|| missing("record_count"))?,
            preset_hash: preset_hash.ok_or_else(|| missing("preset_hash"))?,
            labels,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Fails if the shard was generated with a different preset table.
    pub fn check_presets(&self, table: &PresetTable) -> Result<()> {
        if self.preset_hash != table.hash() {
            return Err(Error::Manifest(format!(
                "preset hash {} does not match table {}",
                self.preset_hash,
                table.hash()
            )));
        }
        Ok(())
    }
}

/// Generation parameters of one stored record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub label_id: u16,
    pub mode: String,
    pub stream_id: u64,
    pub preset: String,
    pub snr_db: f64,
    pub freq_offset_hz: f64,
    pub rate_offset_frac: f64,
    pub excess_bw_frac: f64,
    pub impulse_prob: f64,
    pub center_hz: f64,
}

const META_HEADER: &str =
    "index,label_id,mode,stream_id,preset,snr_db,freq_offset_hz,rate_offset_frac,excess_bw_frac,impulse_prob,center_hz";

pub fn write_record_meta(path: &Path, meta: &[RecordMeta]) -> Result<()> {
    let mut s = String::with_capacity(META_HEADER.len() + meta.len() * 96);
    s.push_str(META_HEADER);
    s.push('\n');
    for (i, m) in meta.iter().enumerate() {
        writeln!(
            s,
            "{i},{},{},{},{},{:.6},{:.6},{:.8},{:.6},{:.8},{:.6}",
            m.label_id,
            m.mode,
            m.stream_id,
            m.preset,
            m.snr_db,
            m.freq_offset_hz,
            m.rate_offset_frac,
            m.excess_bw_frac,
            m.impulse_prob,
            m.center_hz
        )
        .unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_record_meta(path: &Path) -> Result<Vec<RecordMeta>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(META_HEADER) {
        return Err(Error::Manifest(format!("{}: unexpected header", path.display())));
    }
    let bad = |n: usize| Error::Manifest(format!("{}: malformed row {n}", path.display()));
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad(n + 1));
        }
        let fl = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n + 1));
        out.push(RecordMeta {
            label_id: f[1].parse().map_err(|_| bad(n + 1))?,
            mode: f[2].to_string(),
            stream_id: f[3].parse().map_err(|_| bad(n + 1))?,
            preset: f[4].to_string(),
            snr_db: fl(5)?,
            freq_offset_hz: fl(6)?,
            rate_offset_frac: fl(7)?,
            excess_bw_frac: fl(8)?,
            impulse_prob: fl(9)?,
            center_hz: fl(10)?,
        });
    }
    Ok(out)
}
