//! Labeled record generation and the on-disk dataset layout.
//!
//! A dataset directory holds, per split, `<split>.hfds` (records),
//! `<split>.manifest` (key/value text) and `<split>.records.csv` (the
//! channel draw behind every record).

mod manifest;
mod shard;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use manifest::{read_record_meta, write_record_meta, Manifest, RecordMeta, Split};
pub use shard::{
    load_shard, read_raw_iq, read_shard, write_raw_iq, write_shard, DatasetRecord, Shard, ShardHeader,
    ShardReader, HEADER_BYTES, RECORD_BYTES, SHARD_MAGIC, SHARD_VERSION,
};

use crate::channel::{apply_plan, draw_plan, PresetPool, PresetTable, WattersonPreset};
use crate::error::{Error, Result};
use crate::modems::{ModeRegistry, SymbolSource, MIN_DURATION_S};
use crate::signal::SeededRng;

/// Marks holdout streams so they never share a seed with train/val.
pub const HOLDOUT_STREAM_BIT: u64 = 1 << 63;
pub const MIN_PER_MODE: usize = 10;

const TAG_SYMBOLS: u64 = 1;
const TAG_MODEM: u64 = 2;
const TAG_PLAN: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub per_mode: usize,
    /// Train, validation and holdout fractions of `per_mode`.
    pub split_fracs: [f64; 3],
    pub master_seed: u64,
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_mode < MIN_PER_MODE {
            return Err(Error::InvalidArgument(format!(
                "per_mode must be at least {MIN_PER_MODE}, got {}",
                self.per_mode
            )));
        }
        if self.split_fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidArgument(format!("split fractions {:?} out of [0, 1]", self.split_fracs)));
        }
        let sum: f64 = self.split_fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Records per mode in each split; holdout takes the remainder.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.per_mode;
        let train = ((n as f64 * self.split_fracs[0]).round() as usize).min(n);
        let val = ((n as f64 * self.split_fracs[1]).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

pub fn stream_id(label_id: u16, index: u32, split: Split) -> u64 {
    let id = ((label_id as u64) << 32) | index as u64;
    if split == Split::Holdout {
        id | HOLDOUT_STREAM_BIT
    } else {
        id
    }
}

/// All records of one split, label-major.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub manifest: Manifest,
    pub records: Vec<DatasetRecord>,
    pub meta: Vec<RecordMeta>,
}

#[derive(Debug, Clone)]
pub struct BuiltDataset {
    pub train: SplitData,
    pub val: SplitData,
    pub holdout: SplitData,
}

impl BuiltDataset {
    pub fn splits(&self) -> [&SplitData; 3] {
        [&self.train, &self.val, &self.holdout]
    }
}

/// Synthesizes, impairs and normalizes one record.
pub fn generate_record(
    registry: &ModeRegistry,
    pool: &[&WattersonPreset],
    master_seed: u64,
    label_id: u16,
    stream: u64,
) -> Result<(DatasetRecord, RecordMeta)> {
    let mode = registry
        .by_label(label_id as usize)
        .ok_or_else(|| Error::InvalidLabel { label: label_id as usize, classes: registry.len() })?;
    let rng = SeededRng::new(master_seed, stream);
    let mut symbols = SymbolSource::for_mode(mode, rng.derive(TAG_SYMBOLS));
    let modem = registry.synthesize(mode, MIN_DURATION_S, &mut symbols, &mut rng.derive(TAG_MODEM))?;
    let plan = draw_plan(&mut rng.derive(TAG_PLAN), pool)?;
    let iq = apply_plan(&modem, &plan)?;
    let record = DatasetRecord::from_f64(label_id, &iq.samples)?;
    let power = record.power();
    if (power - 1.0).abs() > 1e-3 {
        return Err(Error::out_of_range("record power", power, 1.0 - 1e-3, 1.0 + 1e-3));
    }
    let meta = RecordMeta {
        label_id,
        mode: mode.name.clone(),
        stream_id: stream,
        preset: plan.preset.name.clone(),
        snr_db: plan.snr_db,
        freq_offset_hz: plan.freq_offset_hz,
        rate_offset_frac: plan.rate_offset_frac,
        excess_bw_frac: plan.excess_bw_frac,
        impulse_prob: plan.impulse_prob,
        center_hz: modem.center_hz,
    };
    Ok((record, meta))
}

/// Builds train/val/holdout splits. Record `i` of each mode lands in a split
/// determined by `i` alone, so the splits are disjoint before anything is
/// generated. Train and val draw from the training preset pool; holdout uses
/// the reserved presets and its own stream space.
pub fn build_dataset(
    registry: &ModeRegistry,
    presets: &PresetTable,
    config: &BuildConfig,
) -> Result<BuiltDataset> {
    config.validate()?;
    if registry.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("{} modes exceed the u16 label space", registry.len())));
    }
    let counts = config.split_counts();
    let training_pool = presets.pool(PresetPool::Training);
    let holdout_pool = presets.pool(PresetPool::Holdout);
    if training_pool.is_empty() || (counts[2] > 0 && holdout_pool.is_empty()) {
        return Err(Error::InvalidArgument("preset table lacks a training or holdout pool".into()));
    }

    let mut offset = 0usize;
    let mut build = |split: Split, count: usize| -> Result<SplitData> {
        let pool = if split == Split::Holdout { &holdout_pool } else { &training_pool };
        let jobs: Vec<(u16, u64)> = (0..registry.len() as u16)
            .flat_map(|label| {
                (offset..offset + count).map(move |i| (label, stream_id(label, i as u32, split)))
            })
            .collect();
        offset += count;
        let generated = jobs
            .par_iter()
            .map(|&(label, stream)| generate_record(registry, pool, config.master_seed, label, stream))
            .collect::<Result<Vec<_>>>()?;
        let (records, meta): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
        Ok(SplitData {
            manifest: Manifest {
                split,
                master_seed: config.master_seed,
                per_mode: count,
                record_count: records.len() as u64,
                preset_hash: presets.hash().to_string(),
                labels: registry.names(),
            },
            records,
            meta,
        })
    };
    let train = build(Split::Train, counts[0])?;
    let val = build(Split::Val, counts[1])?;
    let holdout = build(Split::Holdout, counts[2])?;
    Ok(BuiltDataset { train, val, holdout })
}

pub fn shard_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.hfds", split.as_str()))
}

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.manifest", split.as_str()))
}

pub fn meta_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.records.csv", split.as_str()))
}

/// Side-file paths that belong to a shard path.
pub fn companion_paths(shard: &Path) -> (PathBuf, PathBuf) {
    let stem = shard.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = shard.parent().unwrap_or(Path::new(""));
    (dir.join(format!("{stem}.manifest")), dir.join(format!("{stem}.records.csv")))
}

/// Writes one split's shard, manifest and record metadata.
pub fn write_split(shard: &Path, data: &SplitData) -> Result<()> {
    write_shard(shard, &data.records, data.manifest.class_count() as u32)?;
    let (manifest, meta) = companion_paths(shard);
    data.manifest.write(&manifest)?;
    write_record_meta(&meta, &data.meta)
}

/// Writes every non-empty split into `dir`; returns the shard paths written.
pub fn write_dataset(dir: &Path, data: &BuiltDataset) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for split in data.splits() {
        if split.records.is_empty() {
            continue;
        }
        let path = shard_path(dir, split.manifest.split);
        write_split(&path, split)?;
        written.push(path);
    }
    Ok(written)
}

/// Loads a shard with its manifest and, when present, record metadata.
pub fn read_split(shard: &Path) -> Result<(Shard, Manifest, Option<Vec<RecordMeta>>)> {
    let data = read_shard(shard)?;
    let (manifest_file, meta_file) = companion_paths(shard);
    let manifest = Manifest::read(&manifest_file)?;
    if manifest.record_count != data.header.record_count
        || manifest.class_count() != data.class_count()
    {
        return Err(Error::Manifest(format!(
            "{} disagrees with its shard header",
            manifest_file.display()
        )));
    }
    let meta = if meta_file.exists() {
        let m = read_record_meta(&meta_file)?;
        if m.len() != data.len() {
            return Err(Error::Manifest(format!(
                "{} has {} rows for {} records",
                meta_file.display(),
                m.len(),
                data.len()
            )));
        }
        Some(m)
    } else {
        None
    };
    Ok((data, manifest, meta))
}
