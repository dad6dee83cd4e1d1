use std::path::Path;

use hfclass::channel::{apply_plan, draw_plan, AugmentationPlan, PresetPool, PresetTable, SNR_RANGE_DB};
use hfclass::dataset::{
    build_dataset, read_raw_iq, read_split, write_dataset, write_raw_iq, BuildConfig, Manifest,
};
use hfclass::dsp::spectrogram_db;
use hfclass::eval::{classify_windows, evaluate, top_k_accuracy, write_report};
use hfclass::modems::{list_modes, ModeRegistry, SymbolSource, MIN_DURATION_S};
use hfclass::nn::{load_checkpoint, train_to_files, Architecture, Model, TrainConfig};
use hfclass::{Error, Result, SeededRng, SYSTEM_RATE_HZ};

use crate::args::{ClassifyArgs, EvalArgs, GenerateArgs, InspectArgs, TrainArgs};
use crate::pgm::write_pgm;

pub const SPECTROGRAM_NFFT: usize = 256;
pub const SPECTROGRAM_HOP: usize = 64;
pub const SPECTROGRAM_RANGE_DB: f64 = 60.0;

const INSPECT_STREAM: u64 = 0x696e_7370;
const DEFAULT_INSPECT_SNR_DB: f64 = 25.0;

pub fn modes() -> Result<()> {
    println!("{:>5}  {:<24} {:>8}  params", "label", "name", "bw_hz");
    for m in list_modes() {
        println!(
            "{:>5}  {:<24} {:>8}  {} {}",
            m.label_id,
            m.name,
            m.nominal_bandwidth_hz,
            m.modulator_kind.as_str(),
            m.params_string()
        );
    }
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    if a.splits.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "--splits takes three comma-separated fractions, got {}",
            a.splits.len()
        )));
    }
    let config = BuildConfig {
        per_mode: a.per_mode,
        split_fracs: [a.splits[0], a.splits[1], a.splits[2]],
        master_seed: a.seed,
    };
    config.validate()?;
    eprintln!("seed: {}", a.seed);
    let registry = ModeRegistry::default();
    let data = build_dataset(&registry, &PresetTable::default(), &config)?;
    for path in write_dataset(&a.out, &data)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn resolve_arch(spec: &str, classes: usize) -> Result<Architecture> {
    let arch = match spec {
        "desk" => Architecture::desk(classes),
        "raw-iq" => Architecture::raw_iq(classes),
        file => Architecture::parse(&std::fs::read_to_string(file)?)?,
    };
    if arch.class_count() != classes {
        return Err(Error::ClassCountMismatch { model: arch.class_count(), data: classes });
    }
    Ok(arch)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        lr_decay: a.lr_decay,
        lr_step_epochs: a.lr_step,
        seed: a.seed,
        ..TrainConfig::default()
    };
    config.validate()?;
    let (train_shard, train_manifest, _) = read_split(&a.train)?;
    let (val_shard, val_manifest, _) = read_split(&a.val)?;
    if train_manifest.labels != val_manifest.labels {
        return Err(Error::Manifest("training and validation label tables differ".into()));
    }
    let arch = resolve_arch(&a.arch, train_manifest.class_count())?;
    eprintln!("seed: {}", a.seed);
    let mut model = Model::new(&arch, a.seed)?;
    eprintln!(
        "model: {} parameters, {} train / {} val records",
        model.param_count(),
        train_shard.len(),
        val_shard.len()
    );
    let log = a.log.clone().unwrap_or_else(|| a.out.with_extension("log.csv"));
    println!("{}", hfclass::nn::LOG_HEADER);
    let outcome = train_to_files(
        &mut model,
        &train_shard.records,
        &val_shard.records,
        &config,
        &a.out,
        &log,
        |e| println!("{}", e.csv_row()),
    )?;
    eprintln!("best epoch {} saved to {}", outcome.best_epoch, a.out.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let (shard, manifest, meta) = read_split(&a.shard)?;
    let results = evaluate(&model, &shard, meta.as_deref())?;
    write_report(&results, &manifest.labels, &a.out)?;
    println!("records: {}", results.len());
    println!("top1: {:.4}", top_k_accuracy(&results, 1)?);
    println!("top3: {:.4}", top_k_accuracy(&results, 3.min(model.class_count()))?);
    println!("reports: {}", a.out.display());
    Ok(())
}

fn class_names(model: &Model, manifest: Option<&Path>) -> Result<Vec<String>> {
    let names = match manifest {
        Some(p) => Manifest::read(p)?.labels,
        None => ModeRegistry::default().names(),
    };
    if names.len() != model.class_count() {
        return Err(Error::ClassCountMismatch { model: model.class_count(), data: names.len() });
    }
    Ok(names)
}

pub fn classify(a: ClassifyArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let names = class_names(&model, a.manifest.as_deref())?;
    let samples = read_raw_iq(&a.iq)?;
    for (w, ranking) in classify_windows(&model, &samples)?.iter().enumerate() {
        let top: Vec<String> = ranking.iter().take(3).map(|(l, p)| format!("{} {:.6}", names[*l], p)).collect();
        println!("window {w}: {}", top.join(", "));
    }
    Ok(())
}

fn synthesize_for_inspect(a: &InspectArgs, mode_name: &str) -> Result<Vec<num_complex::Complex64>> {
    let registry = ModeRegistry::default();
    let mode = registry.by_name(mode_name)?.clone();
    let presets = PresetTable::default();
    let snr = a.snr.unwrap_or(DEFAULT_INSPECT_SNR_DB);
    if !(SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&snr) {
        return Err(Error::out_of_range("snr", snr, SNR_RANGE_DB.0, SNR_RANGE_DB.1));
    }
    let preset = match &a.preset {
        Some(name) => Some(presets.by_name(name)?.clone()),
        None => None,
    };
    let seed = a.seed.unwrap_or(1);
    eprintln!("seed: {seed}");
    let rng = SeededRng::new(seed, INSPECT_STREAM);
    let mut symbols = SymbolSource::for_mode(&mode, rng.derive(1));
    let modem = registry.synthesize(&mode, MIN_DURATION_S, &mut symbols, &mut rng.derive(2))?;
    let mut plan = if a.augment {
        draw_plan(&mut rng.derive(3), &presets.pool(PresetPool::All))?
    } else {
        AugmentationPlan::near_identity(snr, rng.derive(3))
    };
    if a.snr.is_some() || !a.augment {
        plan.snr_db = snr;
    }
    if let Some(p) = preset {
        plan.preset = p;
    }
    eprintln!(
        "mode {} center {:.1} Hz, preset {}, snr {:.1} dB, offset {:.1} Hz",
        mode.name, modem.center_hz, plan.preset.name, plan.snr_db, plan.freq_offset_hz
    );
    Ok(apply_plan(&modem, &plan)?.samples)
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let samples = match (&a.iq, &a.mode) {
        (Some(path), _) => read_raw_iq(path)?,
        (None, Some(mode)) => synthesize_for_inspect(&a, mode)?,
        (None, None) => return Err(Error::InvalidArgument("give --iq or --mode".into())),
    };
    if samples.len() < SPECTROGRAM_NFFT {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {SPECTROGRAM_NFFT} samples"),
            actual: format!("{} samples", samples.len()),
        });
    }
    if let Some(path) = &a.iq_out {
        write_raw_iq(path, &samples)?;
    }
    let rows = spectrogram_db(&samples, SPECTROGRAM_NFFT, SPECTROGRAM_HOP, SPECTROGRAM_RANGE_DB);
    write_pgm(&a.out, &rows, SPECTROGRAM_RANGE_DB)?;
    println!(
        "{}: {} x {} ({} Hz per column, {:.1} ms per row, {} samples)",
        a.out.display(),
        SPECTROGRAM_NFFT,
        rows.len(),
        SYSTEM_RATE_HZ / SPECTROGRAM_NFFT as f64,
        1e3 * SPECTROGRAM_HOP as f64 / SYSTEM_RATE_HZ,
        samples.len()
    );
    Ok(())
}
