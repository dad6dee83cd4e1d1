use std::time::Instant;

use hfclass::channel::{apply_plan, draw_plan, PresetPool, PresetTable};
use hfclass::dataset::{generate_record, stream_id, DatasetRecord, Split};
use hfclass::modems::{ModeRegistry, SymbolSource, MIN_DURATION_S};
use hfclass::nn::{evaluate_loss_accuracy, records_to_tensor, train, Adam, Architecture, Model, TrainConfig};
use hfclass::SeededRng;

fn record_at_snr(reg: &ModeRegistry, pool: &PresetTable, label: u16, index: u64, snr_db: f64) -> DatasetRecord {
    let mode = reg.by_label(label as usize).unwrap();
    let rng = SeededRng::new(2024, ((label as u64) << 32) | index);
    let mut symbols = SymbolSource::for_mode(mode, rng.derive(1));
    let modem = reg.synthesize(mode, MIN_DURATION_S, &mut symbols, &mut rng.derive(2)).unwrap();
    let mut plan = draw_plan(&mut rng.derive(3), &pool.pool(PresetPool::Training)).unwrap();
    plan.snr_db = snr_db;
    let iq = apply_plan(&modem, &plan).unwrap();
    DatasetRecord::from_f64(label, &iq.samples).unwrap()
}

#[test]
fn desk_model_memorizes_one_batch() {
    let reg = ModeRegistry::default();
    let presets = PresetTable::default();
    let pool = presets.pool(PresetPool::Training);
    let records: Vec<DatasetRecord> = (0..64u32)
        .map(|i| {
            let label = (i % 18) as u16;
            generate_record(&reg, &pool, 5, label, stream_id(label, i, Split::Train)).unwrap().0
        })
        .collect();
    let refs: Vec<&DatasetRecord> = records.iter().collect();
    let x = records_to_tensor(&refs);
    let labels: Vec<usize> = records.iter().map(|r| r.label_id as usize).collect();

    let mut model = Model::new(&Architecture::desk(18), 1).unwrap();
    let mut adam = Adam::new(0.9, 0.999, 1e-8);
    let mut dropout = SeededRng::new(1, 2);
    let start = Instant::now();
    let mut acc = 0.0;
    for step in 0..200 {
        model.set_training(true);
        model.zero_grads();
        model.loss_and_backward(&x, &labels, Some(&mut dropout)).unwrap();
        adam.step(&mut model, 1e-3);
        model.set_training(false);
        if step % 10 == 9 {
            acc = evaluate_loss_accuracy(&model, &records, 64).unwrap().1;
            if acc >= 0.99 {
                eprintln!("memorized after {} steps in {:.1?}", step + 1, start.elapsed());
                break;
            }
        }
    }
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn carrier_and_morse_separate_within_five_epochs() {
    let full = ModeRegistry::default();
    let text: String = ["morse", "sine_carrier"]
        .iter()
        .map(|name| {
            let m = full.by_name(name).unwrap();
            format!("{} {} {} {}\n", m.name, m.modulator_kind.as_str(), m.nominal_bandwidth_hz, m.params_string())
        })
        .collect();
    let reg = ModeRegistry::parse(&text).unwrap();
    let presets = PresetTable::default();
    let mut all: Vec<DatasetRecord> = Vec::new();
    for i in 0..100u64 {
        for label in 0..2u16 {
            let snr = 15.0 + 10.0 * (i as f64 / 100.0);
            all.push(record_at_snr(&reg, &presets, label, i, snr));
        }
    }
    let val = all.split_off(160);
    let mut model = Model::new(&Architecture::desk(2), 3).unwrap();
    let config = TrainConfig { epochs: 5, batch_size: 16, seed: 3, ..TrainConfig::default() };
    let outcome = train(&mut model, &all, &val, &config, |e, _, _| {
        eprintln!("{}", e.csv_row());
        Ok(())
    })
    .unwrap();
    let best = outcome.log.iter().map(|e| e.val_acc).fold(0.0, f64::max);
    assert!(best >= 0.99, "best validation accuracy {best}");
}

#[test]
fn training_log_is_reproducible() {
    let reg = ModeRegistry::default();
    let presets = PresetTable::default();
    let pool = presets.pool(PresetPool::Training);
    let make = |n: u32, split| -> Vec<DatasetRecord> {
        (0..n)
            .map(|i| {
                let label = (i % 18) as u16;
                generate_record(&reg, &pool, 9, label, stream_id(label, i, split)).unwrap().0
            })
            .collect()
    };
    let (tr, va) = (make(36, Split::Train), make(18, Split::Val));
    let arch = Architecture::conv_stack(&[4, 4, 4, 4, 4, 4], 7, 16, 0.5, 18);
    let config = TrainConfig { epochs: 2, batch_size: 8, seed: 4, ..TrainConfig::default() };
    let run = || {
        let mut model = Model::new(&arch, 2).unwrap();
        let out = train(&mut model, &tr, &va, &config, |_, _, _| Ok(())).unwrap();
        (out.log, model)
    };
    let (log_a, model_a) = run();
    let (log_b, model_b) = run();
    assert_eq!(log_a, log_b);
    assert_eq!(model_a.params(), model_b.params());
}
