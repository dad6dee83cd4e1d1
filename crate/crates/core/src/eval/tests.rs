use num_complex::Complex32;
use proptest::prelude::*;

use super::*;
use crate::dataset::ShardHeader;
use crate::nn::Architecture;

/// A result whose true label sits at 1-based `rank` among `classes`.
fn at_rank(truth: usize, rank: usize, classes: usize, snr: f64) -> EvalRecordResult {
    let mut order: Vec<usize> = (0..classes).filter(|&c| c != truth).collect();
    order.insert(rank - 1, truth);
    let mut probs = vec![0.0; classes];
    let total: f64 = (1..=classes).map(|i| i as f64).sum();
    for (pos, &c) in order.iter().enumerate() {
        probs[c] = (classes - pos) as f64 / total;
    }
    EvalRecordResult::new(truth, &probs, Some(snr))
}

#[test]
fn top_k_counting() {
    let rs = vec![at_rank(0, 1, 18, 0.0), at_rank(1, 2, 18, 0.0), at_rank(2, 5, 18, 0.0)];
    assert!((top_k_accuracy(&rs, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(top_k_accuracy(&rs, 18).unwrap(), 1.0);
    let plain = rs.iter().filter(|r| r.predicted() == r.true_label).count() as f64 / 3.0;
    assert_eq!(top_k_accuracy(&rs, 1).unwrap(), plain);
    assert!(top_k_accuracy(&rs, 19).is_err());
    assert!(top_k_accuracy(&rs, 0).is_err());
}

#[test]
fn ties_rank_lower_label_first() {
    let r = EvalRecordResult::new(1, &[0.25, 0.25, 0.5], None);
    assert_eq!(r.ranking.iter().map(|(l, _)| *l).collect::<Vec<_>>(), vec![2, 0, 1]);
    assert_eq!(r.rank_of_truth(), 3);
}

#[test]
fn snr_bins() {
    let rs: Vec<_> = (0..10).map(|i| at_rank(i % 3, 1, 3, 20.0)).collect();
    let bins = snr_binned_accuracy(&rs, 5.0).unwrap();
    assert_eq!(bins.len(), 7);
    assert_eq!(bins[0].lo_db, -10.0);
    assert_eq!(bins[6].hi_db, 25.0);
    let populated: Vec<_> = bins.iter().filter(|b| b.count > 0).collect();
    assert_eq!(populated.len(), 1);
    assert_eq!(populated[0].accuracy, Some(1.0));
    assert_eq!(populated[0].center_db(), 22.5);
    assert!(bins.iter().filter(|b| b.count == 0).all(|b| b.accuracy.is_none()));
    assert!(snr_binned_accuracy(&rs, 0.0).is_err());
    assert!(snr_binned_accuracy(&rs, -1.0).is_err());

    let edge = snr_binned_accuracy(&[at_rank(0, 2, 3, 25.0), at_rank(0, 1, 3, -10.0)], 5.0).unwrap();
    assert_eq!(edge[6].count, 1);
    assert_eq!(edge[6].accuracy, Some(0.0));
    assert_eq!(edge[0].count, 1);
    assert!(snr_binned_accuracy(&[EvalRecordResult::new(0, &[1.0], None)], 5.0).is_err());
}

#[test]
fn perfect_predictions_give_diagonal_confusion() {
    let rs: Vec<_> = (0..18).flat_map(|c| (0..10).map(move |_| at_rank(c, 1, 18, 5.0))).collect();
    let cm = confusion_matrix(&rs, 18).unwrap();
    for t in 0..18 {
        for p in 0..18 {
            assert_eq!(cm.get(t, p), if t == p { 10 } else { 0 });
        }
    }
    assert_eq!(top_k_accuracy(&rs, 1).unwrap(), 1.0);
}

fn arbitrary_results() -> impl Strategy<Value = Vec<EvalRecordResult>> {
    prop::collection::vec((0usize..6, prop::collection::vec(0.0f64..1.0, 6), -10.0f64..25.0), 1..80).prop_map(
        |rows| {
            rows.into_iter()
                .map(|(t, w, snr)| {
                    let s: f64 = w.iter().sum::<f64>() + 1e-12;
                    let p: Vec<f64> = w.iter().map(|v| v / s).collect();
                    EvalRecordResult::new(t, &p, Some(snr))
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn metric_identities(rs in arbitrary_results()) {
        let cm = confusion_matrix(&rs, 6).unwrap();
        let top1 = top_k_accuracy(&rs, 1).unwrap();
        prop_assert_eq!(cm.trace() as f64 / cm.total() as f64, top1);
        for (c, sum) in cm.row_sums().iter().enumerate() {
            prop_assert_eq!(*sum as usize, rs.iter().filter(|r| r.true_label == c).count());
        }
        let mut prev = 0.0;
        for k in 1..=6 {
            let a = top_k_accuracy(&rs, k).unwrap();
            prop_assert!(a >= prev);
            prev = a;
        }
        let bins = snr_binned_accuracy(&rs, 5.0).unwrap();
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), rs.len());
    }
}

fn small_shard(n_per_class: usize, classes: usize) -> Shard {
    let mut rng = crate::signal::SeededRng::new(3, 3);
    let records = (0..classes * n_per_class)
        .map(|i| {
            let iq: Vec<Complex32> = (0..RECORD_LEN)
                .map(|_| {
                    let z = rng.complex_gaussian();
                    Complex32::new(z.re as f32, z.im as f32)
                })
                .collect();
            DatasetRecord::new((i / n_per_class) as u16, iq).unwrap()
        })
        .collect::<Vec<_>>();
    Shard {
        header: ShardHeader {
            version: 1,
            record_count: records.len() as u64,
            samples_per_record: RECORD_LEN as u32,
            class_count: classes as u32,
        },
        records,
    }
}

#[test]
fn evaluate_checks_class_count_and_is_deterministic() {
    let arch = Architecture::conv_stack(&[2, 2], 3, 4, 0.5, 3);
    let model = Model::new(&arch, 1).unwrap();
    let shard = small_shard(2, 3);
    let a = evaluate(&model, &shard, None).unwrap();
    let b = evaluate(&model, &shard, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    for r in &a {
        assert!((r.ranking.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(r.ranking.windows(2).all(|w| w[0].1 >= w[1].1));
    }
    let other = Model::new(&Architecture::conv_stack(&[2], 3, 4, 0.5, 4), 1).unwrap();
    assert!(matches!(evaluate(&other, &shard, None), Err(Error::ClassCountMismatch { model: 4, data: 3 })));
}

#[test]
fn window_classification_matches_evaluate_exactly() {
    let arch = Architecture::conv_stack(&[2, 2], 3, 4, 0.5, 3);
    let model = Model::new(&arch, 2).unwrap();
    let mut shard = small_shard(1, 3);
    // unit power so no rescaling kicks in
    for r in &mut shard.records {
        let k = (1.0 / r.power()).sqrt() as f32;
        r.iq.iter_mut().for_each(|z| *z *= k);
    }
    let results = evaluate(&model, &shard, None).unwrap();
    let mut samples: Vec<Complex64> = shard.records.iter().flat_map(|r| r.to_f64()).collect();
    // a trailing partial window is ignored
    samples.extend(std::iter::repeat_n(Complex64::new(1.0, 0.0), 100));
    let windows = classify_windows(&model, &samples).unwrap();
    assert_eq!(windows.len(), 3);
    for (w, r) in windows.iter().zip(&results) {
        assert_eq!(w, &r.ranking);
    }
    assert!(classify_windows(&model, &samples[..100]).is_err());
}

#[test]
fn report_files_are_consistent() {
    let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let mut rs = Vec::new();
    for c in 0..3 {
        for i in 0..10 {
            let rank = if (i + c) % 3 == 0 { 2 } else { 1 };
            rs.push(at_rank(c, rank, 3, -10.0 + 3.5 * i as f64));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    write_report(&rs, &labels, dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "scope,count,top1,top3,top1_snr_ge_0db,top1_snr_ge_10db,top1_snr_ge_15db");
    let top1 = |line: &str| line.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    let overall = top1(lines[1]);
    let per_class: f64 = lines[3..].iter().map(|l| top1(l)).sum::<f64>() / 3.0;
    assert!((overall - per_class).abs() < 1e-6);
    assert!((overall - top_k_accuracy(&rs, 1).unwrap()).abs() < 1e-6);

    let confusion = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("true\\predicted,a,b,c\n"));
    assert_eq!(confusion.lines().count(), 4);
    let curve = std::fs::read_to_string(dir.path().join("snr_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 4 * 7);

    let again = tempfile::tempdir().unwrap();
    write_report(&rs, &labels, again.path()).unwrap();
    for f in ["summary.csv", "confusion.csv", "snr_curve.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}
