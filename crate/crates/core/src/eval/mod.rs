//! Accuracy metrics and CSV reports.
//!
//! Rankings order classes by descending probability; equal probabilities
//! rank the lower label first.

mod report;

use num_complex::Complex64;
use rayon::prelude::*;

pub use report::{write_report, SUMMARY_SNR_THRESHOLDS_DB};

use crate::dataset::{DatasetRecord, RecordMeta, Shard};
use crate::error::{Error, Result};
use crate::nn::{records_to_tensor, Model, Tensor3};
use crate::signal::power_of;
use crate::channel::SNR_RANGE_DB;
use crate::RECORD_LEN;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecordResult {
    pub true_label: usize,
    /// (label, probability), best first.
    pub ranking: Vec<(usize, f64)>,
    /// Planned SNR of the record, when known.
    pub snr_db: Option<f64>,
}

impl EvalRecordResult {
    pub fn new(true_label: usize, probs: &[f64], snr_db: Option<f64>) -> Self {
        Self { true_label, ranking: rank(probs), snr_db }
    }

    pub fn predicted(&self) -> usize {
        self.ranking[0].0
    }

    /// 1-based position of the true label in the ranking.
    pub fn rank_of_truth(&self) -> usize {
        self.ranking.iter().position(|(l, _)| *l == self.true_label).map_or(usize::MAX, |p| p + 1)
    }

    pub fn in_top(&self, k: usize) -> bool {
        self.rank_of_truth() <= k
    }
}

pub fn rank(probs: &[f64]) -> Vec<(usize, f64)> {
    let mut r: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    r
}

fn class_probs(model: &Model, record: &DatasetRecord) -> Result<Vec<f64>> {
    let x = records_to_tensor(&[record]);
    Ok(model.forward(&x)?.swap_remove(0))
}

/// Scores every record of `shard` one at a time. `meta`, when given, supplies
/// the planned SNR of each record.
pub fn evaluate(model: &Model, shard: &Shard, meta: Option<&[RecordMeta]>) -> Result<Vec<EvalRecordResult>> {
    if model.class_count() != shard.class_count() {
        return Err(Error::ClassCountMismatch { model: model.class_count(), data: shard.class_count() });
    }
    if let Some(m) = meta {
        if m.len() != shard.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} metadata rows", shard.len()),
                actual: format!("{} rows", m.len()),
            });
        }
    }
    shard
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let probs = class_probs(model, r)?;
            Ok(EvalRecordResult::new(r.label_id as usize, &probs, meta.map(|m| m[i].snr_db)))
        })
        .collect()
}

/// Rankings for consecutive 4096-sample windows of `samples`; a trailing
/// partial window is ignored. Windows whose power is off unity by more than
/// 1e-3 are rescaled to unit power first, so stored records pass through
/// unchanged.
pub fn classify_windows(model: &Model, samples: &[Complex64]) -> Result<Vec<Vec<(usize, f64)>>> {
    if samples.len() < RECORD_LEN {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {RECORD_LEN} samples"),
            actual: format!("{} samples", samples.len()),
        });
    }
    samples
        .chunks_exact(RECORD_LEN)
        .map(|w| {
            let p = power_of(w)?;
            if p == 0.0 {
                return Err(Error::SilentSignal);
            }
            let k = if (p - 1.0).abs() > 1e-3 { 1.0 / p.sqrt() } else { 1.0 };
            let mut x = Tensor3::zeros(1, 2, RECORD_LEN);
            let d = x.data_mut();
            for (i, z) in w.iter().enumerate() {
                d[i] = z.re * k;
                d[RECORD_LEN + i] = z.im * k;
            }
            Ok(rank(&model.forward(&x)?[0]))
        })
        .collect()
}

pub fn top_k_accuracy(results: &[EvalRecordResult], k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no results".into()));
    }
    let classes = results[0].ranking.len();
    if k == 0 || k > classes {
        return Err(Error::out_of_range("k", k as f64, 1.0, classes as f64));
    }
    let hits = results.iter().filter(|r| r.in_top(k)).count();
    Ok(hits as f64 / results.len() as f64)
}

/// One SNR bin; `accuracy` is `None` for an empty bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrBin {
    pub lo_db: f64,
    pub hi_db: f64,
    pub count: usize,
    pub accuracy: Option<f64>,
    pub top3: Option<f64>,
}

impl SnrBin {
    pub fn center_db(&self) -> f64 {
        0.5 * (self.lo_db + self.hi_db)
    }
}

/// Bins of `width_db` starting at -10 dB and covering up to +25 dB; the top
/// edge of the last bin is inclusive. Records outside the range are dropped.
pub fn snr_binned_accuracy(results: &[EvalRecordResult], width_db: f64) -> Result<Vec<SnrBin>> {
    if !(width_db > 0.0) {
        return Err(Error::out_of_range("bin width", width_db, f64::MIN_POSITIVE, f64::INFINITY));
    }
    let (lo, hi) = SNR_RANGE_DB;
    let n = ((hi - lo) / width_db - 1e-9).ceil().max(1.0) as usize;
    let mut count = vec![0usize; n];
    let mut top1 = vec![0usize; n];
    let mut top3 = vec![0usize; n];
    for r in results {
        let snr = r.snr_db.ok_or_else(|| Error::InvalidArgument("result lacks a planned SNR".into()))?;
        if !(lo..=hi).contains(&snr) {
            continue;
        }
        let b = (((snr - lo) / width_db).floor() as usize).min(n - 1);
        count[b] += 1;
        top1[b] += r.in_top(1) as usize;
        top3[b] += r.in_top(3) as usize;
    }
    Ok((0..n)
        .map(|b| {
            let frac = |hits: usize| (count[b] > 0).then(|| hits as f64 / count[b] as f64);
            SnrBin {
                lo_db: lo + b as f64 * width_db,
                hi_db: (lo + (b + 1) as f64 * width_db).min(hi),
                count: count[b],
                accuracy: frac(top1[b]),
                top3: frac(top3[b]),
            }
        })
        .collect())
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.classes).map(|t| self.row(t).iter().sum()).collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn confusion_matrix(results: &[EvalRecordResult], classes: usize) -> Result<ConfusionMatrix> {
    let mut counts = vec![0u64; classes * classes];
    for r in results {
        let (t, p) = (r.true_label, r.predicted());
        if t >= classes || p >= classes {
            return Err(Error::InvalidLabel { label: t.max(p), classes });
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[cfg(test)]
mod tests;
