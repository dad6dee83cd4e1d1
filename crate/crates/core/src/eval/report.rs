//! `confusion.csv`, `snr_curve.csv` and `summary.csv`.
//!
//! * confusion.csv: `true\predicted` then one column per class name; one row
//!   per true class.
//! * snr_curve.csv: `scope,bin_lo_db,bin_hi_db,bin_center_db,count,top1,top3`
//!   with scope `overall` or a class name; empty bins leave top1/top3 blank.
//! * summary.csv: `scope,count,top1,top3,top1_snr_ge_0db,...`; scope is
//!   `overall_records` (every record weighs the same), `overall_classes`
//!   (mean of per-class values) or a class name.

use std::fmt::Write as _;
use std::path::Path;

use super::{confusion_matrix, snr_binned_accuracy, EvalRecordResult};
use crate::error::Result;

/// SNR thresholds for the per-class columns of summary.csv.
pub const SUMMARY_SNR_THRESHOLDS_DB: [f64; 3] = [0.0, 10.0, 15.0];
const CURVE_BIN_DB: f64 = 5.0;

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

fn frac(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

struct Row {
    count: usize,
    top1: Option<f64>,
    top3: Option<f64>,
    above: Vec<Option<f64>>,
}

fn row(results: &[&EvalRecordResult]) -> Row {
    let n = results.len();
    let above = SUMMARY_SNR_THRESHOLDS_DB
        .iter()
        .map(|&t| {
            let sel: Vec<_> = results.iter().filter(|r| r.snr_db.is_some_and(|s| s >= t)).collect();
            frac(sel.iter().filter(|r| r.in_top(1)).count(), sel.len())
        })
        .collect();
    Row {
        count: n,
        top1: frac(results.iter().filter(|r| r.in_top(1)).count(), n),
        top3: frac(results.iter().filter(|r| r.in_top(3.min(r.ranking.len()))).count(), n),
        above,
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Writes the three report files into `dir`. `labels` names the classes.
pub fn write_report(results: &[EvalRecordResult], labels: &[String], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let classes = labels.len();
    let by_class: Vec<Vec<&EvalRecordResult>> =
        (0..classes).map(|c| results.iter().filter(|r| r.true_label == c).collect()).collect();

    let cm = confusion_matrix(results, classes)?;
    let mut s = String::from("true\\predicted");
    for l in labels {
        write!(s, ",{l}")?;
    }
    s.push('\n');
    for (t, l) in labels.iter().enumerate() {
        s.push_str(l);
        for v in cm.row(t) {
            write!(s, ",{v}")?;
        }
        s.push('\n');
    }
    std::fs::write(dir.join("confusion.csv"), s)?;

    let mut s = String::from("scope,bin_lo_db,bin_hi_db,bin_center_db,count,top1,top3\n");
    let has_snr = results.iter().all(|r| r.snr_db.is_some());
    if has_snr {
        let mut scopes: Vec<(&str, Vec<EvalRecordResult>)> = vec![("overall", results.to_vec())];
        for (c, l) in labels.iter().enumerate() {
            scopes.push((l, by_class[c].iter().map(|r| (*r).clone()).collect()));
        }
        for (name, rs) in scopes {
            for b in snr_binned_accuracy(&rs, CURVE_BIN_DB)? {
                writeln!(
                    s,
                    "{name},{:.1},{:.1},{:.1},{},{},{}",
                    b.lo_db,
                    b.hi_db,
                    b.center_db(),
                    b.count,
                    opt(b.accuracy),
                    opt(b.top3)
                )?;
            }
        }
    }
    std::fs::write(dir.join("snr_curve.csv"), s)?;

    let mut s = String::from("scope,count,top1,top3");
    for t in SUMMARY_SNR_THRESHOLDS_DB {
        write!(s, ",top1_snr_ge_{t}db")?;
    }
    s.push('\n');
    let all: Vec<&EvalRecordResult> = results.iter().collect();
    let per_class: Vec<Row> = by_class.iter().map(|rs| row(rs)).collect();
    let overall = row(&all);
    let class_weighted = Row {
        count: overall.count,
        top1: mean(per_class.iter().map(|r| r.top1)),
        top3: mean(per_class.iter().map(|r| r.top3)),
        above: (0..SUMMARY_SNR_THRESHOLDS_DB.len()).map(|i| mean(per_class.iter().map(|r| r.above[i]))).collect(),
    };
    let mut emit = |name: &str, r: &Row| -> std::fmt::Result {
        write!(s, "{name},{},{},{}", r.count, opt(r.top1), opt(r.top3))?;
        for a in &r.above {
            write!(s, ",{}", opt(*a))?;
        }
        s.push('\n');
        Ok(())
    };
    emit("overall_records", &overall)?;
    emit("overall_classes", &class_weighted)?;
    for (l, r) in labels.iter().zip(&per_class) {
        emit(l, r)?;
    }
    std::fs::write(dir.join("summary.csv"), s)?;
    Ok(())
}
