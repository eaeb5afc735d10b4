//! Fixed-column text and CSV renderings of results.

use std::fmt::Write as _;

use claret_core::training::{EpochRecord, Metrics};
use claret_core::verify::{FamilyResult, GRADCHECK_TOLERANCE};

pub const CURVES_HEADER: &str = "epoch,train_loss,train_acc,val_acc";

pub fn curves_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            r.epoch, r.train_loss, r.train_accuracy, r.val_accuracy
        );
    }
    out
}

pub fn epoch_line(r: &EpochRecord) -> String {
    format!(
        "epoch {:>4}  loss {:>10.6}  train_acc {:.4}  val_acc {:.4}",
        r.epoch, r.train_loss, r.train_accuracy, r.val_accuracy
    )
}

fn name_width(names: &[String]) -> usize {
    names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(5)
}

/// Accuracy, macro-F1, and one precision/recall/F1 row per class.
pub fn metrics_summary(m: &Metrics, names: &[String]) -> String {
    let w = name_width(names);
    let mut out = String::new();
    let _ = writeln!(out, "accuracy  {:.4}", m.accuracy);
    let _ = writeln!(out, "macro_f1  {:.4}", m.macro_f1);
    let _ = writeln!(out, "{:<w$}  {:>9}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "f1", "support");
    for (k, name) in names.iter().enumerate() {
        let support: u64 = m.confusion[k].iter().sum();
        let _ = writeln!(
            out,
            "{:<w$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
            name, m.per_class_precision[k], m.per_class_recall[k], m.per_class_f1[k], support
        );
    }
    out
}

/// Rows are true classes, columns predicted classes (by index).
pub fn confusion_table(m: &Metrics, names: &[String]) -> String {
    let w = name_width(names).max("true\\pred".len());
    let cell = m
        .confusion
        .iter()
        .flatten()
        .map(|v| v.to_string().len())
        .max()
        .unwrap_or(1)
        .max(names.len().to_string().len())
        .max(3);
    let mut out = format!("{:<w$}", "true\\pred");
    for k in 0..names.len() {
        let _ = write!(out, "  {k:>cell$}");
    }
    out.push('\n');
    for (name, row) in names.iter().zip(&m.confusion) {
        let _ = write!(out, "{name:<w$}");
        for v in row {
            let _ = write!(out, "  {v:>cell$}");
        }
        out.push('\n');
    }
    out
}

pub fn gradcheck_table(results: &[FamilyResult]) -> String {
    let mut out = format!("{:<16}  {:>14}  {:>7}  {}\n", "family", "max_rel_error", "coords", "status");
    for r in results {
        let coords: usize = r.report.tensors.iter().map(|t| t.checked).sum();
        let status = if r.passed() { "ok" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{:<16}  {:>14.6e}  {:>7}  {}",
            r.family, r.report.max_relative_error, coords, status
        );
    }
    let _ = writeln!(out, "tolerance {GRADCHECK_TOLERANCE:e}");
    out
}
