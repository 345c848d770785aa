//! Text and tab-separated report files.

use std::fmt::Write as _;
use std::path::Path;

use ioplin_core::detect::ScreeningReport;
use serde::Serialize;

use crate::imageio::save_png;
use crate::pipeline::{AblationRow, Evaluation};
use crate::plot::render_pr_curve;
use crate::{Error, Result};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value).expect("value serializes to JSON"))
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Records `metric  value  params`.
pub fn metric_records(eval: &Evaluation) -> String {
    let r = &eval.report;
    let mut out = String::from("metric\tvalue\tparams\n");
    let _ = writeln!(out, "auc\t{:.6}\t-", r.auc);
    for p in &r.p_at_r {
        let _ = writeln!(out, "precision_at_recall\t{:.6}\ttarget={} threshold={:.6}", p.precision, p.target, p.threshold);
    }
    let c = &r.at_threshold.counts;
    let th = r.threshold;
    let _ = writeln!(out, "precision\t{:.6}\tthreshold={th}", r.at_threshold.precision);
    let _ = writeln!(out, "recall\t{:.6}\tthreshold={th}", r.at_threshold.recall);
    for (name, v) in [("tp", c.tp), ("fp", c.fp), ("fn", c.fn_), ("tn", c.tn)] {
        let _ = writeln!(out, "{name}\t{v}\tthreshold={th}");
    }
    if let Some(a) = eval.patch_auc {
        let _ = writeln!(out, "patch_auc\t{a:.6}\toracle");
    }
    if let Some(a) = eval.broadcast_patch_auc {
        let _ = writeln!(out, "broadcast_patch_auc\t{a:.6}\toracle");
    }
    for &(rho, a) in &r.robustness {
        let _ = writeln!(out, "robust_auc\t{a:.6}\tnoise_ratio={rho}");
    }
    out
}

pub fn summary(eval: &Evaluation) -> String {
    let r = &eval.report;
    let mut out = String::new();
    let positives = eval.labels.iter().filter(|&&l| l == 1).count();
    let _ = writeln!(out, "images      {} ({positives} diseased)", eval.labels.len());
    let _ = writeln!(out, "AUC         {}", pct(r.auc));
    for p in &r.p_at_r {
        let _ = writeln!(out, "P@R={:<6} {} (threshold {:.4})", pct(p.target), pct(p.precision), p.threshold);
    }
    let _ = writeln!(
        out,
        "at {:.2}     precision {} recall {}",
        r.threshold,
        pct(r.at_threshold.precision),
        pct(r.at_threshold.recall)
    );
    if let (Some(p), Some(b)) = (eval.patch_auc, eval.broadcast_patch_auc) {
        let _ = writeln!(out, "patch AUC   {} (image labels broadcast to patches: {})", pct(p), pct(b));
    }
    for &(rho, a) in &r.robustness {
        let _ = writeln!(out, "noise {:<5} AUC {}", rho, pct(a));
    }
    out
}

pub fn pr_table(eval: &Evaluation) -> String {
    let mut out = String::from("recall\tprecision\tthreshold\n");
    for p in &eval.report.pr_curve {
        let _ = writeln!(out, "{:.6}\t{:.6}\t{:.6}", p.recall, p.precision, p.threshold);
    }
    out
}

pub fn score_table(eval: &Evaluation) -> String {
    let mut out = String::from("image_id\tscore\tlabel\n");
    for ((id, s), l) in eval.ids.iter().zip(&eval.scores).zip(&eval.labels) {
        let _ = writeln!(out, "{id}\t{s:.9}\t{l}");
    }
    out
}

/// `report.txt`, `metrics.tsv`, `pr_curve.tsv`, `pr_curve.png`, `scores.tsv`.
pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    write_text(&dir.join("report.txt"), &summary(eval))?;
    write_text(&dir.join("metrics.tsv"), &metric_records(eval))?;
    write_text(&dir.join("pr_curve.tsv"), &pr_table(eval))?;
    write_text(&dir.join("scores.tsv"), &score_table(eval))?;
    save_png(&dir.join("pr_curve.png"), &render_pr_curve(&eval.report.pr_curve))
}

/// Rows `image_id  score  decision  true_label`.
pub fn screening_table(report: &ScreeningReport) -> String {
    let mut out = String::from("image_id\tscore\tdecision\ttrue_label\n");
    for (e, kept) in report.rows() {
        let label = e.true_label.map_or_else(|| "-".to_string(), |l| l.to_string());
        let _ = writeln!(out, "{}\t{:.9}\t{}\t{label}", e.image_id, e.score, u8::from(kept));
    }
    out
}

pub fn screening_summary(report: &ScreeningReport) -> String {
    let mut out = format!(
        "threshold {:.2}: kept {} of {} images ({})\n",
        report.threshold,
        report.kept.len(),
        report.kept.len() + report.filtered.len(),
        pct(report.kept_fraction())
    );
    if let Some(r) = report.disease_recall() {
        let _ = writeln!(out, "diseased images kept      {}", pct(r));
    }
    if let Some(f) = report.normal_filtered_fraction() {
        let _ = writeln!(out, "normal images filtered    {}", pct(f));
    }
    out
}

pub fn robustness_table(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("noise_ratio\tauc\n");
    for (rho, a) in rows {
        let _ = writeln!(out, "{rho}\t{a:.6}");
    }
    out
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("preset\tauc");
    let targets: Vec<f64> = rows.first().map(|r| r.evaluation.report.p_at_r.iter().map(|p| p.target).collect()).unwrap_or_default();
    for t in &targets {
        let _ = write!(out, "\tp_at_r{}", (t * 100.0).round());
    }
    out.push_str("\tpatch_auc\titerations\n");
    for row in rows {
        let r = &row.evaluation.report;
        let _ = write!(out, "{}\t{:.6}", row.preset.name(), r.auc);
        for p in &r.p_at_r {
            let _ = write!(out, "\t{:.6}", p.precision);
        }
        let patch = row.evaluation.patch_auc.map_or_else(|| "-".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(out, "\t{patch}\t{}", row.iterations);
    }
    out
}
