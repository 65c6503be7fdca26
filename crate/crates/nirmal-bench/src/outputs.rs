//! Result files for a training run: history.csv, metrics.json,
//! confusion_matrix.csv, and the history.svg chart.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nirmal_core::metrics::ClassMetrics;
use nirmal_core::{Error, Result};
use serde::Serialize;

use crate::funcbench::FuncBenchRecord;
use crate::train::{RunRecord, RunStatus};

/// `x` with six significant digits in plain decimal notation.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.5}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// The `history.csv` body for a record (header + one row per epoch).
pub fn history_csv(record: &RunRecord) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_loss,test_acc\n");
    for row in &record.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.epoch,
            fmt_sig6(row.train_loss),
            fmt_sig6(row.train_acc),
            fmt_sig6(row.test_loss),
            fmt_sig6(row.test_acc),
        );
    }
    out
}

/// Raw integer counts, one row of the confusion matrix per line.
pub fn confusion_csv(record: &RunRecord) -> Option<String> {
    let cm = record.confusion.as_ref()?;
    let k = cm.num_classes();
    let mut out = String::new();
    for t in 0..k {
        let row: Vec<String> = cm.row(t).iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    Some(out)
}

#[derive(Serialize)]
struct FinalMetrics {
    test_accuracy: f64,
    test_loss: f64,
    weighted_f1: f64,
    macro_f1: f64,
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    config: serde_json::Value,
    #[serde(rename = "final")]
    final_: FinalMetrics,
    per_class: &'a [ClassMetrics],
    wall_time_s: f64,
    status: RunStatus,
}

/// The `metrics.json` body. Diverged runs report the last completed
/// evaluation (zeros if none) so the file never contains non-finite cells.
pub fn metrics_json(record: &RunRecord) -> Result<String> {
    let mut config = serde_json::to_value(&record.config)
        .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
    if let (Some(stats), Some(obj)) = (&record.norm_stats, config.as_object_mut()) {
        obj.insert(
            "normalization".into(),
            serde_json::json!({ "mean": stats.mean, "std": stats.std }),
        );
    }
    let last = record.rows.last();
    let final_ = FinalMetrics {
        test_accuracy: record
            .report
            .as_ref()
            .map(|r| r.accuracy)
            .unwrap_or(0.0),
        test_loss: last.map(|r| r.test_loss).filter(|x| x.is_finite()).unwrap_or(0.0),
        weighted_f1: record.report.as_ref().map(|r| r.weighted_f1).unwrap_or(0.0),
        macro_f1: record.report.as_ref().map(|r| r.macro_f1).unwrap_or(0.0),
    };
    let body = MetricsJson {
        config,
        final_,
        per_class: record
            .report
            .as_ref()
            .map(|r| r.per_class.as_slice())
            .unwrap_or(&[]),
        wall_time_s: record.wall_time_s,
        status: record.status,
    };
    serde_json::to_string_pretty(&body)
        .map_err(|e| Error::Format(format!("metrics serialization: {e}")))
}

/// Maps data points into one polyline's `points` attribute.
fn polyline_points(
    xs: &[f64],
    ys: &[f64],
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
) -> String {
    let sx = |x: f64| x0 + (x - x_range.0) / (x_range.1 - x_range.0).max(1e-12) * w;
    let sy = |y: f64| y0 + h - (y - y_range.0) / (y_range.1 - y_range.0).max(1e-12) * h;
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The `history.svg` body: a loss panel and an accuracy panel, each with a
/// train and a test series — exactly four polylines.
pub fn history_svg(record: &RunRecord) -> String {
    const W: f64 = 420.0;
    const H: f64 = 300.0;
    const M: f64 = 45.0;
    let epochs: Vec<f64> = record.rows.iter().map(|r| r.epoch as f64).collect();
    let train_loss: Vec<f64> = record.rows.iter().map(|r| r.train_loss).collect();
    let test_loss: Vec<f64> = record.rows.iter().map(|r| r.test_loss).collect();
    let train_acc: Vec<f64> = record.rows.iter().map(|r| r.train_acc).collect();
    let test_acc: Vec<f64> = record.rows.iter().map(|r| r.test_acc).collect();

    let x_range = (
        epochs.first().copied().unwrap_or(0.0),
        epochs.last().copied().unwrap_or(1.0).max(1.0),
    );
    let loss_top = train_loss
        .iter()
        .chain(&test_loss)
        .cloned()
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.05;

    let panel_w = W - 2.0 * M;
    let panel_h = H - 2.0 * M;
    let loss_pts = |ys: &[f64]| {
        polyline_points(&epochs, ys, M, M, panel_w, panel_h, x_range, (0.0, loss_top))
    };
    let acc_pts = |ys: &[f64]| {
        polyline_points(&epochs, ys, W + M, M, panel_w, panel_h, x_range, (0.0, 1.0))
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = 2.0 * W,
        h = H
    );
    let _ = writeln!(svg, r#"<rect width="{}" height="{H}" fill="white"/>"#, 2.0 * W);
    for (x0, title, y_label) in [(M, "loss", "loss"), (W + M, "accuracy", "accuracy")] {
        let _ = writeln!(
            svg,
            r##"<path d="M {x0} {M} L {x0} {yb} L {xr} {yb}" fill="none" stroke="#333" stroke-width="1"/>"##,
            yb = M + panel_h,
            xr = x0 + panel_w,
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{title} vs epoch</text>"#,
            x0 + panel_w / 2.0,
            M - 12.0,
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">epoch</text>"#,
            x0 + panel_w / 2.0,
            M + panel_h + 30.0,
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 {} {})">{y_label}</text>"#,
            x0 - 30.0,
            M + panel_h / 2.0,
            x0 - 30.0,
            M + panel_h / 2.0,
        );
    }
    let series = [
        (loss_pts(&train_loss), "#1f77b4"),
        (loss_pts(&test_loss), "#ff7f0e"),
        (acc_pts(&train_acc), "#1f77b4"),
        (acc_pts(&test_acc), "#ff7f0e"),
    ];
    for (points, color) in series {
        let _ = writeln!(
            svg,
            r#"<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#1f77b4">train</text>"##,
        M + 6.0,
        M + 14.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#ff7f0e">test</text>"##,
        M + 46.0,
        M + 14.0
    );
    let _ = writeln!(svg, "</svg>");
    svg
}

/// Writes all result files for a run into `dir`, creating it if needed.
/// Diverged runs omit confusion_matrix.csv (there are no final predictions).
pub fn emit_outputs(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("history.csv"), history_csv(record))?;
    fs::write(dir.join("metrics.json"), metrics_json(record)?)?;
    if let Some(cm) = confusion_csv(record) {
        fs::write(dir.join("confusion_matrix.csv"), cm)?;
    }
    fs::write(dir.join("history.svg"), history_svg(record))?;
    Ok(())
}

/// One trajectory CSV per optimizer plus a summary.json, all under `dir`.
pub fn emit_funcbench(records: &[FuncBenchRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        optimizer: &'a str,
        function: &'a str,
        steps: u64,
        seed: u64,
        final_f: f64,
        diverged_at: Option<u64>,
    }
    let mut summaries = Vec::with_capacity(records.len());
    for rec in records {
        let mut csv = String::from("step,f,grad_norm\n");
        for p in &rec.points {
            let _ = writeln!(csv, "{},{:.12e},{:.12e}", p.step, p.f, p.grad_norm);
        }
        fs::write(dir.join(format!("trajectory_{}.csv", rec.optimizer)), csv)?;
        summaries.push(Summary {
            optimizer: &rec.optimizer,
            function: &rec.function,
            steps: rec.steps,
            seed: rec.seed,
            final_f: rec.final_f,
            diverged_at: rec.diverged_at,
        });
    }
    let body = serde_json::to_string_pretty(&summaries)
        .map_err(|e| Error::Format(format!("summary serialization: {e}")))?;
    fs::write(dir.join("summary.json"), body)?;
    Ok(())
}
