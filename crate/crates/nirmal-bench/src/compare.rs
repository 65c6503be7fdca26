//! Side-by-side comparison of completed runs from their metrics.json files.

use std::fs;
use std::path::Path;

use nirmal_core::{Error, Result};

/// One run's headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub dir: String,
    pub optimizer: String,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub weighted_f1: f64,
    pub status: String,
}

/// Reads `dir/metrics.json` into a row, naming the directory on failure.
fn read_row(dir: &Path) -> Result<CompareRow> {
    let path = dir.join("metrics.json");
    let raw = fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let v: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let num = |ptr: &str| -> Result<f64> {
        v.pointer(ptr)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| Error::Format(format!("{}: missing {ptr}", path.display())))
    };
    Ok(CompareRow {
        dir: dir.display().to_string(),
        optimizer: v
            .pointer("/config/optimizer/name")
            .and_then(serde_json::Value::as_str)
            .unwrap_or("?")
            .to_string(),
        test_accuracy: num("/final/test_accuracy")?,
        test_loss: num("/final/test_loss")?,
        weighted_f1: num("/final/weighted_f1")?,
        status: v
            .pointer("/status")
            .and_then(serde_json::Value::as_str)
            .unwrap_or("?")
            .to_string(),
    })
}

/// Per-metric best flags for a row; ties share the mark, diverged runs are
/// excluded from the contest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BestFlags {
    pub accuracy: bool,
    pub loss: bool,
    pub f1: bool,
}

/// The comparison proper: rows plus their best-markings.
pub fn compare_rows(dirs: &[impl AsRef<Path>]) -> Result<Vec<(CompareRow, BestFlags)>> {
    if dirs.len() < 2 {
        return Err(Error::Domain("compare needs at least two run directories".into()));
    }
    let rows: Vec<CompareRow> = dirs
        .iter()
        .map(|d| read_row(d.as_ref()))
        .collect::<Result<_>>()?;
    let ok = |r: &&CompareRow| r.status == "ok";
    let best_acc = rows.iter().filter(ok).map(|r| r.test_accuracy).fold(f64::NEG_INFINITY, f64::max);
    let best_loss = rows.iter().filter(ok).map(|r| r.test_loss).fold(f64::INFINITY, f64::min);
    let best_f1 = rows.iter().filter(ok).map(|r| r.weighted_f1).fold(f64::NEG_INFINITY, f64::max);
    Ok(rows
        .into_iter()
        .map(|r| {
            let flags = BestFlags {
                accuracy: r.status == "ok" && r.test_accuracy == best_acc,
                loss: r.status == "ok" && r.test_loss == best_loss,
                f1: r.status == "ok" && r.weighted_f1 == best_f1,
            };
            (r, flags)
        })
        .collect())
}

fn mark(x: f64, best: bool) -> String {
    if best {
        format!("{x:.6}*")
    } else {
        format!("{x:.6}")
    }
}

/// Plain-text table; the best value per metric is starred.
pub fn render_text(rows: &[(CompareRow, BestFlags)]) -> String {
    let mut widths = (3usize, 9usize);
    for (r, _) in rows {
        widths.0 = widths.0.max(r.dir.len());
        widths.1 = widths.1.max(r.optimizer.len());
    }
    let mut out = format!(
        "{:<w0$}  {:<w1$}  {:>12}  {:>12}  {:>12}  {:>8}\n",
        "run",
        "optimizer",
        "accuracy",
        "loss",
        "weighted_f1",
        "status",
        w0 = widths.0,
        w1 = widths.1,
    );
    for (r, f) in rows {
        out.push_str(&format!(
            "{:<w0$}  {:<w1$}  {:>12}  {:>12}  {:>12}  {:>8}\n",
            r.dir,
            r.optimizer,
            mark(r.test_accuracy, f.accuracy),
            mark(r.test_loss, f.loss),
            mark(r.weighted_f1, f.f1),
            r.status,
            w0 = widths.0,
            w1 = widths.1,
        ));
    }
    out
}

/// CSV form with the documented column order:
/// `run,optimizer,test_accuracy,test_loss,weighted_f1,status,best_accuracy,best_loss,best_f1`.
pub fn render_csv(rows: &[(CompareRow, BestFlags)]) -> String {
    let mut out = String::from(
        "run,optimizer,test_accuracy,test_loss,weighted_f1,status,best_accuracy,best_loss,best_f1\n",
    );
    for (r, f) in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{},{},{},{}\n",
            r.dir, r.optimizer, r.test_accuracy, r.test_loss, r.weighted_f1, r.status,
            f.accuracy, f.loss, f.f1,
        ));
    }
    out
}
