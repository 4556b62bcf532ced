//! Loss CSV, metric tables, and the post-hoc report.

use std::fmt::Write as _;
use std::path::Path;

use occlusym::dataset::{ConditionSummary, EvalReport};

use crate::{CliError, CliResult};

pub fn loss_csv(losses: &[f64]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(occlusym::Error::Io(e.into()));
    w.write_record(["step", "loss"]).map_err(io)?;
    for (s, l) in losses.iter().enumerate() {
        w.write_record([s.to_string(), l.to_string()]).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Core(occlusym::Error::Io(e.into_error())))
}

/// Parses `step,loss` rows. Steps must count up from 0, losses must be
/// finite, and there must be at least one row.
pub fn parse_losses(bytes: &[u8]) -> Result<Vec<f64>, String> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != ["step", "loss"] {
        return Err("expected header 'step,loss'".into());
    }
    let mut losses = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 2 {
            return Err(format!("row {i}: expected 2 fields"));
        }
        let step: usize = rec[0].parse().map_err(|_| format!("row {i}: bad step '{}'", &rec[0]))?;
        let loss: f64 = rec[1].parse().map_err(|_| format!("row {i}: bad loss '{}'", &rec[1]))?;
        if step != i || !loss.is_finite() {
            return Err(format!("row {i}: expected step {i} with a finite loss"));
        }
        losses.push(loss);
    }
    if losses.is_empty() {
        return Err("loss CSV has no rows".into());
    }
    Ok(losses)
}

/// [`parse_losses`] on a file; failures name the file.
pub fn read_losses(path: &Path) -> CliResult<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|_| CliError::MissingInputs(vec![path.to_path_buf()]))?;
    parse_losses(&bytes).map_err(|message| CliError::BadInput { path: path.to_path_buf(), message })
}

/// Means of the first and last `min(100, n)` losses.
pub fn loss_windows(losses: &[f64]) -> (f64, f64) {
    let k = losses.len().min(100);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&losses[..k]), mean(&losses[losses.len() - k..]))
}

fn rows(report: &EvalReport, n_views: usize) -> [(&'static str, usize, &ConditionSummary); 4] {
    [
        ("unconditional", 0, &report.unconditional),
        ("occluded", 1, &report.occluded),
        ("occluded", n_views, &report.multi_view_occluded),
        ("unoccluded", 1, &report.unoccluded),
    ]
}

/// Plain-text table with COV in percent and MMD in per mille.
pub fn metric_table(report: &EvalReport, n_views: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:>5} {:>9} {:>10} {:>9}", "Condition", "V-num", "COV(%)↑", "MMD(‰)↓", "IoU↑");
    for (name, v, c) in rows(report, n_views) {
        let _ = writeln!(
            s,
            "{:<14} {:>5} {:>9.2} {:>10.3} {:>9.4}",
            name,
            v,
            100.0 * c.metrics.cov,
            1000.0 * c.metrics.mmd,
            c.mean_iou
        );
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

pub fn loss_svg(losses: &[f64]) -> String {
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let last = (losses.len() - 1).max(1) as f64;
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / last;
    let y = |l: f64| H - PAD - (H - 2.0 * PAD) * (l - lo) / span;
    let mut pts = String::new();
    for (i, &l) in losses.iter().enumerate() {
        let _ = write!(pts, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, x(i), y(l));
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-size="12">{hi:.4}</text>"#, PAD - 6.0);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-size="12">{lo:.4}</text>"#, H - PAD + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">step {}</text>"#,
        W - PAD,
        H - PAD + 16.0,
        losses.len() - 1
    );
    s.push_str("</svg>\n");
    s
}

/// Markdown summary. Every number is printed in shortest round-trip form,
/// so it parses back to the exact value in the source files.
pub fn summary_markdown(losses: &[f64], report: &EvalReport) -> String {
    let (first, last) = loss_windows(losses);
    let mut s = String::from("# Run summary\n\n## Training\n\n");
    let _ = writeln!(s, "| steps | initial window mean | final window mean | ratio |");
    let _ = writeln!(s, "|---|---|---|---|");
    let _ = writeln!(s, "| {} | {} | {} | {} |", losses.len(), first, last, last / first);
    s.push_str("\n## Reconstruction\n\n");
    let _ = writeln!(s, "| condition | mean IoU | COV | MMD | CD |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (name, c) in [
        ("unoccluded", &report.unoccluded),
        ("occluded", &report.occluded),
        ("unconditional", &report.unconditional),
        ("multi_view_occluded", &report.multi_view_occluded),
    ] {
        let cd = c.metrics.cd.map_or_else(|| "-".to_string(), |v| v.to_string());
        let _ = writeln!(s, "| {name} | {} | {} | {} | {cd} |", c.mean_iou, c.metrics.cov, c.metrics.mmd);
    }
    let _ = writeln!(s, "\n{} held-out shapes.", report.shapes.len());
    s
}

pub fn read_report(path: &Path) -> CliResult<EvalReport> {
    let bytes = std::fs::read(path).map_err(|_| CliError::MissingInputs(vec![path.to_path_buf()]))?;
    let report: EvalReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::BadInput { path: path.to_path_buf(), message: e.to_string() })?;
    if report.shapes.is_empty() {
        return Err(CliError::BadInput { path: path.to_path_buf(), message: "report has no shapes".into() });
    }
    Ok(report)
}

pub fn render(csv_path: &Path, report_path: &Path) -> CliResult<(String, String)> {
    let losses = read_losses(csv_path)?;
    let report = read_report(report_path)?;
    Ok((loss_svg(&losses), summary_markdown(&losses, &report)))
}
