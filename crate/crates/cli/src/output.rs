//! Artifact files: `report.json`, `norms.csv`, snapshots and extra tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use kdvlab::Field;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::experiment::{NormTable, Outcome};

/// Layout tag recorded in the snapshot sidecar.
pub const SNAPSHOT_LAYOUT: &str = "complex128-le, row-major [snapshot][node], (re, im) pairs";

/// Report with the resolved config. No timings or host data, so identical
/// inputs give byte-identical files.
pub fn report(config: &ExperimentConfig, coefficient_name: &str, outcome: &Outcome) -> Value {
    let verdict = outcome.verdict();
    json!({
        "kind": config.kind,
        "coefficients": coefficient_name,
        "verdict": verdict,
        "exitCode": verdict.exit_code(),
        "abort": outcome.abort,
        "checks": outcome.checks,
        "result": outcome.result,
        "config": config,
    })
}

pub fn write_all(dir: &Path, report: &Value, outcome: &Outcome) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    if let Some(norms) = &outcome.norms {
        write_norms(&dir.join("norms.csv"), norms)?;
    }
    if !outcome.snapshots.is_empty() {
        write_snapshots(dir, &outcome.snapshots)?;
    }
    for (name, body) in &outcome.tables {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Columns `t, l2, hs_<s>..., smoothing, boundaryMass`.
pub fn write_norms(path: &Path, norms: &NormTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "l2".to_string()];
    header.extend(norms.hs_orders.iter().map(|s| format!("hs_{s}")));
    header.extend(["smoothing".to_string(), "boundaryMass".to_string()]);
    w.write_record(&header)?;
    for r in &norms.records {
        let mut row = vec![number(r.t), number(r.l2)];
        row.extend(r.hs.iter().map(|v| number(*v)));
        row.extend([number(r.smoothing), number(r.boundary_mass)]);
        w.write_record(&row)?;
    }
    w.flush()
}

/// `snapshots.bin` plus the `snapshots.json` sidecar.
pub fn write_snapshots(dir: &Path, fields: &[Field]) -> std::io::Result<()> {
    let grid = fields[0].grid;
    let mut bin = std::io::BufWriter::new(fs::File::create(dir.join("snapshots.bin"))?);
    for f in fields {
        for v in &f.values {
            bin.write_all(&v.re.to_le_bytes())?;
            bin.write_all(&v.im.to_le_bytes())?;
        }
    }
    bin.flush()?;
    let sidecar = json!({
        "file": "snapshots.bin",
        "layout": SNAPSHOT_LAYOUT,
        "count": fields.len(),
        "n": grid.len(),
        "L": grid.half_length(),
        "spacing": grid.spacing(),
        "x0": grid.x(0),
        "times": fields.iter().map(|f| f.t).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&sidecar).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("snapshots.json"), text)
}
