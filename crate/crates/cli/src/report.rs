//! Merges convergence traces and metric reports into one long-format CSV
//! with schema `run_id,step,metric,value`. Inputs already in long format
//! pass through unchanged (their run_id is preserved), so the command is
//! idempotent on its own output.

use std::io::Write;
use std::path::{Path, PathBuf};

use lrtc_core::error::{Error, Result};

const LONG_HEADER: &str = "run_id,step,metric,value";
const TRACE_HEADER: &str = "iter,objective,rel_change,max_feasibility_residual,seconds";
const METRICS_HEADER: &str = "slice,psnr,ssim,ergas,sam";

pub fn cmd_report(inputs: Vec<PathBuf>, out: PathBuf) -> Result<()> {
    let mut rows: Vec<String> = Vec::new();
    for path in &inputs {
        rows.extend(convert(path)?);
    }
    let file = std::fs::File::create(&out)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", LONG_HEADER)?;
    for row in &rows {
        writeln!(w, "{}", row)?;
    }
    w.flush()?;
    println!("wrote {} ({} rows)", out.display(), rows.len());
    Ok(())
}

fn run_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    stem.strip_suffix(".trace").unwrap_or(&stem).to_string()
}

fn convert(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(format!("{}: empty file", path.display())))?
        .trim();
    let id = run_id(path);
    let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    match header {
        LONG_HEADER => Ok(body.into_iter().map(String::from).collect()),
        TRACE_HEADER => explode(path, &id, &body, "iter"),
        METRICS_HEADER => explode(path, &id, &body, "slice"),
        other => Err(Error::format(format!(
            "{}: unrecognized header '{}'",
            path.display(),
            other
        ))),
    }
}

/// One long-format row per (input row, metric column).
fn explode(path: &Path, id: &str, body: &[&str], step_name: &str) -> Result<Vec<String>> {
    let metric_names: Vec<&str> = match step_name {
        "iter" => TRACE_HEADER.split(',').skip(1).collect(),
        _ => METRICS_HEADER.split(',').skip(1).collect(),
    };
    let mut out = Vec::with_capacity(body.len() * metric_names.len());
    for line in body {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != metric_names.len() + 1 {
            return Err(Error::format(format!(
                "{}: row '{}' has {} fields, expected {}",
                path.display(),
                line,
                fields.len(),
                metric_names.len() + 1
            )));
        }
        let step = fields[0];
        for (name, value) in metric_names.iter().zip(&fields[1..]) {
            out.push(format!("{},{},{},{}", id, step, name, value));
        }
    }
    Ok(out)
}
