//! Plain `key = value` configuration files mirroring the `complete` flags.
//! Lines starting with `#` and blank lines are ignored; keys use the flag
//! names (kebab- or snake-case). Flags given on the command line win.

use std::collections::HashMap;
use std::path::Path;

use lrtc_core::error::{Error, Result};
use lrtc_core::solver::{DualStep, Model, SolverConfig};
use lrtc_core::tensor::{DenseTensor, ObservationMask};

use crate::CompleteArgs;

#[derive(Default)]
pub struct FileConfig(HashMap<String, String>);

pub fn parse(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::format(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(
            key.trim().replace('-', "_").to_string(),
            value.trim().to_string(),
        );
    }
    Ok(FileConfig(map))
}

impl FileConfig {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::argument(format!("config key '{}' has invalid value '{}'", key, raw))
            }),
        }
    }
}

fn parse_per_mode(raw: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = raw.split(',').collect();
    let values: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::argument(format!("bad {} value '{}'", what, p)))
        })
        .collect::<Result<_>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values),
        len => Err(Error::argument(format!(
            "{} expects 1 or {} values, got {}",
            what, n, len
        ))),
    }
}

fn parse_ranks(raw: &str, f: &DenseTensor, mask: &ObservationMask) -> Result<Vec<usize>> {
    if raw.trim() == "auto" {
        let observed = f.project(mask)?;
        let ranks = lrtc_core::solver::suggest_ranks(&observed, 0.99)?;
        println!(
            "ranks auto: spectral-energy heuristic suggests {}",
            ranks
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        return Ok(ranks);
    }
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::argument(format!("bad rank '{}'", p)))
        })
        .collect()
}

/// Builds the effective [`SolverConfig`]: command-line flags override config
/// file entries, which override the published defaults.
pub fn resolve(
    args: &CompleteArgs,
    file: &FileConfig,
    f: &DenseTensor,
    mask: &ObservationMask,
) -> Result<SolverConfig> {
    let n = f.dims().len();
    let model = match args.model.or(file.parsed::<u8>("model")?) {
        None | Some(1) => Model::One,
        Some(2) => Model::Two,
        Some(other) => {
            return Err(Error::argument(format!("model must be 1 or 2, got {}", other)))
        }
    };
    let ranks_raw = args
        .ranks
        .clone()
        .or_else(|| file.get("ranks").map(String::from))
        .ok_or_else(|| Error::argument("--ranks is required (give per-mode ranks or 'auto')"))?;
    let ranks = parse_ranks(&ranks_raw, f, mask)?;

    let mut cfg = SolverConfig::new(model, ranks);
    if let Some(raw) = args.alpha.clone().or_else(|| file.get("alpha").map(String::from)) {
        cfg.alpha = parse_per_mode(&raw, n, "alpha")?;
    }
    if let Some(raw) = args.tau.clone().or_else(|| file.get("tau").map(String::from)) {
        cfg.tau = parse_per_mode(&raw, n, "tau")?;
    }
    if let Some(raw) = args
        .lambda
        .clone()
        .or_else(|| file.get("lambda").map(String::from))
    {
        cfg.lambda = parse_per_mode(&raw, n, "lambda")?;
    }
    if let Some(raw) = args.rho.clone().or_else(|| file.get("rho").map(String::from)) {
        cfg.rho = parse_per_mode(&raw, n, "rho")?;
    }
    if let Some(v) = args.mu.or(file.parsed("mu")?) {
        cfg.mu = v;
    }
    if let Some(v) = args.beta.or(file.parsed("beta")?) {
        cfg.beta = v;
    }
    if let Some(v) = args.tol.or(file.parsed("tol")?) {
        cfg.tol = v;
    }
    if let Some(v) = args.max_outer.or(file.parsed("max_outer")?) {
        cfg.max_outer = v;
    }
    if let Some(v) = args.max_inner.or(file.parsed("max_inner")?) {
        cfg.max_inner = v;
    }
    if let Some(v) = args.inner_tol.or(file.parsed("inner_tol")?) {
        cfg.inner_tol = v;
    }
    if args.adaptive_penalty || file.parsed("adaptive_penalty")?.unwrap_or(false) {
        cfg.adaptive_penalty = true;
    }
    if let Some(raw) = args
        .dual_step
        .clone()
        .or_else(|| file.get("dual_step").map(String::from))
    {
        cfg.dual_step = match raw.as_str() {
            "scaled" => DualStep::Scaled,
            "paper" => DualStep::Paper,
            other => {
                return Err(Error::argument(format!(
                    "dual-step must be 'scaled' or 'paper', got '{}'",
                    other
                )))
            }
        };
    }
    if let Some(v) = args.seed.or(file.parsed("seed")?) {
        cfg.seed = v;
    }
    cfg.validate(f.dims())?;
    Ok(cfg)
}
