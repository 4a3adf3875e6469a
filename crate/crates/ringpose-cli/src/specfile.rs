//! Flat `key = value` experiment files. Values start from the default
//! experiment; unknown keys are rejected so typos fail loudly instead of
//! silently running the default. `distances_mm` feeds the sweep command
//! and is carried alongside the spec.

use std::fs;
use std::path::Path;

use ringpose_core::{ExperimentSpec, MethodSet};

use crate::Failure;

#[derive(Debug)]
pub struct SpecFile {
    pub spec: ExperimentSpec,
    pub distances_mm: Option<Vec<f64>>,
}

pub fn read(path: &Path) -> Result<SpecFile, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

fn parse_num(s: &str) -> Option<f64> {
    s.parse().ok().filter(|v: &f64| v.is_finite())
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|p| parse_num(p.trim())).collect()
}

fn parse_range(s: &str) -> Option<(f64, f64)> {
    match parse_list(s)?.as_slice() {
        [lo, hi] => Some((*lo, *hi)),
        _ => None,
    }
}

fn parse_methods(s: &str) -> Option<MethodSet> {
    let mut methods = MethodSet {
        proposed: false,
        orthographic: false,
    };
    for part in s.split(',') {
        match part.trim() {
            "proposed" => methods.proposed = true,
            "orthographic" => methods.orthographic = true,
            _ => return None,
        }
    }
    Some(methods)
}

pub fn parse(text: &str, name: &str) -> Result<SpecFile, Failure> {
    let mut spec = ExperimentSpec::default();
    let mut distances = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::input(format!(
                "{name}:{lineno}: expected key = value, got \"{line}\""
            )));
        };
        let key = key.trim();
        let value = value.trim();
        let bad =
            |what: &str| Failure::input(format!("{name}:{lineno}: {key}: {what}, got \"{value}\""));
        match key {
            "trials" => spec.trials = value.parse().map_err(|_| bad("expected a count"))?,
            "theta_range" => {
                spec.theta_range = parse_range(value).ok_or_else(|| bad("expected low,high"))?
            }
            "phi_range" => {
                spec.phi_range = parse_range(value).ok_or_else(|| bad("expected low,high"))?
            }
            "k_range" => {
                spec.k_range = parse_range(value).ok_or_else(|| bad("expected low,high"))?
            }
            "l_range" => {
                spec.l_range = parse_range(value).ok_or_else(|| bad("expected low,high"))?
            }
            "h_range" => {
                spec.h_range = parse_range(value).ok_or_else(|| bad("expected low,high"))?
            }
            "source_distance_mm" => {
                spec.source_distance = parse_num(value).ok_or_else(|| bad("expected mm"))?
            }
            "r_mm" => spec.r = parse_num(value).ok_or_else(|| bad("expected mm"))?,
            "n_landmarks" => {
                spec.n_landmarks = value.parse().map_err(|_| bad("expected a count"))?
            }
            "noise_sigma_mm" => {
                spec.noise_sigma = parse_num(value).ok_or_else(|| bad("expected mm"))?
            }
            "seed" => spec.seed = value.parse().map_err(|_| bad("expected an integer"))?,
            "methods" => {
                spec.methods = parse_methods(value)
                    .ok_or_else(|| bad("expected a subset of proposed,orthographic"))?
            }
            "distances_mm" => {
                distances =
                    Some(parse_list(value).ok_or_else(|| bad("expected comma-separated mm"))?)
            }
            _ => {
                return Err(Failure::input(format!(
                    "{name}:{lineno}: unknown key \"{key}\""
                )))
            }
        }
    }
    Ok(SpecFile {
        spec,
        distances_mm: distances,
    })
}
