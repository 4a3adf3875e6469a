//! Detector-plane landmark files: an `x,y` header line followed by one
//! comma-separated coordinate pair per line. Blank lines and `#` comments
//! are skipped. A pixel pitch converts pixel inputs to mm on ingestion;
//! everything downstream is metric.

use std::fs;
use std::io::Read as _;

use ringpose_core::LandmarkSet2D;

use crate::Failure;

pub fn read(source: &str, pixel_pitch: Option<f64>) -> Result<LandmarkSet2D, Failure> {
    let text = if source == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| Failure::input(format!("standard input: {e}")))?;
        buf
    } else {
        fs::read_to_string(source).map_err(|e| Failure::input(format!("{source}: {e}")))?
    };
    let name = if source == "-" { "<stdin>" } else { source };
    parse(&text, name, pixel_pitch)
}

pub fn parse(text: &str, name: &str, pixel_pitch: Option<f64>) -> Result<LandmarkSet2D, Failure> {
    let pitch = match pixel_pitch {
        Some(p) if p.is_finite() && p > 0.0 => p,
        Some(p) => {
            return Err(Failure::input(format!(
                "pixel pitch must be positive and finite, got {p}"
            )))
        }
        None => 1.0,
    };
    let mut saw_header = false;
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (first, second, rest) = (cols.next(), cols.next(), cols.next());
        if !saw_header {
            if (first, second, rest) != (Some("x"), Some("y"), None) {
                return Err(Failure::input(format!(
                    "{name}:{lineno}: expected header \"x,y\", got \"{line}\""
                )));
            }
            saw_header = true;
            continue;
        }
        let (Some(xs), Some(ys), None) = (first, second, rest) else {
            return Err(Failure::input(format!(
                "{name}:{lineno}: expected two comma-separated values, got \"{line}\""
            )));
        };
        let parse_coord = |s: &str| -> Result<f64, Failure> {
            let v: f64 = s
                .parse()
                .map_err(|_| Failure::input(format!("{name}:{lineno}: \"{s}\" is not a number")))?;
            if !v.is_finite() {
                return Err(Failure::input(format!(
                    "{name}:{lineno}: coordinates must be finite, got \"{s}\""
                )));
            }
            Ok(v)
        };
        points.push([parse_coord(xs)? * pitch, parse_coord(ys)? * pitch]);
    }
    if !saw_header {
        return Err(Failure::input(format!("{name}: missing \"x,y\" header")));
    }
    if points.len() < 6 {
        return Err(Failure::input(format!(
            "{name}: needs at least 6 landmark rows, got {}",
            points.len()
        )));
    }
    Ok(LandmarkSet2D { points })
}

pub fn format(points: &LandmarkSet2D) -> String {
    let mut out = String::from("x,y\n");
    for p in &points.points {
        out.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    out
}
