//! File formats: configuration JSON, canonical report JSON and trajectory CSV.
//!
//! Floats are always written with 17 significant digits so that identical
//! computations give byte-identical files.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::configuration::{Configuration, RawConfiguration};
use crate::constants::{Dimension, UniversalConstants};
use crate::dynamics::{conserved_quantities, BubbleState, Event, Trajectory};
use crate::error::{Error, Result};
use crate::rectangle::RectangleTrajectory;

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<Configuration> {
    let raw: RawConfiguration = serde_json::from_str(text).map_err(json_error)?;
    Configuration::try_from(raw)
}

pub fn parse_config_file(path: &Path) -> Result<Configuration> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn config_to_json(cfg: &Configuration) -> String {
    to_canonical_json(&RawConfiguration::from(cfg))
}

/// 17 significant digits, round-trip exact.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, k: usize| out.extend(std::iter::repeat_n(' ', k));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Short numeric rows stay on one line.
            if items.iter().all(|x| x.is_number()) && items.len() <= 16 {
                out.push('[');
                for (k, x) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, x) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, x, indent + 2);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*key], indent + 2);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and fixed float formatting. Non-finite
/// floats become `null`.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).unwrap_or(Value::Null);
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

fn io_error(e: std::io::Error) -> Error {
    Error::Validation(format!("i/o failure: {e}"))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

/// Header `t, lambda_1.., z_1_1.., conserved`.
pub fn trajectory_header(j: usize, n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=j).map(|i| format!("lambda_{i}")));
    for i in 1..=j {
        h.extend((1..=n).map(|k| format!("z_{i}_{k}")));
    }
    h.push("conserved".into());
    h
}

/// Writes the trajectory as CSV. `digest`, when given, goes in a leading
/// `#` comment line.
pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory,
    digest: Option<&str>,
    mut out: W,
) -> Result<()> {
    if let Some(d) = digest {
        writeln!(out, "# input_digest={d}").map_err(io_error)?;
    }
    let j = traj.signs.len();
    let n = traj
        .samples
        .first()
        .and_then(|s| s.centers.first())
        .map_or(0, |c| c.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(j, n)).map_err(csv_error)?;
    for (s, c) in traj.samples.iter().zip(&traj.ledger) {
        let mut row = vec![format_float(s.t)];
        row.extend(s.scales.iter().map(|&x| format_float(x)));
        row.extend(s.centers.iter().flatten().map(|&x| format_float(x)));
        row.push(format_float(c.quadratic));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(io_error)
}

pub fn write_events_json(events: &[Event]) -> String {
    to_canonical_json(events)
}

/// A trajectory read back from CSV, without sign information.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub bubbles: usize,
    pub space_dim: usize,
    pub samples: Vec<BubbleState>,
    pub conserved: Vec<f64>,
}

impl TrajectoryTable {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn scale_series(&self, component: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.scales[component]).collect()
    }

    /// Attaches signs and rebuilds the conserved-quantity ledger.
    pub fn into_trajectory(self, consts: &UniversalConstants, signs: &[i8]) -> Result<Trajectory> {
        if signs.len() != self.bubbles {
            return Err(Error::ShapeMismatch(format!(
                "{} signs for a {}-bubble trajectory",
                signs.len(),
                self.bubbles
            )));
        }
        if self.space_dim != consts.dim.get() as usize {
            return Err(Error::ShapeMismatch(format!(
                "trajectory lives in R^{}, constants are for N = {}",
                self.space_dim, consts.dim
            )));
        }
        let ledger = self
            .samples
            .iter()
            .map(|s| conserved_quantities(consts, &s.scales, &s.centers))
            .collect();
        let last = self.samples.last().map_or(0.0, |s| s.t);
        Ok(Trajectory {
            dim: consts.dim,
            signs: signs.to_vec(),
            samples: self.samples,
            events: vec![Event {
                time: last,
                kind: crate::dynamics::EventKind::HorizonReached,
                bubbles: vec![],
                value: last,
            }],
            ledger,
        })
    }
}

fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let bad = |column: usize, message: String| Error::Parse {
        line: 1,
        column,
        message,
    };
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields.first() != Some(&"t") {
        return Err(bad(1, "first column must be `t`".into()));
    }
    let j = fields
        .iter()
        .skip(1)
        .take_while(|f| f.starts_with("lambda_"))
        .count();
    if j == 0 {
        return Err(bad(2, "expected at least one `lambda_i` column".into()));
    }
    let rest = fields.len().saturating_sub(2 + j);
    if fields.last() != Some(&"conserved") || !rest.is_multiple_of(j) {
        return Err(bad(
            fields.len(),
            "expected `z_i_k` columns followed by `conserved`".into(),
        ));
    }
    let n = rest / j;
    let expect = trajectory_header(j, n);
    for (k, (got, want)) in fields.iter().zip(&expect).enumerate() {
        if got != want {
            return Err(bad(
                k + 1,
                format!("expected column `{want}`, found `{got}`"),
            ));
        }
    }
    Ok((j, n))
}

fn parse_float(field: &str, line: usize, column: usize) -> Result<f64> {
    let s = field.trim();
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse::<f64>().map_err(|e| Error::Parse {
            line,
            column,
            message: format!("`{s}` is not a number: {e}"),
        }),
    }
}

/// Parses the CSV written by [`write_trajectory_csv`]. Times must increase
/// strictly and scales must be positive.
pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    let (j, n) = parse_header(&header)?;
    let width = 2 + j + j * n;
    let mut samples: Vec<BubbleState> = Vec::new();
    let mut conserved = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(k, f)| parse_float(f, line, k + 1))
            .collect::<Result<Vec<f64>>>()?;
        let t = vals[0];
        if !t.is_finite() || samples.last().is_some_and(|s| s.t >= t) {
            return Err(Error::Parse {
                line,
                column: 1,
                message: "times must be finite and strictly increasing".into(),
            });
        }
        let scales = vals[1..=j].to_vec();
        if let Some(k) = scales.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Parse {
                line,
                column: k + 2,
                message: "scales must be positive and finite".into(),
            });
        }
        let centers = (0..j)
            .map(|i| vals[1 + j + i * n..1 + j + (i + 1) * n].to_vec())
            .collect();
        samples.push(BubbleState { t, scales, centers });
        conserved.push(vals[width - 1]);
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 2,
            column: 1,
            message: "no samples".into(),
        });
    }
    Ok(TrajectoryTable {
        bubbles: j,
        space_dim: n,
        samples,
        conserved,
    })
}

/// CSV with columns `t, lambda, d, q, h1, h2, h3`.
pub fn write_rectangle_csv<W: Write>(
    traj: &RectangleTrajectory,
    digest: Option<&str>,
    mut out: W,
) -> Result<()> {
    if let Some(d) = digest {
        writeln!(out, "# input_digest={d}").map_err(io_error)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "lambda", "d", "q", "h1", "h2", "h3"])
        .map_err(csv_error)?;
    for s in &traj.samples {
        let row = [s.t, s.lambda, s.d, s.q, s.h[0], s.h[1], s.h[2]].map(format_float);
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(io_error)
}

/// Dimension check shared by readers that take `N` from a flag.
pub fn dimension(n: i64) -> Result<Dimension> {
    u32::try_from(n)
        .ok()
        .and_then(|n| Dimension::new(n).ok())
        .ok_or_else(|| Error::Validation("N ≥ 7 required".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v = serde_json::json!({"b": 1.5, "a": [1, 2], "c": {"z": true, "y": null}});
        let s = to_canonical_json(&v);
        let a = s.find("\"a\"").unwrap();
        let b = s.find("\"b\"").unwrap();
        assert!(a < b);
        assert!(s.contains("1.5000000000000000e0"));
        assert!(s.find("\"y\"").unwrap() < s.find("\"z\"").unwrap());
    }

    #[test]
    fn parse_error_has_position() {
        let e = parse_config_str("{\n  \"dim\": 7,\n  \"signs\": [1,\n").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert!(line >= 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_is_reported() {
        let e = parse_trajectory_csv("t,lambda_1,z_1_1,z_1_2,energy\n").unwrap_err();
        assert_eq!(e.code(), "parse_error");
    }
}
