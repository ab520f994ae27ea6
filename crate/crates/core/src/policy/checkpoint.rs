//! Plain-text parameter checkpoints.
//!
//! ```text
//! theta 3 1.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0
//! temperature 1.0000000000000001e-1
//! eas.W1 8x3 ...
//! eas.b1 8 ...
//! eas.w2 8 ...
//! eas.b2 0.0000000000000000e0
//! ```
//!
//! Values use 17 significant digits, so a write/read cycle is exact.

use std::path::Path;

use thiserror::Error;

use super::{CombinedPolicy, EasParams, PolicyParams};

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn fmt_values(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
}

pub fn serialize_checkpoint(policy: &CombinedPolicy) -> String {
    let theta = &policy.base.theta;
    let mut out = format!(
        "theta {} {}\ntemperature {:.16e}\n",
        theta.len(),
        fmt_values(theta),
        policy.base.temperature
    );
    if let Some(a) = &policy.adapter {
        out += &format!("eas.W1 {}x{} {}\n", a.hidden, a.features, fmt_values(&a.w1));
        out += &format!("eas.b1 {} {}\n", a.hidden, fmt_values(&a.b1));
        out += &format!("eas.w2 {} {}\n", a.hidden, fmt_values(&a.w2));
        out += &format!("eas.b2 {:.16e}\n", a.b2);
    }
    out
}

fn values(line: usize, toks: &[&str], expected: usize) -> Result<Vec<f64>, CheckpointError> {
    if toks.len() != expected {
        return Err(CheckpointError::Syntax { line, message: format!("expected {expected} values, found {}", toks.len()) });
    }
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| CheckpointError::Syntax { line, message: format!("invalid number `{t}`") }))
        .collect()
}

fn shape(line: usize, tok: &str) -> Result<Vec<usize>, CheckpointError> {
    tok.split('x')
        .map(|d| d.parse().map_err(|_| CheckpointError::Syntax { line, message: format!("invalid shape `{tok}`") }))
        .collect()
}

pub fn parse_checkpoint(text: &str) -> Result<CombinedPolicy, CheckpointError> {
    let mut theta = None;
    let mut temperature = None;
    let (mut w1, mut b1, mut w2, mut b2) = (None, None, None, None);
    let mut dims = (0usize, 0usize);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let Some((&key, rest)) = toks.split_first() else { continue };
        let syntax = |message: &str| CheckpointError::Syntax { line, message: message.to_string() };
        match key {
            "theta" | "eas.b1" | "eas.w2" => {
                let (&dim, vals) = rest.split_first().ok_or_else(|| syntax("missing shape"))?;
                let n = shape(line, dim)?;
                if n.len() != 1 {
                    return Err(syntax("expected a vector shape"));
                }
                let v = values(line, vals, n[0])?;
                match key {
                    "theta" => theta = Some(v),
                    "eas.b1" => b1 = Some(v),
                    _ => w2 = Some(v),
                }
            }
            "eas.W1" => {
                let (&dim, vals) = rest.split_first().ok_or_else(|| syntax("missing shape"))?;
                let s = shape(line, dim)?;
                if s.len() != 2 {
                    return Err(syntax("expected a `HxF` matrix shape"));
                }
                dims = (s[0], s[1]);
                w1 = Some(values(line, vals, s[0] * s[1])?);
            }
            "temperature" => temperature = Some(values(line, rest, 1)?[0]),
            "eas.b2" => b2 = Some(values(line, rest, 1)?[0]),
            other => return Err(syntax(&format!("unknown key `{other}`"))),
        }
    }
    let base = PolicyParams {
        theta: theta.ok_or(CheckpointError::Missing("theta"))?,
        temperature: temperature.ok_or(CheckpointError::Missing("temperature"))?,
    };
    if !(base.temperature > 0.0) {
        return Err(CheckpointError::Syntax { line: 0, message: "temperature must be positive".into() });
    }
    let adapter = match w1 {
        None => None,
        Some(w1) => {
            let (hidden, features) = dims;
            let b1 = b1.ok_or(CheckpointError::Missing("eas.b1"))?;
            let w2 = w2.ok_or(CheckpointError::Missing("eas.w2"))?;
            if b1.len() != hidden || w2.len() != hidden || features != base.theta.len() {
                return Err(CheckpointError::Syntax { line: 0, message: "adapter shapes are inconsistent".into() });
            }
            Some(EasParams { features, hidden, w1, b1, w2, b2: b2.ok_or(CheckpointError::Missing("eas.b2"))? })
        }
    };
    Ok(CombinedPolicy { base, adapter })
}

pub fn write_checkpoint(path: impl AsRef<Path>, policy: &CombinedPolicy) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, serialize_checkpoint(policy))
        .map_err(|e| CheckpointError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<CombinedPolicy, CheckpointError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CheckpointError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_checkpoint(&text)
}
