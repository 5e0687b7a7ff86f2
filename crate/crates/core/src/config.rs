//! Flat key-value manifests (TOML syntax, no tables).

use std::fmt::Write as _;
use std::path::Path;

use toml::Value;

use crate::error::{Error, Result};
use crate::outer::TrajectoryKind;
use crate::sim::{Mode, SimConfig};

/// Manifest reproducing the 30 s square maneuver.
pub const PAPER_SQUARE: &str = include_str!("../configs/paper_square.cfg");

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn number(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(config_err(key, format!("expected a number, got {}", other.type_str()))),
    }
}

fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| config_err(key, format!("expected a string, got {}", v.type_str())))
}

/// Parses a manifest. Keys not given keep their square-maneuver defaults.
pub fn parse_manifest(text: &str) -> Result<SimConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let field = e
            .span()
            .map(|s| text[..s.start].lines().count().max(1))
            .map_or_else(|| "manifest".to_string(), |line| format!("line {line}"));
        config_err(&field, e.message().to_string())
    })?;
    let mut c = SimConfig::paper_square();
    let (mut hover_x, mut hover_y) = (0.0, 0.0);
    let mut trajectory = "square".to_string();
    for (key, v) in &table {
        let k = key.as_str();
        let p = &mut c.controller;
        match k {
            "step_size" => c.step_size = number(k, v)?,
            "duration" => c.duration = number(k, v)?,
            "mode" => {
                c.mode = match string(k, v)? {
                    "put" => Mode::Put,
                    "naive" | "naive_baseline" => Mode::Naive,
                    other => return Err(config_err(k, format!("unknown mode `{other}`"))),
                }
            }
            "model" => c.model = string(k, v)?.to_string(),
            "trajectory" => trajectory = string(k, v)?.to_string(),
            "hover_x" => hover_x = number(k, v)?,
            "hover_y" => hover_y = number(k, v)?,
            "zero_order_hold" => {
                c.zero_order_hold = v
                    .as_bool()
                    .ok_or_else(|| config_err(k, "expected true or false"))?
            }
            "r" => p.r = number(k, v)?,
            "a0" => p.a0 = number(k, v)?,
            "a1" => p.a1 = number(k, v)?,
            "rho" => p.rho = number(k, v)?,
            "delta_a" => p.delta_a = number(k, v)?,
            "delta_eta_dot" => p.delta_eta_dot = number(k, v)?,
            "k_a" => p.k_a = number(k, v)?,
            "k_eta" => p.k_eta = number(k, v)?,
            "p_omega" => p.p_omega = number(k, v)?,
            "k_omega" => p.k_omega = number(k, v)?,
            "k_x" => c.gains.k_x = number(k, v)?,
            "k_v" => c.gains.k_v = number(k, v)?,
            "initial_x" => {
                let arr = v.as_array().ok_or_else(|| config_err(k, "expected an array of numbers"))?;
                c.initial.x = Some(arr.iter().map(|e| number(k, e)).collect::<Result<_>>()?);
            }
            "initial_lambda_angle" => c.initial.lambda_angle = Some(number(k, v)?),
            "initial_omega" => c.initial.omega = number(k, v)?,
            _ => return Err(config_err(k, "unknown key")),
        }
    }
    c.trajectory = match trajectory.as_str() {
        "square" => TrajectoryKind::Square,
        "hover" => TrajectoryKind::Hover { x: hover_x, y: hover_y },
        other => return Err(config_err("trajectory", format!("unknown trajectory `{other}`"))),
    };
    c.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => config_err(name, reason),
        other => other,
    })?;
    Ok(c)
}

pub fn load_manifest(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err("path", format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

/// Writes a manifest that parses back to `c`.
pub fn to_manifest(c: &SimConfig) -> String {
    let mut s = String::new();
    let p = &c.controller;
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("step_size", format!("{:?}", c.step_size));
    kv("duration", format!("{:?}", c.duration));
    kv("mode", format!("\"{}\"", c.mode.name()));
    kv("model", format!("\"{}\"", c.model));
    kv("trajectory", format!("\"{}\"", c.trajectory.name()));
    if let TrajectoryKind::Hover { x, y } = c.trajectory {
        kv("hover_x", format!("{x:?}"));
        kv("hover_y", format!("{y:?}"));
    }
    kv("zero_order_hold", c.zero_order_hold.to_string());
    for (k, v) in [
        ("r", p.r),
        ("a0", p.a0),
        ("a1", p.a1),
        ("rho", p.rho),
        ("delta_a", p.delta_a),
        ("delta_eta_dot", p.delta_eta_dot),
        ("k_a", p.k_a),
        ("k_eta", p.k_eta),
        ("p_omega", p.p_omega),
        ("k_omega", p.k_omega),
        ("k_x", c.gains.k_x),
        ("k_v", c.gains.k_v),
        ("initial_omega", c.initial.omega),
    ] {
        kv(k, format!("{v:?}"));
    }
    if let Some(a) = c.initial.lambda_angle {
        kv("initial_lambda_angle", format!("{a:?}"));
    }
    if let Some(x) = &c.initial.x {
        let items: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        kv("initial_x", format!("[{}]", items.join(", ")));
    }
    s
}

/// Parameters a sweep may vary.
pub const SWEEP_PARAMS: [&str; 4] = ["r", "k_a", "k_omega", "step_size"];

/// Copy of `c` with one sweep parameter replaced.
pub fn with_param(c: &SimConfig, name: &str, value: f64) -> Result<SimConfig> {
    let mut c = c.clone();
    match name {
        "r" => c.controller.r = value,
        "k_a" => c.controller.k_a = value,
        "k_omega" => c.controller.k_omega = value,
        "step_size" => c.step_size = value,
        _ => {
            return Err(config_err(
                name,
                format!("not a sweep parameter, expected one of {}", SWEEP_PARAMS.join(", ")),
            ))
        }
    }
    c.validate().map_err(|e| match e {
        Error::InvalidParameter { name, reason } => config_err(name, reason),
        other => other,
    })?;
    Ok(c)
}
