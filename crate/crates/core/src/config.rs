//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors so typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tracker::TrackerConfig;

/// Ordered `(key, value, line)` triples from a key=value document.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            key: line.to_string(),
            message: format!("line {}: expected key=value", k + 1),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string(), k + 1));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse {value:?}"),
    })
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config {
            key: key.to_string(),
            message: format!("expected a boolean, got {value:?}"),
        }),
    }
}

impl TrackerConfig {
    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda_motion" => self.weights.lambda_motion = parse_value(key, value)?,
            "lambda_appearance" => self.weights.lambda_appearance = parse_value(key, value)?,
            "motion_scale" => self.weights.motion_scale = parse_value(key, value)?,
            "gate" => self.gate.gate = parse_value(key, value)?,
            "phi_s" => self.structural.phi_s = parse_value(key, value)?,
            "max_set_size" => {
                let n: usize = parse_value(key, value)?;
                self.structural.max_set_size = (n > 0).then_some(n);
            }
            "recovery_window" => self.recovery.window = parse_value(key, value)?,
            "recovery_tolerance" => self.recovery.tolerance = parse_value(key, value)?,
            "recovery_enabled" => self.recovery.enabled = parse_bool(key, value)?,
            "structural_enabled" => self.structural_enabled = parse_bool(key, value)?,
            "appearance_enabled" => self.appearance_enabled = parse_bool(key, value)?,
            "min_confidence" => self.min_confidence = parse_value(key, value)?,
            "ar_order" => self.ar_order = parse_value(key, value)?,
            "history_window" => self.history_window = parse_value(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies a key=value document on top of `self`, then validates.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (key, value, _) in parse_kv(text)? {
            self.set(&key, &value)?;
        }
        self.validate()
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_kv(&text)
    }

    /// Renders every field as a config document that [`Self::apply_kv`]
    /// reads back unchanged.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("lambda_motion", self.weights.lambda_motion.to_string());
        line(
            "lambda_appearance",
            self.weights.lambda_appearance.to_string(),
        );
        line("motion_scale", self.weights.motion_scale.to_string());
        line("gate", self.gate.gate.to_string());
        line("phi_s", self.structural.phi_s.to_string());
        line(
            "max_set_size",
            self.structural.max_set_size.unwrap_or(0).to_string(),
        );
        line("recovery_window", self.recovery.window.to_string());
        line("recovery_tolerance", self.recovery.tolerance.to_string());
        line("recovery_enabled", self.recovery.enabled.to_string());
        line("structural_enabled", self.structural_enabled.to_string());
        line("appearance_enabled", self.appearance_enabled.to_string());
        line("min_confidence", self.min_confidence.to_string());
        line("ar_order", self.ar_order.to_string());
        line("history_window", self.history_window.to_string());
        s
    }
}
