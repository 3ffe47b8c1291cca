//! Deterministic JSON reports: sorted keys, floats at 9 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Round to 9 significant digits and print the shortest form that
/// reads back to the rounded value.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("float round trip");
    let s = format!("{rounded}");
    if s.contains('.') || s.contains('e') || s.len() <= 16 {
        s
    } else {
        format!("{rounded:e}")
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().unwrap()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            let _ = write!(out, "{}]", pad(indent));
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            // serde_json's default map is ordered by key
            for (i, (k, item)) in map.iter().enumerate() {
                let _ = write!(out, "{}{}: ", pad(indent + 1), serde_json::to_string(k).unwrap());
                write_value(out, item, indent + 1);
                if i + 1 < map.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            let _ = write!(out, "{}}}", pad(indent));
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report values serialize");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

/// A subcommand's report.
#[derive(Debug, Default)]
pub struct Report {
    pub command: String,
    pub config: Map<String, Value>,
    pub results: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn config<T: Serialize>(&mut self, key: &str, value: T) -> &mut Self {
        self.config.insert(key.into(), serde_json::to_value(value).unwrap());
        self
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: T) -> &mut Self {
        self.results.insert(key.into(), serde_json::to_value(value).unwrap());
        self
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn render(&self) -> String {
        let mut warnings = self.warnings.clone();
        warnings.sort();
        warnings.dedup();
        let mut top = Map::new();
        top.insert("tool".into(), "polyeval".into());
        top.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        top.insert("command".into(), self.command.clone().into());
        top.insert("config".into(), Value::Object(self.config.clone()));
        top.insert("results".into(), Value::Object(self.results.clone()));
        top.insert("warnings".into(), warnings.into());
        to_json(&Value::Object(top))
    }

    /// Write to `path`, or to stdout when absent.
    pub fn emit(&self, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.render();
        match path {
            Some(p) => crate::write_file(p, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}
