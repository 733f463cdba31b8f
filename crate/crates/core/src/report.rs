//! Canonical JSON reports: sorted keys, floats at 12 significant digits, and
//! a header carrying the full run configuration.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub const TOOL: &str = "oi-lab";
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Header<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: C,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub header: Header<C>,
    pub verdict: Verdict,
    pub result: R,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn of(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    pub fn new(command: &str, seed: Option<u64>, config: C, pass: bool, result: R) -> Self {
        Report {
            header: Header {
                tool: TOOL,
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                seed,
                config,
            },
            verdict: Verdict::of(pass),
            result,
        }
    }
}

/// `v` in scientific notation with 12 significant digits; integers stay integers.
pub fn format_number(n: &serde_json::Number) -> String {
    if n.is_f64() {
        let v = n.as_f64().expect("f64 number");
        if v == 0.0 {
            return "0.0".into();
        }
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
    } else {
        n.to_string()
    }
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| {
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&format_number(n)),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                pad(out, depth + 1);
                let _ = write!(out, "{}: ", Value::String((*key).clone()));
                write_value(out, &map[*key], depth + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

pub fn to_canonical_json(value: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

pub fn emit_report(value: &impl Serialize, path: &Path) -> Result<()> {
    std::fs::write(path, to_canonical_json(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_floats_fixed() {
        let text = to_canonical_json(&json!({"b": 0.1, "a": [1, 2.5], "c": {"z": null, "y": "s"}}))
            .unwrap();
        assert_eq!(
            text,
            "{\n  \"a\": [\n    1,\n    2.50000000000e0\n  ],\n  \"b\": 1.00000000000e-1,\n  \"c\": {\n    \"y\": \"s\",\n    \"z\": null\n  }\n}\n"
        );
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["b"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn twelve_significant_digits() {
        let n = serde_json::Number::from_f64(1.0 / 3.0).unwrap();
        assert_eq!(format_number(&n), "3.33333333333e-1");
        let n = serde_json::Number::from_f64(-2.0e-20).unwrap();
        assert_eq!(format_number(&n), "-2.00000000000e-20");
        assert_eq!(format_number(&serde_json::Number::from_f64(0.0).unwrap()), "0.0");
    }

    #[test]
    fn header_embeds_config() {
        #[derive(Serialize)]
        struct Cfg {
            epsilon: f64,
        }
        let r = Report::new("construct", Some(7), Cfg { epsilon: 0.1 }, true, json!({}));
        let v: Value = serde_json::from_str(&to_canonical_json(&r).unwrap()).unwrap();
        assert_eq!(v["header"]["config"]["epsilon"].as_f64(), Some(0.1));
        assert_eq!(v["header"]["seed"].as_u64(), Some(7));
        assert_eq!(v["verdict"], "pass");
    }
}
