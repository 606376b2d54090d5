//! JSON reports.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Pretty printer that writes every float with 17 significant digits.
struct FullPrecision<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident $(($arg:ident : $ty:ty))?),* $(,)?) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)?) -> io::Result<()> {
                self.0.$name(w $(, $arg)?)
            }
        )*
    };
}

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    forward!(
        begin_array,
        end_array,
        begin_array_value(first: bool),
        end_array_value,
        begin_object,
        end_object,
        begin_object_key(first: bool),
        begin_object_value,
        end_object_value,
    );
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn digest(role: &str, path: &str, content: &[u8]) -> InputDigest {
    InputDigest { role: role.into(), path: path.into(), sha256: hex::encode(Sha256::digest(content)) }
}

/// A derived value next to its published reference.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub value: f64,
    pub reference: f64,
    pub deviation_percent: f64,
}

impl Comparison {
    pub fn new(quantity: &str, value: f64, reference: f64) -> Self {
        Self {
            quantity: quantity.into(),
            value,
            reference,
            deviation_percent: 100.0 * (value - reference) / reference.abs(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub settings: Map<String, Value>,
    pub results: Value,
    pub comparisons: Vec<Comparison>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            inputs: Vec::new(),
            settings: Map::new(),
            results: Value::Null,
            comparisons: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl Serialize) {
        self.settings.insert(key.into(), to_value(value));
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": self.inputs,
            "settings": self.settings,
            "results": self.results,
            "comparisons": self.comparisons,
            "warnings": self.warnings,
        })
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), CliError> {
        write_json(out, &self.to_json())
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    // Non-finite floats become null; nothing else can fail for our types.
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn write_json<W: Write>(mut out: W, value: &Value) -> Result<(), CliError> {
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| CliError::input(format!("writing report: {e}")))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_losslessly() {
        let vals = [1.0 / 3.0, -0.733_123_456_789_012_3, 8456.0, 1e-18 * 9.2, f64::MIN_POSITIVE];
        let mut buf = Vec::new();
        write_json(&mut buf, &json!({ "v": vals, "n": 3 })).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert!(text.contains("\"n\": 3"));
        let back: Value = serde_json::from_str(&text).unwrap();
        for (k, v) in vals.iter().enumerate() {
            assert_eq!(back["v"][k].as_f64().unwrap(), *v);
        }
    }

    #[test]
    fn comparison_sign() {
        let c = Comparison::new("chi", -0.8, -0.73);
        assert!(c.deviation_percent < 0.0);
        assert!((Comparison::new("g", 7.79, 6.67).deviation_percent - 16.79).abs() < 0.01);
    }

    #[test]
    fn digest_is_sha256() {
        let d = digest("params", "x", b"abc");
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
