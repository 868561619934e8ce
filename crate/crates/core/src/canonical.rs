//! Canonical JSON rendering: sorted object keys, floats with 17 significant
//! digits, integers verbatim, no insignificant whitespace, trailing LF.
//!
//! Equal values render to byte-equal text, which is what makes checkpoints and
//! reports diffable across runs.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

/// Renders a float with 17 significant digits in scientific notation.
pub fn format_f64(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::Numeric(format!("cannot serialise non-finite value {x}")));
    }
    // normalise -0.0 so equal values stay byte-equal
    let x = if x == 0.0 { 0.0 } else { x };
    Ok(format!("{x:.16e}"))
}

fn write_number(n: &Number, out: &mut String) -> Result<()> {
    if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else {
        out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN))?);
    }
    Ok(())
}

fn write_value(v: &Value, out: &mut String) -> Result<()> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out)?,
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).map_err(|e| Error::Format(e.to_string()))?)
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).map_err(|e| Error::Format(e.to_string()))?);
                out.push(':');
                write_value(&map[k], out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

/// Canonical text for a JSON value, including the trailing newline.
pub fn to_canonical_string(v: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(v, &mut out)?;
    out.push('\n');
    Ok(out)
}

/// Serialises any `Serialize` type canonically.
///
/// Floats that happen to be integral (e.g. `2.0`) stay floats because serde_json
/// keeps the f64 representation for them.
pub fn to_canonical<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    to_canonical_string(&v)
}

pub fn write_canonical<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_canonical(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Builds an object from `(key, value)` pairs.
pub fn object<I, K>(pairs: I) -> Value
where
    I: IntoIterator<Item = (K, Value)>,
    K: Into<String>,
{
    let mut map = Map::new();
    for (k, v) in pairs {
        map.insert(k.into(), v);
    }
    Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorted_keys_and_fixed_digits() {
        let v = json!({"b": 1, "a": [0.5, -2.0], "c": {"z": true, "y": null}});
        let s = to_canonical_string(&v).unwrap();
        assert_eq!(
            s,
            "{\"a\":[5.0000000000000000e-1,-2.0000000000000000e0],\"b\":1,\"c\":{\"y\":null,\"z\":true}}\n"
        );
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_f64(x).unwrap();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
            let v: Value = serde_json::from_str(&s).unwrap();
            assert_eq!(v.as_f64().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn negative_zero_is_normalised() {
        assert_eq!(format_f64(-0.0).unwrap(), format_f64(0.0).unwrap());
    }

    #[test]
    fn rejects_nan() {
        assert!(format_f64(f64::NAN).is_err());
    }

    #[test]
    fn reparse_rerender_is_stable() {
        let v = json!({"x": [1.25, 3, -7.5e-9], "name": "a\"b"});
        let s1 = to_canonical_string(&v).unwrap();
        let back: Value = serde_json::from_str(&s1).unwrap();
        assert_eq!(to_canonical_string(&back).unwrap(), s1);
    }
}
