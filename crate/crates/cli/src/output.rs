//! File rendering. JSON uses serde_json's shortest round-trip float
//! formatting; CSV writes floats with exactly ten decimals and integers
//! verbatim, so repeated runs diff cleanly.

use anyhow::Result;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::Format;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Default)]
pub struct Output {
    pub files: Vec<Artifact>,
    pub stdout: String,
    pub warnings: Vec<String>,
}

impl Output {
    pub fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push(Artifact {
            name: name.into(),
            bytes,
        });
    }

    /// Adds a file and echoes it on stdout.
    pub fn push_main(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.stdout.push_str(&String::from_utf8_lossy(&bytes));
        self.push(name, bytes);
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.10}")
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.to_string(),
            (None, Some(i)) => i.to_string(),
            _ => num(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        Value::Array(_) | Value::Object(_) => v.to_string(),
    }
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, x, out);
            }
        }
        _ => out.push((prefix.to_string(), scalar(v))),
    }
}

/// Flattens each row (nested objects become dotted columns) into one CSV
/// table. Column order follows the first row.
pub fn csv_rows<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Option<Vec<String>> = None;
    for row in rows {
        let mut cells = Vec::new();
        flatten_into("", &serde_json::to_value(row)?, &mut cells);
        if header.is_none() {
            let h: Vec<String> = cells.iter().map(|(k, _)| k.clone()).collect();
            w.write_record(&h)?;
            header = Some(h);
        }
        w.write_record(cells.iter().map(|(_, v)| v))?;
    }
    Ok(w.into_inner()?)
}

/// Prefixes every row with extra leading columns.
pub fn with_columns<T: Serialize>(extra: &[(&str, Value)], row: &T) -> Result<Value> {
    let mut m = Map::new();
    for (k, v) in extra {
        m.insert((*k).to_string(), v.clone());
    }
    match serde_json::to_value(row)? {
        Value::Object(o) => m.extend(o),
        other => {
            m.insert("value".into(), other);
        }
    }
    Ok(Value::Object(m))
}

pub fn render<T: Serialize>(format: Format, rows: &[T], json: &impl Serialize) -> Result<Vec<u8>> {
    match format {
        Format::Json => json_bytes(json),
        Format::Csv => csv_rows(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn csv_formats_numbers_and_nesting() {
        let rows = [json!({"a": 1, "b": 0.5, "c": {"d": null, "e": "x"}})];
        let out = String::from_utf8(csv_rows(&rows).unwrap()).unwrap();
        assert_eq!(out, "a,b,c.d,c.e\n1,0.5000000000,,x\n");
    }
}
