//! Rendering of reports as JSON, CSV or plain text.

use std::io::{self, Write};

use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// A flat report: fixed header fields first, then command-specific ones. A
/// `rows` array of objects is the table emitted by `--output csv`.
pub fn render(report: &Value, format: Format, out: &mut dyn Write) -> io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)
        }
        Format::Text => {
            let mut flat = Vec::new();
            flatten("", report, &mut flat);
            let width = flat.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            for (k, v) in flat {
                writeln!(out, "{k:<width$}  {v}")?;
            }
            Ok(())
        }
        Format::Csv => match report.get("rows").and_then(Value::as_array) {
            Some(rows) if rows.iter().all(Value::is_object) && !rows.is_empty() => write_table(rows, out),
            _ => {
                writeln!(out, "key,value")?;
                let mut flat = Vec::new();
                flatten("", report, &mut flat);
                for (k, v) in flat {
                    writeln!(out, "{},{}", csv_cell(&k), csv_cell(&v))?;
                }
                Ok(())
            }
        },
    }
}

fn write_table(rows: &[Value], out: &mut dyn Write) -> io::Result<()> {
    let flat: Vec<Vec<(String, String)>> = rows
        .iter()
        .map(|r| {
            let mut f = Vec::new();
            flatten("", r, &mut f);
            f
        })
        .collect();
    let mut columns: Vec<String> = Vec::new();
    for row in &flat {
        for (k, _) in row {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    writeln!(out, "{}", columns.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","))?;
    for row in &flat {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| row.iter().find(|(k, _)| k == c).map(|(_, v)| csv_cell(v)).unwrap_or_default())
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
            for (i, item) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), item, out);
            }
        }
        Value::Array(items) => {
            out.push((prefix.to_string(), items.iter().map(scalar).collect::<Vec<_>>().join(" ")));
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

/// Appends the fields of `body` (an object) after those of `head`.
pub fn merge(head: Map<String, Value>, body: Value) -> Value {
    let mut all = head;
    if let Value::Object(b) = body {
        all.extend(b);
    }
    Value::Object(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn to_string(v: &Value, f: Format) -> String {
        let mut buf = Vec::new();
        render(v, f, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn text_flattens_nested_fields() {
        let v = json!({"K": 2.5, "census": {"pairs": 3}, "model": [1, 3]});
        let s = to_string(&v, Format::Text);
        assert!(s.contains("census.pairs  3"));
        assert!(s.contains("model         1 3"));
    }

    #[test]
    fn csv_prefers_the_row_table() {
        let v = json!({"K": 2.0, "rows": [{"a": 1, "b": "x,y"}, {"a": 2, "c": true}]});
        assert_eq!(to_string(&v, Format::Csv), "a,b,c\n1,\"x,y\",\n2,,true\n");
        let v = json!({"K": 2.0, "seed": null});
        assert_eq!(to_string(&v, Format::Csv), "key,value\nK,2.0\nseed,\n");
    }
}
