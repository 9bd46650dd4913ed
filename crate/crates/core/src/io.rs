//! File formats.
//!
//! Space JSON:
//!
//! ```json
//! {"nodes": [{"id": 0, "coords": [0.0, 0.0], "measure": 0.25, "dim_loc": 2}, ...],
//!  "edges": [{"i": 0, "j": 1, "length": 0.5}, ...]}
//! ```
//!
//! Node ids must be exactly `0..n`, in any order. `coords` is optional but
//! must be present on every node or on none. Fields are a JSON array of
//! numbers or a one-column CSV with an optional header.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::space::DiscreteMms;
use crate::verify::Comparison;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
    pub measure: f64,
    pub dim_loc: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceRecord {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

fn parse_err(context: &str, message: impl Into<String>) -> Error {
    Error::Parse { context: context.to_string(), message: message.into() }
}

impl SpaceRecord {
    pub fn from_space(space: &DiscreteMms) -> Self {
        let nodes = (0..space.node_count())
            .map(|i| NodeRecord { id: i, coords: space.coord(i).map(<[f64]>::to_vec), measure: space.measure()[i], dim_loc: space.dim_loc()[i] })
            .collect();
        let edges = space.edges().iter().map(|e| EdgeRecord { i: e.i, j: e.j, length: e.length }).collect();
        Self { nodes, edges }
    }

    /// Builds the space; `context` names the source in error messages.
    pub fn into_space(mut self, context: &str) -> Result<DiscreteMms> {
        let n = self.nodes.len();
        self.nodes.sort_by_key(|r| r.id);
        for (k, r) in self.nodes.iter().enumerate() {
            if r.id != k {
                return Err(parse_err(context, format!("node ids must be exactly 0..{n}; missing or duplicate id near {k}")));
            }
        }
        let with_coords = self.nodes.iter().filter(|r| r.coords.is_some()).count();
        let coords = match with_coords {
            0 => None,
            c if c == n => {
                let dim = self.nodes[0].coords.as_ref().unwrap().len();
                if let Some(r) = self.nodes.iter().find(|r| r.coords.as_ref().unwrap().len() != dim) {
                    return Err(parse_err(
                        context,
                        format!("nodes[id={}].coords has {} entries, expected {dim}", r.id, r.coords.as_ref().unwrap().len()),
                    ));
                }
                Some((dim, self.nodes.iter().flat_map(|r| r.coords.clone().unwrap()).collect()))
            }
            _ => return Err(parse_err(context, "coords must be given for every node or for none")),
        };
        for (k, e) in self.edges.iter().enumerate() {
            if e.i >= n || e.j >= n {
                return Err(parse_err(context, format!("edges[{k}] references node {} but there are {n} nodes", e.i.max(e.j))));
            }
        }
        let measure = self.nodes.iter().map(|r| r.measure).collect();
        let dim_loc = self.nodes.iter().map(|r| r.dim_loc).collect();
        DiscreteMms::new(coords, self.edges.iter().map(|e| (e.i, e.j, e.length)), measure, dim_loc).map_err(|e| parse_err(context, e.to_string()))
    }
}

/// Deserialises JSON, reporting the failing field path with line and column.
fn from_json<T: for<'de> Deserialize<'de>>(text: &str, context: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        parse_err(context, format!("at {path} (line {}, column {}): {inner}", inner.line(), inner.column()))
    })
}

pub fn parse_space(text: &str, context: &str) -> Result<DiscreteMms> {
    from_json::<SpaceRecord>(text, context)?.into_space(context)
}

pub fn read_space(path: &Path) -> Result<DiscreteMms> {
    parse_space(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn space_to_json(space: &DiscreteMms) -> String {
    canonical_json(&serde_json::to_value(SpaceRecord::from_space(space)).expect("space record serialises"))
}

pub fn write_space(space: &DiscreteMms, path: &Path) -> Result<()> {
    fs::write(path, space_to_json(space))?;
    Ok(())
}

/// JSON with sorted object keys, integers as integers, and every other
/// number as `{:.16e}` (17 significant digits, round-trips any `f64`).
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out.push('\n');
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                out.push_str(&n.to_string());
            } else {
                let x = n.as_f64().unwrap();
                let _ = write!(out, "{x:.16e}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            out.push('[');
            for (k, v) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (k, key) in keys.into_iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}

/// Canonical JSON for any serialisable value. Non-finite floats become `null`.
pub fn to_canonical<T: Serialize>(value: &T) -> Result<String> {
    Ok(canonical_json(&serde_json::to_value(value)?))
}

/// A JSON array of numbers, or a one-column CSV.
pub fn parse_field(text: &str, context: &str, expected_len: usize) -> Result<ScalarField> {
    let trimmed = text.trim_start();
    let values: Vec<f64> = if trimmed.starts_with('[') {
        from_json(text, context)?
    } else {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 1 {
                return Err(parse_err(context, format!("line {}: expected one column, found {}", line + 1, rec.len())));
            }
            match rec[0].parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if line == 0 => continue,
                Err(e) => return Err(parse_err(context, format!("line {}: '{}' is not a number ({e})", line + 1, &rec[0]))),
            }
        }
        values
    };
    if values.len() != expected_len {
        return Err(parse_err(context, format!("field has {} values but the space has {expected_len} nodes", values.len())));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(parse_err(context, format!("value {k} is not finite")));
    }
    Ok(ScalarField::new(values))
}

pub fn read_field(path: &Path, expected_len: usize) -> Result<ScalarField> {
    parse_field(&fs::read_to_string(path)?, &path.display().to_string(), expected_len)
}

/// Rows `src,dst,value` under a header.
pub fn write_distance_csv<W: Write>(out: W, rows: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["src", "dst", "value"])?;
    for (s, d, v) in rows {
        w.write_record([s.to_string(), d.to_string(), format!("{v:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `node,x,y,prediction,direct,abs_err` for nodes where both sides exist.
pub fn write_comparison_csv<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "x", "y", "prediction", "direct", "abs_err"])?;
    for (i, p) in cmp.prediction.iter_valid() {
        let Some(d) = cmp.direct.get(i) else { continue };
        let [x, y] = cmp.coords[i];
        w.write_record([
            i.to_string(),
            format!("{x:.16e}"),
            format!("{y:.16e}"),
            format!("{p:.16e}"),
            format!("{d:.16e}"),
            format!("{:.16e}", (p - d).abs()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid_space, Rect};

    #[test]
    fn space_round_trip_is_byte_stable() {
        let s = build_grid_space(4, 3, Rect::new(0.0, 1.0, -0.5, 0.7)).unwrap();
        let text = space_to_json(&s);
        let back = parse_space(&text, "mem").unwrap();
        assert_eq!(space_to_json(&back), text);
        assert_eq!(back.measure(), s.measure());
    }

    #[test]
    fn canonical_sorts_keys_and_formats_floats() {
        let v: Value = serde_json::from_str(r#"{"b": 0.1, "a": [1, 2.5e-3], "c": {"z": null, "y": true}}"#).unwrap();
        assert_eq!(canonical_json(&v), "{\"a\":[1,2.5000000000000001e-3],\"b\":1.0000000000000001e-1,\"c\":{\"y\":true,\"z\":null}}\n");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let bad = r#"{"nodes": [{"id": 0, "measure": 1.0, "dim_loc": 1},
            {"id": 1, "measure": "heavy", "dim_loc": 1}], "edges": []}"#;
        let msg = parse_space(bad, "bad.json").unwrap_err().to_string();
        assert!(msg.contains("bad.json") && msg.contains("nodes[1].measure") && msg.contains("line 2"), "{msg}");
        let unknown = r#"{"nodes": [{"id": 0, "measure": 1.0, "dim_loc": 1, "mass": 2}], "edges": []}"#;
        assert!(parse_space(unknown, "u").unwrap_err().to_string().contains("nodes[0]"));
        let dup = r#"{"nodes": [{"id": 0, "measure": 1.0, "dim_loc": 1}, {"id": 0, "measure": 1.0, "dim_loc": 1}], "edges": []}"#;
        assert!(parse_space(dup, "d").is_err());
        let edge = r#"{"nodes": [{"id": 0, "measure": 1.0, "dim_loc": 1}], "edges": [{"i": 0, "j": 4, "length": 1.0}]}"#;
        assert!(parse_space(edge, "e").unwrap_err().to_string().contains("edges[0]"));
    }

    #[test]
    fn fields_from_json_and_csv() {
        assert_eq!(parse_field("[1, 2.5, -3]", "f", 3).unwrap().values(), &[1.0, 2.5, -3.0]);
        assert_eq!(parse_field("w\n1\n2\n", "f", 2).unwrap().values(), &[1.0, 2.0]);
        assert_eq!(parse_field("1\n2\n", "f", 2).unwrap().values(), &[1.0, 2.0]);
        assert!(parse_field("1\nx\n", "f", 2).unwrap_err().to_string().contains("line 2"));
        assert!(parse_field("[1, 2]", "f", 3).is_err());
        assert!(parse_field("1,2\n", "f", 1).is_err());
    }

    #[test]
    fn comparison_csv_skips_excluded_nodes() {
        use crate::verify::{verify_identity, Identity, VerifySetup};
        let c = verify_identity(Identity::Gradient, &VerifySetup::default_for(Identity::Gradient), 8).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node,x,y,prediction,direct,abs_err\n"));
        assert_eq!(text.lines().count(), 1 + 64 - c.report.nodes_excluded);
    }

    #[test]
    fn distance_csv_layout() {
        let mut buf = Vec::new();
        write_distance_csv(&mut buf, [(0, 1, 0.5), (0, 2, 1.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "src,dst,value\n0,1,5.0000000000000000e-1\n0,2,1.0000000000000000e0\n");
    }
}
