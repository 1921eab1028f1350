//! JSON-lines manifests: one [`ImageRecord`] object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::record::{ImageRecord, Landmarks};
use super::taxonomy::is_taxonomy_pose;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifestMode {
    /// Every pose must belong to the 62-pose taxonomy.
    Strict,
    Lax,
}

pub fn load_manifest(path: &Path, mode: ManifestMode) -> Result<Vec<ImageRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file), mode).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses manifest text. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_manifest(reader: impl BufRead, mode: ManifestMode) -> Result<Vec<ImageRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<manifest>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_row(i + 1, &line)?;
        if mode == ManifestMode::Strict && !is_taxonomy_pose(record.yaw_deg, record.pitch_deg) {
            return Err(Error::Taxonomy {
                line: i + 1,
                yaw: record.yaw_deg,
                pitch: record.pitch_deg,
            });
        }
        records.push(record);
    }
    Ok(records)
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Manifest {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn get<'a>(obj: &'a Map<String, Value>, line: usize, field: &str) -> Result<&'a Value> {
    obj.get(field)
        .ok_or_else(|| field_err(line, field, "missing"))
}

fn number(obj: &Map<String, Value>, line: usize, field: &str) -> Result<f64> {
    get(obj, line, field)?
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| field_err(line, field, "expected a finite number"))
}

fn string(obj: &Map<String, Value>, line: usize, field: &str) -> Result<String> {
    get(obj, line, field)?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| field_err(line, field, "expected a string"))
}

fn parse_row(line: usize, text: &str) -> Result<ImageRecord> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| field_err(line, "<row>", format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| field_err(line, "<row>", "expected a JSON object"))?;

    let image_ref = string(obj, line, "image_ref")?;
    let subject_id = get(obj, line, "subject_id")?
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| field_err(line, "subject_id", "expected a non-negative integer"))?;
    let yaw_deg = number(obj, line, "yaw_deg")?;
    if !(-90.0..=90.0).contains(&yaw_deg) {
        return Err(field_err(
            line,
            "yaw_deg",
            format!("{yaw_deg} outside [-90, 90]"),
        ));
    }
    let pitch_deg = number(obj, line, "pitch_deg")?;
    let attribute = string(obj, line, "attribute")?
        .parse()
        .map_err(|e: String| field_err(line, "attribute", e))?;
    let illumination = string(obj, line, "illumination")?
        .parse()
        .map_err(|e: String| field_err(line, "illumination", e))?;

    let points = get(obj, line, "landmarks")?
        .as_array()
        .filter(|a| a.len() == 5)
        .ok_or_else(|| field_err(line, "landmarks", "expected an array of 5 [x, y] points"))?;
    let mut landmarks = [[0.0; 2]; 5];
    for (k, p) in points.iter().enumerate() {
        let xy = p
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?]))
            .filter(|[x, y]| x.is_finite() && y.is_finite() && *x >= 0.0 && *y >= 0.0)
            .ok_or_else(|| {
                field_err(
                    line,
                    "landmarks",
                    format!("point {k} must be a pair of non-negative numbers"),
                )
            })?;
        landmarks[k] = xy;
    }

    let mask_ref = match obj.get("mask_ref") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(field_err(line, "mask_ref", "expected a string")),
    };

    Ok(ImageRecord {
        image_ref,
        subject_id,
        yaw_deg,
        pitch_deg,
        attribute,
        illumination,
        landmarks: Landmarks(landmarks),
        mask_ref,
    })
}

pub fn write_manifest(path: &Path, records: &[ImageRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROW: &str = r#"{"image_ref":"a.png","subject_id":3,"yaw_deg":-22.5,"pitch_deg":30,"attribute":"smile","illumination":"front_below","landmarks":[[1,2],[3,4],[5,6],[7,8],[9,10]]}"#;

    fn parse(text: &str, mode: ManifestMode) -> Result<Vec<ImageRecord>> {
        parse_manifest(text.as_bytes(), mode)
    }

    #[test]
    fn three_rows_three_records() {
        let text = format!("{ROW}\n{ROW}\n\n{ROW}\n");
        let records = parse(&text, ManifestMode::Strict).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].attribute, super::super::Attribute::Smile);
        assert_eq!(records[0].landmarks.0[4], [9.0, 10.0]);
    }

    #[test]
    fn strict_rejects_pitch_seven_lax_accepts() {
        let text = ROW.replace("\"pitch_deg\":30", "\"pitch_deg\":7");
        match parse(&text, ManifestMode::Strict) {
            Err(Error::Taxonomy { line, yaw, pitch }) => {
                assert_eq!((line, yaw, pitch), (1, -22.5, 7.0));
            }
            other => panic!("expected taxonomy error, got {other:?}"),
        }
        assert_eq!(parse(&text, ManifestMode::Lax).unwrap().len(), 1);
    }

    #[test]
    fn malformed_rows_name_line_and_field() {
        let bad = ROW.replace("\"smile\"", "\"grin\"");
        let text = format!("{ROW}\n{bad}\n");
        let err = parse(&text, ManifestMode::Lax).unwrap_err();
        assert!(
            matches!(&err, Error::Manifest { line: 2, field, .. } if field == "attribute"),
            "{err}"
        );

        let bad = ROW.replace("[9,10]", "[9]");
        let err = parse(&bad, ManifestMode::Lax).unwrap_err();
        assert!(matches!(&err, Error::Manifest { field, .. } if field == "landmarks"));

        let bad = ROW.replace("\"subject_id\":3,", "");
        let err = parse(&bad, ManifestMode::Lax).unwrap_err();
        assert!(err.to_string().contains("subject_id"));

        let err = parse("{not json", ManifestMode::Lax).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 1, .. }));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = parse(ROW, ManifestMode::Strict).unwrap();
        records[0].mask_ref = Some("m.png".into());
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &records).unwrap();
        assert_eq!(load_manifest(&path, ManifestMode::Strict).unwrap(), records);
    }
}
