//! JSONL datasets: one object per line with `id`, `mwp`,
//! `solution_expression`, `grade`, `question_type`, `gold_vl` and `pred_vl`.
//!
//! Rows keep every field they were read with, in order, so rewriting a file
//! only changes what was touched.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use m2v_core::metrics::DatasetItem;
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: invalid JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// 1-based line in the source file.
    pub line: usize,
    pub fields: Map<String, Value>,
}

impl Row {
    fn schema(&self, message: impl Into<String>) -> DatasetError {
        DatasetError::Schema {
            line: self.line,
            message: message.into(),
        }
    }

    /// Strings as-is, numbers in their JSON spelling.
    pub fn id(&self) -> Result<String, DatasetError> {
        match self.fields.get("id") {
            Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(self.schema("`id` must be a non-empty string or a number")),
            None => Err(self.schema("missing `id`")),
        }
    }

    /// `Ok(None)` for an absent or null field.
    pub fn text(&self, key: &str) -> Result<Option<&str>, DatasetError> {
        match self.fields.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.schema(format!("`{key}` must be a string or null"))),
        }
    }

    /// Like [`Row::text`] but numbers are accepted too. Absent reads as "".
    pub fn label(&self, key: &str) -> Result<String, DatasetError> {
        match self.fields.get(key) {
            None | Some(Value::Null) => Ok(String::new()),
            Some(Value::String(s)) => Ok(s.trim().to_string()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(self.schema(format!("`{key}` must be a string or a number"))),
        }
    }

    /// A non-empty `pred_vl` string.
    pub fn is_filled(&self) -> bool {
        matches!(self.fields.get("pred_vl"), Some(Value::String(s)) if !s.trim().is_empty())
    }

    /// `pred_vl` must be present (null allowed) and `gold_vl` must be a string.
    pub fn to_eval_item(&self) -> Result<DatasetItem, DatasetError> {
        let id = self.id()?;
        let gold_vl = self.text("gold_vl")?.ok_or_else(|| self.schema("missing `gold_vl`"))?.to_string();
        if !self.fields.contains_key("pred_vl") {
            return Err(self.schema("missing `pred_vl` column"));
        }
        let pred_vl = self.text("pred_vl")?.map(str::to_string);
        Ok(DatasetItem {
            id,
            pred_vl,
            gold_vl,
            grade: self.label("grade")?,
            question_type: self.label("question_type")?,
        })
    }
}

/// Blank lines are skipped but still counted.
pub fn parse_jsonl(text: &str) -> Result<Vec<Row>, DatasetError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(raw).map_err(|source| DatasetError::Json { line, source })? {
            Value::Object(fields) => rows.push(Row { line, fields }),
            _ => {
                return Err(DatasetError::Schema {
                    line,
                    message: "each line must be a JSON object".to_string(),
                })
            }
        }
    }
    Ok(rows)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Row>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_jsonl(&text)
}

pub fn to_jsonl(rows: &[Row]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&Value::Object(row.fields.clone()).to_string());
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the same directory, then renames it
/// over `path`, so readers never see a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_lines_keep_numbering() {
        let rows = parse_jsonl("{\"id\": 1}\n\n{\"id\": \"b\"}\n").unwrap();
        assert_eq!(rows.iter().map(|r| r.line).collect::<Vec<_>>(), [1, 3]);
        assert_eq!(rows[0].id().unwrap(), "1");
        assert_eq!(rows[1].id().unwrap(), "b");
    }

    #[test]
    fn bad_json_names_the_line() {
        let err = parse_jsonl("{}\n{oops\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        assert!(parse_jsonl("[1]").unwrap_err().to_string().contains("JSON object"));
    }

    #[test]
    fn eval_item_requires_pred_column() {
        let rows = parse_jsonl(
            r#"{"id":"a","gold_vl":"g","pred_vl":null,"grade":3}
{"id":"b","gold_vl":"g"}"#,
        )
        .unwrap();
        let item = rows[0].to_eval_item().unwrap();
        assert_eq!((item.pred_vl, item.grade.as_str(), item.question_type.as_str()), (None, "3", ""));
        let err = rows[1].to_eval_item().unwrap_err();
        assert_eq!(err.to_string(), "line 2: missing `pred_vl` column");
    }

    #[test]
    fn rewrite_preserves_field_order() {
        let text = "{\"z\":1,\"id\":\"a\",\"pred_vl\":null}\n";
        let rows = parse_jsonl(text).unwrap();
        assert_eq!(to_jsonl(&rows), text);
        assert!(!rows[0].is_filled());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_atomic(&path, b"one\n").unwrap();
        write_atomic(&path, b"two\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
