//! Versioned text record for model and generator parameters.
//!
//! ```text
//! fedshift-checkpoint 1
//! kind gnn
//! meta model gcn
//! meta hidden 16,16
//! tensor layer0.weight 8 16
//! <row 0 values, space separated>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! decode of an encode is bit-exact.

use std::fmt::Write;

use thiserror::Error;

use crate::autodiff::Matrix;

pub const MAGIC: &str = "fedshift-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("expected a {expected} checkpoint, found {found}")]
    Kind { expected: String, found: String },
    #[error("missing metadata key {0:?}")]
    MissingMeta(String),
    #[error("bad metadata {key:?}: {message}")]
    BadMeta { key: String, message: String },
    #[error("tensor {name:?}: {message}")]
    Tensor { name: String, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Matrix)>,
}

impl Record {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CheckpointError::MissingMeta(key.to_string()))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize, CheckpointError> {
        let raw = self.meta(key)?;
        raw.parse().map_err(|_| CheckpointError::BadMeta {
            key: key.into(),
            message: format!("expected an integer, found {raw:?}"),
        })
    }

    pub fn meta_list(&self, key: &str) -> Result<Vec<usize>, CheckpointError> {
        let raw = self.meta(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|p| {
                p.parse().map_err(|_| CheckpointError::BadMeta {
                    key: key.into(),
                    message: format!("bad list entry {p:?}"),
                })
            })
            .collect()
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind != kind {
            return Err(CheckpointError::Kind {
                expected: kind.into(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "kind {}", self.kind);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, m) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn decode(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let syntax = |line: usize, message: String| CheckpointError::Syntax { line, message };

        let (ln, header) = lines.next().ok_or_else(|| syntax(1, "empty input".into()))?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| syntax(ln, format!("expected {MAGIC:?} header")))?;
        let version: u32 = version
            .parse()
            .map_err(|_| syntax(ln, format!("bad version {version:?}")))?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }

        let (ln, kind_line) = lines.next().ok_or_else(|| syntax(2, "missing kind".into()))?;
        let kind = kind_line
            .strip_prefix("kind ")
            .ok_or_else(|| syntax(ln, "expected `kind <name>`".into()))?
            .trim()
            .to_string();

        let mut record = Record::new(kind);
        loop {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| syntax(0, "unexpected end of input, missing `end`".into()))?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                record.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(syntax(ln, "expected `tensor <name> <rows> <cols>`".into()));
                };
                let rows: usize = rows.parse().map_err(|_| syntax(ln, format!("bad rows {rows:?}")))?;
                let cols: usize = cols.parse().map_err(|_| syntax(ln, format!("bad cols {cols:?}")))?;
                if rows.checked_mul(cols).is_none_or(|n| n > 1 << 24) {
                    return Err(syntax(ln, format!("tensor {rows}x{cols} too large")));
                }
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (ln, row) = lines
                        .next()
                        .ok_or_else(|| syntax(ln, format!("tensor {name} truncated")))?;
                    let before = data.len();
                    for field in row.split_whitespace() {
                        let v: f64 = field
                            .parse()
                            .ok()
                            .filter(|v: &f64| v.is_finite())
                            .ok_or_else(|| syntax(ln, format!("bad value {field:?}")))?;
                        data.push(v);
                    }
                    if data.len() - before != cols {
                        return Err(syntax(ln, format!("expected {cols} values in row")));
                    }
                }
                let m = Matrix::new(rows, cols, data).map_err(|e| syntax(ln, e.to_string()))?;
                record.tensors.push((name.to_string(), m));
            } else {
                return Err(syntax(ln, format!("unexpected line {line:?}")));
            }
        }
        Ok(record)
    }

    /// Removes and returns the named tensor, checking its shape.
    pub fn take_tensor(
        &mut self,
        name: &str,
        shape: (usize, usize),
    ) -> Result<Matrix, CheckpointError> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| CheckpointError::Tensor {
                name: name.into(),
                message: "missing".into(),
            })?;
        let (_, m) = self.tensors.remove(pos);
        if m.shape() != shape {
            return Err(CheckpointError::Tensor {
                name: name.into(),
                message: format!("shape {:?}, expected {shape:?}", m.shape()),
            });
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_is_exact() {
        let mut r = Record::new("gnn");
        r.meta.push(("hidden".into(), "16,16".into()));
        r.tensors.push((
            "w".into(),
            Matrix::new(2, 2, vec![0.1, -1e-300, f64::MAX, 1.0 / 3.0]).unwrap(),
        ));
        let text = r.encode();
        assert!(text.starts_with("fedshift-checkpoint 1\nkind gnn\n"));
        assert_eq!(Record::decode(&text).unwrap(), r);
        assert_eq!(Record::decode(&text).unwrap().meta_list("hidden").unwrap(), vec![16, 16]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Record::decode("").is_err());
        assert!(matches!(
            Record::decode("fedshift-checkpoint 9\nkind x\nend\n"),
            Err(CheckpointError::Version(9))
        ));
        assert!(Record::decode("fedshift-checkpoint 1\nkind x\ntensor a 1 2\n1\nend\n").is_err());
        assert!(Record::decode("fedshift-checkpoint 1\nkind x\n").is_err());
        assert!(Record::decode("fedshift-checkpoint 1\nkind x\ntensor a 99999999 99999999\nend\n").is_err());
        assert!(Record::decode("fedshift-checkpoint 1\nkind x\ntensor a 1 1\nNaN\nend\n").is_err());
        assert!(Record::decode("fedshift-checkpoint 1\nkind x\ntensor a 1 1\n1e400\nend\n").is_err());
    }

    #[test]
    fn trailing_carriage_returns_round_trip() {
        let r = Record::decode("fedshift-checkpoint 1\r\nkind x\r\nmeta k v\r\r\nend\r\n").unwrap();
        assert_eq!(r.meta, vec![("k".to_string(), "v".to_string())]);
        assert_eq!(Record::decode(&r.encode()).unwrap(), r);
    }
}
