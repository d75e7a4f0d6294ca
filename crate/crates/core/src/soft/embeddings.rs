//! Word-vector table in the standard text format: a `count dimension`
//! header, then one `token v1 v2 ...` line per entry. The table is
//! immutable after load; vectors are never trained here.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error reading embeddings: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header `{0}` (expected `count dimension`)")]
    BadHeader(String),
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding table is empty")]
    EmptyTable,
}

impl EmbeddingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(content: &str) -> Result<Self, EmbeddingError> {
        let mut lines = content.lines().enumerate();
        let (_, header) = lines.next().ok_or(EmbeddingError::EmptyTable)?;
        let mut parts = header.split_whitespace();
        let _count: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| EmbeddingError::BadHeader(header.to_string()))?;
        let dim: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| EmbeddingError::BadHeader(header.to_string()))?;
        if parts.next().is_some() {
            return Err(EmbeddingError::BadHeader(header.to_string()));
        }

        let mut entries = BTreeMap::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line");
            let vector: Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
            let vector = vector.map_err(|_| EmbeddingError::DimensionMismatch {
                line: idx + 1,
                expected: dim,
                found: 0,
            })?;
            if vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: idx + 1,
                    expected: dim,
                    found: vector.len(),
                });
            }
            // Duplicate tokens keep the first occurrence.
            entries.entry(token.to_string()).or_insert(vector);
        }
        if entries.is_empty() {
            return Err(EmbeddingError::EmptyTable);
        }
        Ok(EmbeddingTable { dim, entries })
    }

    /// Build a table directly; every vector must share one dimension.
    pub fn from_entries<I, S>(entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for (line, (token, vector)) in entries.into_iter().enumerate() {
            let d = *dim.get_or_insert(vector.len());
            if vector.len() != d || d == 0 {
                return Err(EmbeddingError::DimensionMismatch {
                    line: line + 1,
                    expected: d,
                    found: vector.len(),
                });
            }
            map.entry(token.into()).or_insert(vector);
        }
        match dim {
            Some(dim) if !map.is_empty() => Ok(EmbeddingTable { dim, entries: map }),
            _ => Err(EmbeddingError::EmptyTable),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Mean of the member-token vectors; out-of-vocabulary tokens
    /// contribute the zero vector.
    pub fn encode(&self, gram: &[String]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if gram.is_empty() {
            return acc;
        }
        for token in gram {
            if let Some(v) = self.entries.get(token) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
        }
        let inv = 1.0 / gram.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn parses_minimal_file() {
        let table = EmbeddingTable::parse("2 3\na 1 0 0\nb 0 1 0").unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.dim(), 3);
        assert_eq!(table.get("a"), Some(&[1.0, 0.0, 0.0][..]));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = EmbeddingTable::parse("1 3\na 1 0").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn rejects_bad_header_and_empty_table() {
        assert!(matches!(
            EmbeddingTable::parse("three 3\n"),
            Err(EmbeddingError::BadHeader(_))
        ));
        assert!(matches!(
            EmbeddingTable::parse("0 3\n"),
            Err(EmbeddingError::EmptyTable)
        ));
    }

    #[test]
    fn duplicates_keep_first() {
        let table = EmbeddingTable::parse("2 2\na 1 0\na 0 1").unwrap();
        assert_eq!(table.get("a"), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn written_vectors_read_back_bit_exactly() {
        let mut text = String::from("10 4\n");
        let mut state = 0x1357_9bdfu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        let mut expected = Vec::new();
        for k in 0..10 {
            let v: Vec<f64> = (0..4).map(|_| next()).collect();
            text.push_str(&format!(
                "t{k} {}\n",
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
            expected.push(v);
        }
        let table = EmbeddingTable::parse(&text).unwrap();
        for (k, v) in expected.iter().enumerate() {
            assert_eq!(table.get(&format!("t{k}")), Some(v.as_slice()));
        }
    }

    #[test]
    fn encode_averages_and_zeroes_oov() {
        let table =
            EmbeddingTable::from_entries([("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]).unwrap();
        assert_eq!(table.encode(&toks("a")), vec![1.0, 0.0]);
        assert_eq!(table.encode(&toks("a b")), vec![0.5, 0.5]);
        assert_eq!(table.encode(&toks("oov")), vec![0.0, 0.0]);
        assert_eq!(table.encode(&toks("a oov")), vec![0.5, 0.0]);
    }
}
