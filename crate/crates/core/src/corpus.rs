//! Corpus loading and deterministic dataset splitting.
//!
//! Corpus files are UTF-8 lines `id<TAB>labels<TAB>text` where `labels` is
//! a comma-separated, possibly empty list. Splitting shuffles under a seed
//! and slices contiguously, so a fixed seed always reproduces the same
//! train/validation/test division.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use crate::token::Tokenizer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub gold_labels: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `id<TAB>labels<TAB>text`")]
    BadLine { line: usize },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: case tokenizes to nothing")]
    EmptyCase { line: usize },
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    tokenizer: &Tokenizer,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    parse_corpus_text(&fs::read_to_string(path)?, tokenizer)
}

pub fn parse_corpus_text(
    content: &str,
    tokenizer: &Tokenizer,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut records: Vec<CorpusRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (id, labels, text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(labels), Some(text)) => (id, labels, text),
            _ => return Err(CorpusError::BadLine { line: line_no }),
        };
        if !seen.insert(id.to_string()) {
            return Err(CorpusError::DuplicateId {
                id: id.to_string(),
                line: line_no,
            });
        }
        let gold_labels: BTreeSet<String> = labels
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        let tokens = tokenizer.tokenize(text);
        if tokens.is_empty() {
            return Err(CorpusError::EmptyCase { line: line_no });
        }
        records.push(CorpusRecord {
            id: id.to_string(),
            text: text.to_string(),
            tokens,
            gold_labels,
        });
    }
    Ok(records)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("split ratios {0:?} do not sum to 1")]
    RatioSum((f64, f64, f64)),
}

/// Train, validation and test slices.
pub type SplitSlices<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Deterministic shuffle under the seed, then contiguous slices sized by
/// floor; remainder rows go to the training slice. Works for any record
/// type, so rule files split with the same mechanism.
pub fn split_corpus<T>(
    mut records: Vec<T>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSlices<T>, SplitError> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(SplitError::RatioSum(ratios));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n = records.len();
    let n_valid = (n as f64 * b).floor() as usize;
    let n_test = (n as f64 * c).floor() as usize;
    let n_train = n - n_valid - n_test;
    let mut rest = records.split_off(n_train);
    let test = rest.split_off(n_valid);
    Ok((records, rest, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::TokenizerMode;

    fn ws_tok() -> Tokenizer {
        Tokenizer::new(TokenizerMode::Whitespace)
    }

    #[test]
    fn parses_records_with_and_without_labels() {
        let records = parse_corpus_text("1\t\thello world\n2\tA,B\tx y\n", &ws_tok()).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records[0].gold_labels.is_empty());
        assert_eq!(records[0].tokens, vec!["hello", "world"]);
        assert_eq!(
            records[1].gold_labels,
            ["A".to_string(), "B".to_string()].into()
        );
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = parse_corpus_text("1\t\ta\n1\t\tb\n", &ws_tok()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn rejects_short_lines_and_empty_cases() {
        assert!(matches!(
            parse_corpus_text("1\tonly-two-fields\n", &ws_tok()),
            Err(CorpusError::BadLine { line: 1 })
        ));
        assert!(matches!(
            parse_corpus_text("1\t\t   \n", &ws_tok()),
            Err(CorpusError::EmptyCase { line: 1 })
        ));
    }

    #[test]
    fn ten_records_split_eight_one_one() {
        let records: Vec<u32> = (0..10).collect();
        let (train, valid, test) = split_corpus(records, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((train.len(), valid.len(), test.len()), (8, 1, 1));
        let mut all: Vec<u32> = train.iter().chain(&valid).chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn everything_goes_to_train_under_unit_ratio() {
        let (train, valid, test) = split_corpus(vec![1, 2, 3], (1.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(train.len(), 3);
        assert!(valid.is_empty() && test.is_empty());
    }

    #[test]
    fn same_seed_reproduces_the_split() {
        let records: Vec<u32> = (0..50).collect();
        let first = split_corpus(records.clone(), (0.8, 0.1, 0.1), 41).unwrap();
        let second = split_corpus(records, (0.8, 0.1, 0.1), 41).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn remainder_rows_go_to_train() {
        let records: Vec<u32> = (0..7).collect();
        let (train, valid, test) = split_corpus(records, (0.5, 0.25, 0.25), 3).unwrap();
        // floors: valid 1, test 1, remainder to train.
        assert_eq!((train.len(), valid.len(), test.len()), (5, 1, 1));
    }

    #[test]
    fn bad_ratios_are_rejected() {
        assert!(matches!(
            split_corpus(vec![1], (0.5, 0.2, 0.2), 0),
            Err(SplitError::RatioSum(_))
        ));
        assert!(matches!(
            split_corpus(vec![1], (1.5, -0.25, -0.25), 0),
            Err(SplitError::RatioSum(_))
        ));
    }
}
