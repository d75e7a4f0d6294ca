//! Per-token label sequences and the exact semantics of the six actions.
//!
//! A [`LabelSeq`] is one value per case token plus the list of match
//! instances ([`Span`]s) that produced those values. Find steps emit the
//! instances directly (full occurrences for exact matching, one-token
//! instances for thresholded soft labels); the combination actions consume
//! instances and emit binary endpoint marks. Carrying instances through the
//! combinators is what keeps an ordered chain like `a{,1}b{,0}c` faithful
//! to its token-level regex reading: the distance check for the next link
//! is always measured from where the previous instance actually ends, not
//! from whichever earlier token happens to be marked.

use std::collections::BTreeSet;

use thiserror::Error;

/// Raising the binarized output past this keeps "no evidence anywhere"
/// (sigmoid of a zero score is exactly 0.5) from counting as a match.
pub const OUTPUT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// One match instance, inclusive token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn unit(pos: usize) -> Self {
        Span { start: pos, end: pos }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSeq {
    values: Vec<f64>,
    spans: Vec<Span>,
    polarity: Polarity,
    binary: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("label sequences have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("label sequences have different polarities")]
    PolarityMismatch,
}

impl LabelSeq {
    pub fn zeros(len: usize, polarity: Polarity) -> Self {
        LabelSeq {
            values: vec![0.0; len],
            spans: Vec::new(),
            polarity,
            binary: true,
        }
    }

    /// Binary sequence from 0/1 marks; every marked position becomes a
    /// one-token instance.
    pub fn from_marks(marks: &[u8], polarity: Polarity) -> Self {
        let values = marks.iter().map(|&m| if m != 0 { 1.0 } else { 0.0 }).collect();
        let spans = marks
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0)
            .map(|(i, _)| Span::unit(i))
            .collect();
        LabelSeq {
            values,
            spans,
            polarity,
            binary: true,
        }
    }

    /// Binary sequence from match instances; values mark every token inside
    /// an instance.
    pub fn from_spans(len: usize, spans: Vec<Span>, polarity: Polarity) -> Self {
        let mut values = vec![0.0; len];
        let mut set: BTreeSet<Span> = BTreeSet::new();
        for span in spans {
            debug_assert!(span.end < len);
            for v in &mut values[span.start..=span.end] {
                *v = 1.0;
            }
            set.insert(span);
        }
        LabelSeq {
            values,
            spans: set.into_iter().collect(),
            polarity,
            binary: true,
        }
    }

    /// Soft sequence: values keep the probabilities, instances are the
    /// positions at or above the decision threshold.
    pub fn soft(probs: Vec<f64>, theta: f64, polarity: Polarity) -> Self {
        let spans = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= theta)
            .map(|(i, _)| Span::unit(i))
            .collect();
        LabelSeq {
            values: probs,
            spans,
            polarity,
            binary: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    /// True if any instance survived thresholding/combination.
    pub fn has_evidence(&self) -> bool {
        !self.spans.is_empty()
    }

    /// 0/1 decision marks: the values themselves for binary sequences, the
    /// thresholded positions for soft ones.
    pub fn marks(&self) -> Vec<f64> {
        if self.binary {
            self.values.clone()
        } else {
            let mut marks = vec![0.0; self.values.len()];
            for span in &self.spans {
                marks[span.start] = 1.0;
            }
            marks
        }
    }

    fn check_len(&self, other: &LabelSeq) -> Result<(), LabelError> {
        if self.len() != other.len() {
            return Err(LabelError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    fn check_polarity(&self, other: &LabelSeq) -> Result<(), LabelError> {
        if self.polarity != other.polarity {
            return Err(LabelError::PolarityMismatch);
        }
        Ok(())
    }
}

/// Label every token lying inside an occurrence of `pattern` as a
/// contiguous subsequence of `case`.
pub fn find_exact(case: &[String], pattern: &[String]) -> LabelSeq {
    let n = case.len();
    let m = pattern.len();
    let mut spans = Vec::new();
    if m >= 1 && m <= n {
        for start in 0..=(n - m) {
            if case[start..start + m] == pattern[..] {
                spans.push(Span::new(start, start + m - 1));
            }
        }
    }
    LabelSeq::from_spans(n, spans, Polarity::Positive)
}

/// Ordered combination: instance of `a`, then instance of `b` strictly
/// after it, with at most `max_gap` tokens in between (`-1` = unbounded).
/// The result marks the paired endpoints and records the merged instances.
pub fn and_ordered(a: &LabelSeq, b: &LabelSeq, max_gap: i32) -> Result<LabelSeq, LabelError> {
    a.check_len(b)?;
    a.check_polarity(b)?;
    let mut values = vec![0.0; a.len()];
    let mut merged: BTreeSet<Span> = BTreeSet::new();
    for sa in a.spans() {
        for sb in b.spans() {
            if sb.start > sa.end {
                let gap = sb.start - sa.end - 1;
                if max_gap < 0 || gap <= max_gap as usize {
                    values[sa.end] = 1.0;
                    values[sb.start] = 1.0;
                    merged.insert(Span::new(sa.start, sb.end));
                }
            }
        }
    }
    Ok(LabelSeq {
        values,
        spans: merged.into_iter().collect(),
        polarity: a.polarity(),
        binary: true,
    })
}

/// Both sides must be found somewhere; marks the union when they are,
/// all-zeros otherwise.
pub fn and_unordered(a: &LabelSeq, b: &LabelSeq) -> Result<LabelSeq, LabelError> {
    a.check_len(b)?;
    a.check_polarity(b)?;
    if !a.has_evidence() || !b.has_evidence() {
        return Ok(LabelSeq::zeros(a.len(), a.polarity()));
    }
    union(a, b)
}

/// Positive evidence survives only if no negative token fired.
pub fn guard(pos: &LabelSeq, neg: &LabelSeq) -> Result<LabelSeq, LabelError> {
    pos.check_len(neg)?;
    if pos.polarity() != Polarity::Positive || neg.polarity() != Polarity::Negative {
        return Err(LabelError::PolarityMismatch);
    }
    if neg.has_evidence() {
        Ok(LabelSeq::zeros(pos.len(), Polarity::Positive))
    } else {
        Ok(pos.clone())
    }
}

/// Union of evidence from either operand.
pub fn or_combine(a: &LabelSeq, b: &LabelSeq) -> Result<LabelSeq, LabelError> {
    a.check_len(b)?;
    a.check_polarity(b)?;
    union(a, b)
}

fn union(a: &LabelSeq, b: &LabelSeq) -> Result<LabelSeq, LabelError> {
    let ma = a.marks();
    let mb = b.marks();
    let values = ma
        .iter()
        .zip(mb.iter())
        .map(|(x, y)| (x + y).min(1.0))
        .collect();
    let mut spans: BTreeSet<Span> = a.spans().iter().copied().collect();
    spans.extend(b.spans().iter().copied());
    Ok(LabelSeq {
        values,
        spans: spans.into_iter().collect(),
        polarity: a.polarity(),
        binary: true,
    })
}

/// Final decision over a root sequence: any mark for binary sequences, max
/// probability strictly above [`OUTPUT_THRESHOLD`] for soft ones.
pub fn output_max(a: &LabelSeq) -> bool {
    if a.is_binary() {
        a.values().iter().any(|&v| v >= 1.0)
    } else {
        a.values().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) > OUTPUT_THRESHOLD
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn find_marks_every_token_of_every_occurrence() {
        let case = toks("The <e1> island </e1> was farmed for <e2>");
        let got = find_exact(&case, &toks("farmed for"));
        assert_eq!(
            got.values(),
            &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0]
        );
        assert_eq!(got.spans(), &[Span::new(5, 6)]);
    }

    #[test]
    fn find_absent_pattern_is_all_zeros() {
        let case = toks("a b c");
        let got = find_exact(&case, &toks("z"));
        assert_eq!(got.values(), &[0.0, 0.0, 0.0]);
        assert!(!got.has_evidence());
    }

    #[test]
    fn find_marks_repeated_occurrences() {
        let case = toks("a a");
        let got = find_exact(&case, &toks("a"));
        assert_eq!(got.values(), &[1.0, 1.0]);
    }

    #[test]
    fn and_ordered_merges_the_left_branch_like_the_worked_example() {
        // island at 2, </e1> at 3 on an 8-token case; merged output marks both.
        let case = toks("The <e1> island </e1> was farmed for <e2>");
        let island = find_exact(&case, &toks("island"));
        let e1 = find_exact(&case, &toks("</e1>"));
        let merged = and_ordered(&island, &e1, -1).unwrap();
        assert_eq!(
            merged.values(),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(merged.spans(), &[Span::new(2, 3)]);
    }

    #[test]
    fn and_ordered_rejects_pairs_past_the_distance() {
        let a = LabelSeq::from_marks(&[1, 0, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 0, 1], Polarity::Positive);
        let got = and_ordered(&a, &b, 0).unwrap();
        assert_eq!(got.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn and_ordered_marks_both_endpoints_of_an_adjacent_pair() {
        let a = LabelSeq::from_marks(&[1, 0, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 1, 0], Polarity::Positive);
        let got = and_ordered(&a, &b, 0).unwrap();
        assert_eq!(got.values(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn and_ordered_distance_counts_tokens_strictly_between() {
        let a = LabelSeq::from_marks(&[1, 0, 0, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 0, 1, 0], Polarity::Positive);
        assert_eq!(and_ordered(&a, &b, 0).unwrap().values(), &[0.0; 4]);
        let got = and_ordered(&a, &b, 1).unwrap();
        assert_eq!(got.values(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn and_ordered_requires_matching_shapes() {
        let a = LabelSeq::from_marks(&[1, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 1, 0], Polarity::Positive);
        assert_eq!(
            and_ordered(&a, &b, -1),
            Err(LabelError::LengthMismatch { left: 2, right: 3 })
        );
        let c = LabelSeq::from_marks(&[0, 1], Polarity::Negative);
        assert_eq!(and_ordered(&a, &c, -1), Err(LabelError::PolarityMismatch));
    }

    #[test]
    fn and_unordered_marks_union_when_both_found() {
        let a = LabelSeq::from_marks(&[1, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 1], Polarity::Positive);
        assert_eq!(and_unordered(&a, &b).unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn and_unordered_annihilates_when_one_side_is_empty() {
        let a = LabelSeq::from_marks(&[1, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 0], Polarity::Positive);
        assert_eq!(and_unordered(&a, &b).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn and_unordered_clamps_at_one() {
        let a = LabelSeq::from_marks(&[1, 1], Polarity::Positive);
        let b = LabelSeq::from_marks(&[1, 0], Polarity::Positive);
        assert_eq!(and_unordered(&a, &b).unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn and_unordered_is_commutative_on_binary_sequences() {
        let mut rng = 0x2545f491u64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            rng
        };
        for _ in 0..200 {
            let len = (next() % 12 + 1) as usize;
            let a: Vec<u8> = (0..len).map(|_| (next() % 2) as u8).collect();
            let b: Vec<u8> = (0..len).map(|_| (next() % 2) as u8).collect();
            let sa = LabelSeq::from_marks(&a, Polarity::Positive);
            let sb = LabelSeq::from_marks(&b, Polarity::Positive);
            assert_eq!(
                and_unordered(&sa, &sb).unwrap(),
                and_unordered(&sb, &sa).unwrap()
            );
        }
    }

    #[test]
    fn guard_passes_and_annihilates() {
        let pos = LabelSeq::from_marks(&[1, 0], Polarity::Positive);
        let neg_quiet = LabelSeq::from_marks(&[0, 0], Polarity::Negative);
        let neg_fired = LabelSeq::from_marks(&[0, 1], Polarity::Negative);
        assert_eq!(guard(&pos, &neg_quiet).unwrap().values(), &[1.0, 0.0]);
        assert_eq!(guard(&pos, &neg_fired).unwrap().values(), &[0.0, 0.0]);
        let empty = LabelSeq::from_marks(&[0, 0], Polarity::Positive);
        assert_eq!(guard(&empty, &neg_quiet).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn guard_with_quiet_negative_is_identity() {
        let pos = LabelSeq::soft(vec![0.9, 0.2, 0.7], 0.6, Polarity::Positive);
        let neg = LabelSeq::zeros(3, Polarity::Negative);
        assert_eq!(guard(&pos, &neg).unwrap(), pos);
    }

    #[test]
    fn or_combine_unions_marks() {
        let a = LabelSeq::from_marks(&[1, 0], Polarity::Positive);
        let b = LabelSeq::from_marks(&[0, 1], Polarity::Positive);
        assert_eq!(or_combine(&a, &b).unwrap().values(), &[1.0, 1.0]);
        let z = LabelSeq::from_marks(&[0, 0], Polarity::Positive);
        assert_eq!(or_combine(&z, &z).unwrap().values(), &[0.0, 0.0]);
        let c = LabelSeq::from_marks(&[1, 1], Polarity::Positive);
        assert_eq!(or_combine(&c, &a).unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn or_combine_is_commutative_associative_idempotent() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let len = (next() % 10 + 1) as usize;
            let rand_seq = |next: &mut dyn FnMut() -> u64| {
                let marks: Vec<u8> = (0..len).map(|_| (next() % 2) as u8).collect();
                LabelSeq::from_marks(&marks, Polarity::Positive)
            };
            let a = rand_seq(&mut next);
            let b = rand_seq(&mut next);
            let c = rand_seq(&mut next);
            assert_eq!(or_combine(&a, &b).unwrap(), or_combine(&b, &a).unwrap());
            assert_eq!(
                or_combine(&or_combine(&a, &b).unwrap(), &c).unwrap(),
                or_combine(&a, &or_combine(&b, &c).unwrap()).unwrap()
            );
            assert_eq!(or_combine(&a, &a).unwrap(), a);
        }
    }

    #[test]
    fn and_ordered_is_monotone_in_distance() {
        let mut state = 0xdeadbeefu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let len = (next() % 12 + 2) as usize;
            let a: Vec<u8> = (0..len).map(|_| (next() % 2) as u8).collect();
            let b: Vec<u8> = (0..len).map(|_| (next() % 2) as u8).collect();
            let sa = LabelSeq::from_marks(&a, Polarity::Positive);
            let sb = LabelSeq::from_marks(&b, Polarity::Positive);
            let unbounded = and_ordered(&sa, &sb, -1).unwrap();
            for d in 0..4 {
                let bounded = and_ordered(&sa, &sb, d).unwrap();
                for (u, v) in unbounded.values().iter().zip(bounded.values()) {
                    assert!(u >= v, "unbounded must mark a superset");
                }
            }
        }
    }

    #[test]
    fn output_max_on_binary_and_soft() {
        assert!(output_max(&LabelSeq::from_marks(&[0, 1, 0], Polarity::Positive)));
        assert!(!output_max(&LabelSeq::from_marks(&[0, 0, 0], Polarity::Positive)));
        assert!(!output_max(&LabelSeq::soft(
            vec![0.2, 0.4],
            0.6,
            Polarity::Positive
        )));
        // Exactly 0.5 everywhere means "no evidence", not a match.
        assert!(!output_max(&LabelSeq::soft(
            vec![0.5, 0.5],
            0.6,
            Polarity::Positive
        )));
        assert!(output_max(&LabelSeq::soft(
            vec![0.2, 0.731],
            0.6,
            Polarity::Positive
        )));
    }

    #[test]
    fn single_token_ordered_chain_agrees_with_regex_reading() {
        // output_max(and_ordered(find(p), find(q), -1)) == "p then q later".
        let mut state = 0xabcdef12u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let vocab = ["a", "b", "c", "d"];
        for _ in 0..300 {
            let len = (next() % 10 + 1) as usize;
            let case: Vec<String> = (0..len)
                .map(|_| vocab[(next() % 4) as usize].to_string())
                .collect();
            let p = vec![vocab[(next() % 4) as usize].to_string()];
            let q = vec![vocab[(next() % 4) as usize].to_string()];
            let got = output_max(
                &and_ordered(&find_exact(&case, &p), &find_exact(&case, &q), -1).unwrap(),
            );
            let expected = case
                .iter()
                .enumerate()
                .any(|(i, t)| *t == p[0] && case[i + 1..].contains(&q[0]));
            assert_eq!(got, expected, "case {case:?} p {p:?} q {q:?}");
        }
    }
}
