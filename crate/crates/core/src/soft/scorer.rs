//! The bilinear context scorer behind soft Find.
//!
//! For a token at position `i`, multi-scale contexts (the token itself,
//! plus left/right windows of each configured size) are encoded and scored
//! against the encoded pattern as `v_c' W v_p`; the token's probability is
//! the sigmoid of the best context score and the 0/1 decision compares it
//! with the threshold.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;

use thiserror::Error;

use super::gaussian;
use crate::labels::{LabelSeq, Polarity};
use crate::soft::EmbeddingTable;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowTag {
    /// Window size 1: the token itself.
    Single,
    /// Tokens `i-w+1 ..= i`.
    Left(usize),
    /// Tokens `i ..= i+w-1`.
    Right(usize),
}

impl fmt::Display for WindowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowTag::Single => write!(f, "w1"),
            WindowTag::Left(w) => write!(f, "w{w}l"),
            WindowTag::Right(w) => write!(f, "w{w}r"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub window: WindowTag,
    pub gram: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSet {
    pub position: usize,
    pub contexts: Vec<Context>,
}

/// Contexts for one position; windows that would cross a sequence boundary
/// are omitted. Window size 1 always survives.
pub fn build_contexts(case: &[String], position: usize, windows: &[usize]) -> ContextSet {
    let mut contexts = Vec::new();
    for &w in windows {
        if w <= 1 {
            contexts.push(Context {
                window: WindowTag::Single,
                gram: vec![case[position].clone()],
            });
            continue;
        }
        if position + 1 >= w {
            contexts.push(Context {
                window: WindowTag::Left(w),
                gram: case[position + 1 - w..=position].to_vec(),
            });
        }
        if position + w <= case.len() {
            contexts.push(Context {
                window: WindowTag::Right(w),
                gram: case[position..position + w].to_vec(),
            });
        }
    }
    ContextSet { position, contexts }
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("vector of length {found} does not fit a {dim}x{dim} matrix")]
    ShapeMismatch { dim: usize, found: usize },
    #[error("find pattern is empty")]
    EmptyPattern,
    #[error("io error on scorer checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad scorer checkpoint: {0}")]
    BadCheckpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearScorer {
    dim: usize,
    w: Vec<f64>,
    pub theta: f64,
    pub windows: Vec<usize>,
}

impl BilinearScorer {
    pub fn identity(dim: usize, theta: f64, windows: Vec<usize>) -> Self {
        let mut w = vec![0.0; dim * dim];
        for k in 0..dim {
            w[k * dim + k] = 1.0;
        }
        BilinearScorer {
            dim,
            w,
            theta,
            windows,
        }
    }

    /// Identity plus Gaussian noise of the given standard deviation; the
    /// default initialization starts near the exact-match regime.
    pub fn noisy_identity(
        dim: usize,
        theta: f64,
        windows: Vec<usize>,
        sigma: f64,
        rng: &mut StdRng,
    ) -> Self {
        let mut scorer = Self::identity(dim, theta, windows);
        for v in &mut scorer.w {
            *v += sigma * gaussian(rng);
        }
        scorer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// The bilinear form `v_c' W v_p`.
    pub fn score(&self, v_c: &[f64], v_p: &[f64]) -> Result<f64, ScorerError> {
        if v_c.len() != self.dim {
            return Err(ScorerError::ShapeMismatch {
                dim: self.dim,
                found: v_c.len(),
            });
        }
        if v_p.len() != self.dim {
            return Err(ScorerError::ShapeMismatch {
                dim: self.dim,
                found: v_p.len(),
            });
        }
        let mut total = 0.0;
        for (i, &ci) in v_c.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let row = &self.w[i * self.dim..(i + 1) * self.dim];
            let mut dot = 0.0;
            for (wij, pj) in row.iter().zip(v_p) {
                dot += wij * pj;
            }
            total += ci * dot;
        }
        Ok(total)
    }

    /// Probabilities plus, for every position, the encoded context that won
    /// the max (ties go to the lowest context index). Shared by labeling
    /// and the gradient path.
    pub(crate) fn forward(
        &self,
        case: &[String],
        pattern: &[String],
        table: &EmbeddingTable,
    ) -> Result<ScorerForward, ScorerError> {
        if pattern.is_empty() {
            return Err(ScorerError::EmptyPattern);
        }
        let pattern_vec = table.encode(pattern);
        let mut probs = Vec::with_capacity(case.len());
        let mut best = Vec::with_capacity(case.len());
        for i in 0..case.len() {
            let set = build_contexts(case, i, &self.windows);
            let mut best_score = f64::NEG_INFINITY;
            let mut best_vec = vec![0.0; self.dim];
            for ctx in &set.contexts {
                let v = table.encode(&ctx.gram);
                let s = self.score(&v, &pattern_vec)?;
                if s > best_score {
                    best_score = s;
                    best_vec = v;
                }
            }
            if set.contexts.is_empty() {
                best_score = 0.0;
            }
            probs.push(sigmoid(best_score));
            best.push(best_vec);
        }
        Ok(ScorerForward {
            probs,
            best_contexts: best,
            pattern_vec,
        })
    }

    /// Soft Find: label every case token against the pattern. The returned
    /// sequence keeps the probabilities; decisions are `p >= theta`.
    pub fn label_tokens(
        &self,
        case: &[String],
        pattern: &[String],
        table: &EmbeddingTable,
        polarity: Polarity,
    ) -> Result<LabelSeq, ScorerError> {
        let fwd = self.forward(case, pattern, table)?;
        Ok(LabelSeq::soft(fwd.probs, self.theta, polarity))
    }

    /// Checkpoint: `dim theta w1,w2,...` header, then W row-major, one row
    /// per line, in shortest round-trip decimal form.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        let mut out = String::new();
        let windows = self
            .windows
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!("{} {} {}\n", self.dim, self.theta, windows));
        for row in self.w.chunks(self.dim) {
            let line = row
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&line);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        let content = fs::read_to_string(path)?;
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| ScorerError::BadCheckpoint("empty file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(ScorerError::BadCheckpoint(format!(
                "bad header `{header}`"
            )));
        }
        let dim: usize = parts[0]
            .parse()
            .map_err(|_| ScorerError::BadCheckpoint(format!("bad dimension `{}`", parts[0])))?;
        let theta: f64 = parts[1]
            .parse()
            .map_err(|_| ScorerError::BadCheckpoint(format!("bad theta `{}`", parts[1])))?;
        let windows: Result<Vec<usize>, _> = parts[2].split(',').map(str::parse).collect();
        let windows =
            windows.map_err(|_| ScorerError::BadCheckpoint(format!("bad windows `{}`", parts[2])))?;
        let mut w = Vec::with_capacity(dim * dim);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split_whitespace() {
                w.push(field.parse::<f64>().map_err(|_| {
                    ScorerError::BadCheckpoint(format!("bad weight `{field}`"))
                })?);
            }
        }
        if w.len() != dim * dim {
            return Err(ScorerError::BadCheckpoint(format!(
                "expected {} weights, found {}",
                dim * dim,
                w.len()
            )));
        }
        Ok(BilinearScorer {
            dim,
            w,
            theta,
            windows,
        })
    }
}

pub(crate) struct ScorerForward {
    pub probs: Vec<f64>,
    pub best_contexts: Vec<Vec<f64>>,
    pub pattern_vec: Vec<f64>,
}

/// Find_Positive and Find_Negative scorers; separate by default, shared on
/// request.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSet {
    Separate {
        positive: BilinearScorer,
        negative: BilinearScorer,
    },
    Shared(BilinearScorer),
}

impl ScorerSet {
    pub fn positive(&self) -> &BilinearScorer {
        match self {
            ScorerSet::Separate { positive, .. } => positive,
            ScorerSet::Shared(s) => s,
        }
    }

    pub fn negative(&self) -> &BilinearScorer {
        match self {
            ScorerSet::Separate { negative, .. } => negative,
            ScorerSet::Shared(s) => s,
        }
    }
}
