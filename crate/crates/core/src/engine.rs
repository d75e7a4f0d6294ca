//! End-to-end rule compilation, corpus matching, multi-label
//! classification, micro-averaged metrics, and match explanation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::corpus::CorpusRecord;
use crate::dialect::{parse_rule, print_canonical, DialectError, RuleAst, RuleSource};
use crate::labels::{LabelSeq, Polarity};
use crate::layout::{
    execute, linearize, validate, ExecError, FindError, FindProvider, Instruction, LayoutConfig,
    LayoutError, RpnProgram,
};
use crate::soft::{EmbeddingTable, ScorerSet};
use crate::token::Tokenizer;

pub use crate::layout::{ExactMatcher, MatchResult};

/// A rule taken through parse -> linearize -> validate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    pub ast: RuleAst,
    pub program: RpnProgram,
}

impl CompiledRule {
    pub fn source(&self) -> &RuleSource {
        &self.ast.source
    }

    pub fn id(&self) -> &str {
        &self.ast.source.id
    }

    pub fn label(&self) -> &str {
        &self.ast.source.label
    }
}

#[derive(Debug, Error)]
#[error("rule {rule_id}: {kind}")]
pub struct CompileError {
    pub rule_id: String,
    pub kind: CompileErrorKind,
}

#[derive(Debug, Error)]
pub enum CompileErrorKind {
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

pub fn compile_rule(
    src: &RuleSource,
    tokenizer: &Tokenizer,
    cfg: &LayoutConfig,
) -> Result<CompiledRule, CompileError> {
    let wrap = |kind: CompileErrorKind| CompileError {
        rule_id: src.id.clone(),
        kind,
    };
    let ast = parse_rule(src, tokenizer).map_err(|e| wrap(e.into()))?;
    let program = linearize(&ast, cfg);
    validate(&program).map_err(|e| wrap(e.into()))?;
    Ok(CompiledRule { ast, program })
}

pub fn compile_ruleset(
    sources: &[RuleSource],
    tokenizer: &Tokenizer,
    cfg: &LayoutConfig,
) -> Result<Vec<CompiledRule>, CompileError> {
    sources
        .iter()
        .map(|src| compile_rule(src, tokenizer, cfg))
        .collect()
}

/// Find provider backed by the bilinear scorer pair.
pub struct SoftMatcher<'a> {
    pub table: &'a EmbeddingTable,
    pub scorers: &'a ScorerSet,
}

impl FindProvider for SoftMatcher<'_> {
    fn find(
        &self,
        case: &[String],
        pattern: &[String],
        polarity: Polarity,
    ) -> Result<LabelSeq, FindError> {
        let scorer = match polarity {
            Polarity::Positive => self.scorers.positive(),
            Polarity::Negative => self.scorers.negative(),
        };
        scorer
            .label_tokens(case, pattern, self.table, polarity)
            .map_err(|e| FindError::Matcher(e.to_string()))
    }
}

pub fn match_case(
    rule: &CompiledRule,
    case: &[String],
    matcher: &dyn FindProvider,
) -> Result<MatchResult, ExecError> {
    execute(&rule.program, case, matcher)
}

/// The set of labels whose rules match the case. All rules run; multiple
/// rules with one label contribute it once.
pub fn classify(
    rules: &[CompiledRule],
    case: &[String],
    matcher: &dyn FindProvider,
) -> Result<BTreeSet<String>, ExecError> {
    let mut labels = BTreeSet::new();
    for rule in rules {
        if match_case(rule, case, matcher)?.matched {
            labels.insert(rule.label().to_string());
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    pub false_neg: u64,
}

/// Micro-averaged precision/recall/F1 over (case, label) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: BTreeMap<String, LabelCounts>,
    pub case_count: usize,
}

impl EvalReport {
    pub fn from_counts(per_label: BTreeMap<String, LabelCounts>, case_count: usize) -> Self {
        let totals = per_label
            .values()
            .fold(LabelCounts::default(), |acc, c| LabelCounts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                false_neg: acc.false_neg + c.false_neg,
            });
        let precision = if totals.tp + totals.fp == 0 {
            1.0
        } else {
            totals.tp as f64 / (totals.tp + totals.fp) as f64
        };
        let recall = if totals.tp + totals.false_neg == 0 {
            1.0
        } else {
            totals.tp as f64 / (totals.tp + totals.false_neg) as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            precision,
            recall,
            f1,
            per_label,
            case_count,
        }
    }

    pub fn totals(&self) -> LabelCounts {
        self.per_label
            .values()
            .fold(LabelCounts::default(), |acc, c| LabelCounts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                false_neg: acc.false_neg + c.false_neg,
            })
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8}\n",
            "label", "TP", "FP", "FN"
        ));
        for (label, c) in &self.per_label {
            out.push_str(&format!(
                "{:<24} {:>8} {:>8} {:>8}\n",
                label, c.tp, c.fp, c.false_neg
            ));
        }
        let t = self.totals();
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8}\n",
            "TOTAL", t.tp, t.fp, t.false_neg
        ));
        out.push_str(&format!(
            "cases: {}  precision: {:.4}  recall: {:.4}  f1: {:.4}\n",
            self.case_count, self.precision, self.recall, self.f1
        ));
        out
    }

    /// Machine-readable lines `label,TP,FP,FN` plus a summary row.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("label,TP,FP,FN\n");
        for (label, c) in &self.per_label {
            out.push_str(&format!("{},{},{},{}\n", label, c.tp, c.fp, c.false_neg));
        }
        let t = self.totals();
        out.push_str(&format!("TOTAL,{},{},{}\n", t.tp, t.fp, t.false_neg));
        out
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Run every rule over every record and tally micro counts: a predicted
/// label that is gold is a TP, predicted-but-not-gold an FP, gold-but-not-
/// predicted an FN.
pub fn evaluate(
    rules: &[CompiledRule],
    corpus: &[CorpusRecord],
    matcher: &dyn FindProvider,
) -> Result<EvalReport, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut per_label: BTreeMap<String, LabelCounts> = BTreeMap::new();
    for record in corpus {
        let predicted = classify(rules, &record.tokens, matcher)?;
        for label in predicted.union(&record.gold_labels) {
            let counts = per_label.entry(label.clone()).or_default();
            match (predicted.contains(label), record.gold_labels.contains(label)) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.false_neg += 1,
                (false, false) => unreachable!("label comes from the union"),
            }
        }
    }
    Ok(EvalReport::from_counts(per_label, corpus.len()))
}

/// Render the per-instruction trace of one rule on one case.
pub fn explain(
    rule: &CompiledRule,
    case: &[String],
    matcher: &dyn FindProvider,
) -> Result<String, ExecError> {
    let result = match_case(rule, case, matcher)?;
    let mut out = String::new();
    out.push_str(&format!(
        "rule {} [{}] {}\n",
        rule.id(),
        rule.label(),
        print_canonical(&rule.ast)
    ));
    out.push_str(&format!("case: {}\n", case.join(" ")));
    // Replay the stack over the recorded outputs to annotate the guard.
    let mut stack: Vec<&LabelSeq> = Vec::new();
    for (k, step) in result.trace.iter().enumerate() {
        let mut note = String::new();
        match &step.instruction {
            Instruction::FindPositive(_) | Instruction::FindNegative(_) => {}
            Instruction::Output => {
                stack.pop();
            }
            instr => {
                let b = stack.pop().expect("trace from a validated program");
                let a = stack.pop().expect("trace from a validated program");
                if matches!(instr, Instruction::AndUnordered)
                    && a.polarity() != b.polarity()
                {
                    let (pos, neg) = if a.polarity() == Polarity::Positive {
                        (a, b)
                    } else {
                        (b, a)
                    };
                    note = if neg.has_evidence() {
                        if pos.has_evidence() {
                            "  (guard: negative evidence annihilates the match)".to_string()
                        } else {
                            "  (guard: negative evidence fired)".to_string()
                        }
                    } else {
                        "  (guard passed: no negative evidence)".to_string()
                    };
                }
            }
        }
        if !matches!(step.instruction, Instruction::Output) {
            stack.push(&step.output);
        }
        out.push_str(&format!(
            "{:>4}. {:<40} -> {}{}\n",
            k + 1,
            step.instruction.to_string(),
            render_labels(&step.output),
            note
        ));
    }
    out.push_str(&format!(
        "verdict: {}\n",
        if result.matched { "matched" } else { "not matched" }
    ));
    Ok(out)
}

/// Binary sequences render as the set of marked positions, soft ones as the
/// top scoring positions with probabilities rounded to 3 decimals.
fn render_labels(seq: &LabelSeq) -> String {
    if seq.is_binary() {
        let marked: Vec<String> = seq
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 1.0)
            .map(|(i, _)| i.to_string())
            .collect();
        format!("{{{}}}", marked.join(", "))
    } else {
        let mut indexed: Vec<(usize, f64)> = seq
            .values()
            .iter()
            .copied()
            .enumerate()
            .collect();
        indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let top: Vec<String> = indexed
            .iter()
            .take(5)
            .map(|(i, p)| format!("{i}: {p:.3}"))
            .collect();
        format!("p{{{}}}", top.join(", "))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render_table())
    }
}
