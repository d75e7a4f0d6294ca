//! Linearize a rule tree into a Reverse-Polish program of actions and run
//! it on a stack machine, dispatching Find steps to a pluggable matcher.

use std::fmt;

use thiserror::Error;

use crate::dialect::{PatternAst, RuleAst};
use crate::labels::{
    self, and_ordered, and_unordered, guard, or_combine, output_max, LabelError, LabelSeq,
    Polarity,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    FindPositive(Vec<String>),
    FindNegative(Vec<String>),
    AndOrdered(i32),
    AndUnordered,
    Or,
    Output,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::FindPositive(p) => write!(f, "{} Find_Positive", p.join(" ")),
            Instruction::FindNegative(p) => write!(f, "{} Find_Negative", p.join(" ")),
            Instruction::AndOrdered(d) => write!(f, "{d} And_Ordered"),
            Instruction::AndUnordered => write!(f, "And_Unordered"),
            Instruction::Or => write!(f, "Or"),
            Instruction::Output => write!(f, "Output"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpnProgram {
    pub instructions: Vec<Instruction>,
    pub source_rule_id: String,
}

impl RpnProgram {
    /// Space-separated `param Action` serialization, e.g.
    /// `打 Find_Positive 墙 Find_Positive 0 And_Ordered Output`.
    pub fn to_text(&self) -> String {
        self.instructions
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    /// Emit one Find per literal token chained with `And_Ordered(0)`
    /// instead of n-gram Finds.
    pub decompose_literals: bool,
    /// Longest n-gram a single Find may carry when not decomposing.
    pub max_find_ngram: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            decompose_literals: true,
            max_find_ngram: 3,
        }
    }
}

/// Post-order linearization: the positive tree, then the negative tree,
/// then `And_Unordered` joining the two roots, then `Output`.
pub fn linearize(ast: &RuleAst, cfg: &LayoutConfig) -> RpnProgram {
    let mut instructions = Vec::new();
    emit_pattern(&ast.positive, Polarity::Positive, cfg, &mut instructions);
    if let Some(neg) = &ast.negative {
        emit_pattern(neg, Polarity::Negative, cfg, &mut instructions);
        instructions.push(Instruction::AndUnordered);
    }
    instructions.push(Instruction::Output);
    RpnProgram {
        instructions,
        source_rule_id: ast.source.id.clone(),
    }
}

fn emit_pattern(
    node: &PatternAst,
    polarity: Polarity,
    cfg: &LayoutConfig,
    out: &mut Vec<Instruction>,
) {
    let find = |pattern: Vec<String>| match polarity {
        Polarity::Positive => Instruction::FindPositive(pattern),
        Polarity::Negative => Instruction::FindNegative(pattern),
    };
    match node {
        PatternAst::TokenLiteral(tokens) => {
            let chunk = if cfg.decompose_literals {
                1
            } else {
                cfg.max_find_ngram.max(1)
            };
            let mut first = true;
            for gram in tokens.chunks(chunk) {
                out.push(find(gram.to_vec()));
                if !first {
                    out.push(Instruction::AndOrdered(0));
                }
                first = false;
            }
        }
        PatternAst::Gap(_) => unreachable!("gaps are handled by Concat"),
        PatternAst::Concat(children) => {
            let mut pending_gap: Option<i32> = None;
            let mut first = true;
            for child in children {
                if let PatternAst::Gap(d) = child {
                    pending_gap = Some(*d);
                    continue;
                }
                emit_pattern(child, polarity, cfg, out);
                if !first {
                    out.push(Instruction::AndOrdered(pending_gap.unwrap_or(0)));
                }
                pending_gap = None;
                first = false;
            }
        }
        PatternAst::Alternation(branches) => {
            for (i, branch) in branches.iter().enumerate() {
                emit_pattern(branch, polarity, cfg, out);
                if i > 0 {
                    out.push(Instruction::Or);
                }
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("instruction {index}: pop from an empty stack")]
    StackUnderflow { index: usize },
    #[error("values left on the stack after Output")]
    TrailingValues,
    #[error("instruction {index}: Output must be the single final instruction")]
    MisplacedOutput { index: usize },
    #[error("program has no Output instruction")]
    MissingOutput,
    #[error("instruction {index}: Or operands have mixed polarity")]
    MixedPolarityOr { index: usize },
    #[error("instruction {index}: And_Ordered operands have mixed polarity")]
    MixedPolarityAndOrdered { index: usize },
    #[error("instruction {index}: Find pattern is empty")]
    EmptyFindPattern { index: usize },
    #[error("instruction {index}: distance must be -1 or >= 0")]
    InvalidDistance { index: usize },
    #[error("instruction {index}: Output operand has negative polarity")]
    NegativeOutput { index: usize },
}

/// Check the stack discipline and polarity rules without executing.
pub fn validate(prog: &RpnProgram) -> Result<(), LayoutError> {
    let mut stack: Vec<Polarity> = Vec::new();
    let last = prog.instructions.len().checked_sub(1);
    let mut saw_output = false;
    for (index, instr) in prog.instructions.iter().enumerate() {
        match instr {
            Instruction::FindPositive(p) | Instruction::FindNegative(p) => {
                if p.is_empty() {
                    return Err(LayoutError::EmptyFindPattern { index });
                }
                stack.push(match instr {
                    Instruction::FindPositive(_) => Polarity::Positive,
                    _ => Polarity::Negative,
                });
            }
            Instruction::AndOrdered(d) => {
                if *d < -1 {
                    return Err(LayoutError::InvalidDistance { index });
                }
                let (b, a) = pop2(&mut stack, index)?;
                if a != b {
                    return Err(LayoutError::MixedPolarityAndOrdered { index });
                }
                stack.push(a);
            }
            Instruction::Or => {
                let (b, a) = pop2(&mut stack, index)?;
                if a != b {
                    return Err(LayoutError::MixedPolarityOr { index });
                }
                stack.push(a);
            }
            Instruction::AndUnordered => {
                let (b, a) = pop2(&mut stack, index)?;
                // Mixed polarity is the guard form and yields positive.
                let out = match (a, b) {
                    (Polarity::Negative, Polarity::Negative) => Polarity::Negative,
                    _ => Polarity::Positive,
                };
                stack.push(out);
            }
            Instruction::Output => {
                if Some(index) != last {
                    return Err(LayoutError::MisplacedOutput { index });
                }
                let root = stack.pop().ok_or(LayoutError::StackUnderflow { index })?;
                if root == Polarity::Negative {
                    return Err(LayoutError::NegativeOutput { index });
                }
                saw_output = true;
            }
        }
    }
    if !saw_output {
        return Err(LayoutError::MissingOutput);
    }
    if !stack.is_empty() {
        return Err(LayoutError::TrailingValues);
    }
    Ok(())
}

fn pop2(stack: &mut Vec<Polarity>, index: usize) -> Result<(Polarity, Polarity), LayoutError> {
    let b = stack.pop().ok_or(LayoutError::StackUnderflow { index })?;
    let a = stack.pop().ok_or(LayoutError::StackUnderflow { index })?;
    Ok((b, a))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FindError {
    #[error("find pattern is empty")]
    EmptyPattern,
    #[error("matcher failure: {0}")]
    Matcher(String),
}

/// Supplies the per-token labels for Find instructions. Implementations
/// must be read-only during matching so cases can run concurrently.
pub trait FindProvider {
    fn find(
        &self,
        case: &[String],
        pattern: &[String],
        polarity: Polarity,
    ) -> Result<LabelSeq, FindError>;
}

/// Literal token matching.
pub struct ExactMatcher;

impl FindProvider for ExactMatcher {
    fn find(
        &self,
        case: &[String],
        pattern: &[String],
        polarity: Polarity,
    ) -> Result<LabelSeq, FindError> {
        if pattern.is_empty() {
            return Err(FindError::EmptyPattern);
        }
        Ok(labels::find_exact(case, pattern).with_polarity(polarity))
    }
}

/// Outcome of running a program on one case.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub matched: bool,
    pub root_labels: LabelSeq,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub instruction: Instruction,
    pub output: LabelSeq,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("case is empty")]
    CaseEmpty,
    #[error("invalid program: {0}")]
    InvalidProgram(#[from] LayoutError),
    #[error(transparent)]
    Matcher(#[from] FindError),
    #[error("label algebra failure: {0}")]
    Label(#[from] LabelError),
}

/// Evaluate the program against a case on a stack of label sequences.
pub fn execute(
    prog: &RpnProgram,
    case: &[String],
    matcher: &dyn FindProvider,
) -> Result<MatchResult, ExecError> {
    if case.is_empty() {
        return Err(ExecError::CaseEmpty);
    }
    validate(prog)?;
    let mut stack: Vec<LabelSeq> = Vec::new();
    let mut trace = Vec::with_capacity(prog.instructions.len());
    let mut matched = false;
    let mut root = None;
    for instr in &prog.instructions {
        let output = match instr {
            Instruction::FindPositive(p) => matcher.find(case, p, Polarity::Positive)?,
            Instruction::FindNegative(p) => matcher.find(case, p, Polarity::Negative)?,
            Instruction::AndOrdered(d) => {
                let b = stack.pop().expect("validated");
                let a = stack.pop().expect("validated");
                and_ordered(&a, &b, *d)?
            }
            Instruction::Or => {
                let b = stack.pop().expect("validated");
                let a = stack.pop().expect("validated");
                or_combine(&a, &b)?
            }
            Instruction::AndUnordered => {
                let b = stack.pop().expect("validated");
                let a = stack.pop().expect("validated");
                match (a.polarity(), b.polarity()) {
                    (Polarity::Positive, Polarity::Negative) => guard(&a, &b)?,
                    (Polarity::Negative, Polarity::Positive) => guard(&b, &a)?,
                    _ => and_unordered(&a, &b)?,
                }
            }
            Instruction::Output => {
                let r = stack.pop().expect("validated");
                matched = output_max(&r);
                root = Some(r.clone());
                r
            }
        };
        trace.push(TraceStep {
            instruction: instr.clone(),
            output: output.clone(),
        });
        if !matches!(instr, Instruction::Output) {
            stack.push(output);
        }
    }
    Ok(MatchResult {
        matched,
        root_labels: root.expect("validated program ends in Output"),
        trace,
    })
}
