//! The rule dialect: lexing and parsing into positive/negative pattern
//! trees, plus the canonical printer and the rule file loader.
//!
//! Supported constructs are token literals, `.*` (unbounded gap), `{,d}`
//! (at most `d` tokens between), parenthesized alternation `(a|b)`, and the
//! `@@` separator between the positive and negative parts. Everything else
//! a general regex engine would accept is rejected with a structured error.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::token::{Tokenizer, TokenizerMode};

/// A rule as read from a rule file, before parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSource {
    pub id: String,
    pub label: String,
    pub text: String,
}

impl RuleSource {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        RuleSource {
            id: id.into(),
            label: label.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternAst {
    /// 1..n consecutive case tokens.
    TokenLiteral(Vec<String>),
    /// Distance between neighbours in a concatenation: `-1` unbounded,
    /// `d >= 0` at most `d` tokens in between. Adjacency is `Gap(0)`.
    Gap(i32),
    Concat(Vec<PatternAst>),
    Alternation(Vec<PatternAst>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleAst {
    pub positive: PatternAst,
    pub negative: Option<PatternAst>,
    pub source: RuleSource,
    pub mode: TokenizerMode,
}

/// One lexed element of a rule pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternToken {
    Literal(String),
    GapUnbounded,
    GapBounded(u32),
    GroupOpen,
    GroupClose,
    Branch,
    Separator,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DialectError {
    #[error("the positive part of the rule is empty")]
    EmptyPositive,
    #[error("unbalanced parentheses")]
    UnbalancedGroup,
    #[error("gap operator with a missing side")]
    DanglingGapOperator,
    #[error("more than one `@@` separator")]
    DuplicateSeparator,
    #[error("malformed bounded gap `{0}` (expected `{{,d}}` with d a non-negative integer)")]
    MalformedGap(String),
    #[error("unsupported construct `{0}` (only literals, `.*`, `{{,d}}`, `(a|b)` and `@@` are allowed)")]
    Unsupported(String),
    #[error("alternation in the positive part must be parenthesized")]
    BareAlternation,
    #[error("empty alternation branch")]
    EmptyBranch,
    #[error("empty group")]
    EmptyGroup,
}

/// Lex a rule pattern into literal tokens and metacharacter marks.
pub fn tokenize_pattern(
    text: &str,
    tokenizer: &Tokenizer,
) -> Result<Vec<PatternToken>, DialectError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut chunk = String::new();
    let mut depth = 0i32;
    let mut i = 0;

    let flush = |chunk: &mut String, out: &mut Vec<PatternToken>| {
        if !chunk.is_empty() {
            for tok in tokenizer.tokenize(chunk) {
                out.push(PatternToken::Literal(tok));
            }
            chunk.clear();
        }
    };

    while i < chars.len() {
        match chars[i] {
            '@' if chars.get(i + 1) == Some(&'@') => {
                flush(&mut chunk, &mut out);
                out.push(PatternToken::Separator);
                i += 2;
            }
            '.' if chars.get(i + 1) == Some(&'*') => {
                flush(&mut chunk, &mut out);
                out.push(PatternToken::GapUnbounded);
                i += 2;
            }
            '{' => {
                flush(&mut chunk, &mut out);
                let close = chars[i..].iter().position(|&c| c == '}');
                let raw: String = match close {
                    Some(off) => chars[i..=i + off].iter().collect(),
                    None => chars[i..].iter().collect(),
                };
                let digits = raw
                    .strip_prefix("{,")
                    .and_then(|r| r.strip_suffix('}'))
                    .ok_or_else(|| DialectError::MalformedGap(raw.clone()))?;
                let d: u32 = digits
                    .parse()
                    .map_err(|_| DialectError::MalformedGap(raw.clone()))?;
                out.push(PatternToken::GapBounded(d));
                i += raw.chars().count();
            }
            '(' => {
                flush(&mut chunk, &mut out);
                depth += 1;
                out.push(PatternToken::GroupOpen);
                i += 1;
            }
            ')' => {
                flush(&mut chunk, &mut out);
                depth -= 1;
                if depth < 0 {
                    return Err(DialectError::UnbalancedGroup);
                }
                out.push(PatternToken::GroupClose);
                i += 1;
            }
            '|' => {
                flush(&mut chunk, &mut out);
                out.push(PatternToken::Branch);
                i += 1;
            }
            c @ ('.' | '*' | '+' | '?' | '[' | ']' | '}' | '^' | '$' | '\\') => {
                return Err(DialectError::Unsupported(c.to_string()));
            }
            c => {
                chunk.push(c);
                i += 1;
            }
        }
    }
    flush(&mut chunk, &mut out);
    if depth != 0 {
        return Err(DialectError::UnbalancedGroup);
    }
    Ok(out)
}

/// Parse a rule into its positive and optional negative pattern tree.
pub fn parse_rule(src: &RuleSource, tokenizer: &Tokenizer) -> Result<RuleAst, DialectError> {
    let stream = tokenize_pattern(&src.text, tokenizer)?;
    let seps: Vec<usize> = stream
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == PatternToken::Separator)
        .map(|(i, _)| i)
        .collect();
    if seps.len() > 1 {
        return Err(DialectError::DuplicateSeparator);
    }
    let (pos_toks, neg_toks) = match seps.first() {
        Some(&p) => (&stream[..p], Some(&stream[p + 1..])),
        None => (&stream[..], None),
    };
    if pos_toks.is_empty() {
        return Err(DialectError::EmptyPositive);
    }
    if split_top_level(pos_toks).len() > 1 {
        return Err(DialectError::BareAlternation);
    }
    let positive = parse_sequence(pos_toks)?;
    let negative = match neg_toks {
        None | Some([]) => None,
        Some(toks) => Some(parse_negative(toks)?),
    };
    Ok(RuleAst {
        positive,
        negative,
        source: src.clone(),
        mode: tokenizer.mode(),
    })
}

fn parse_negative(toks: &[PatternToken]) -> Result<PatternAst, DialectError> {
    let parts = split_top_level(toks);
    if parts.len() >= 2 {
        let mut branches = Vec::with_capacity(parts.len());
        for part in parts {
            if part.is_empty() {
                return Err(DialectError::EmptyBranch);
            }
            branches.push(parse_sequence(part)?);
        }
        Ok(PatternAst::Alternation(branches))
    } else {
        parse_sequence(toks)
    }
}

/// Split a token slice at depth-zero `|` marks.
fn split_top_level(toks: &[PatternToken]) -> Vec<&[PatternToken]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, tok) in toks.iter().enumerate() {
        match tok {
            PatternToken::GroupOpen => depth += 1,
            PatternToken::GroupClose => depth -= 1,
            PatternToken::Branch if depth == 0 => {
                parts.push(&toks[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&toks[start..]);
    parts
}

enum Elem {
    Value(PatternAst),
    Gap(i32),
}

fn parse_sequence(toks: &[PatternToken]) -> Result<PatternAst, DialectError> {
    let mut elems: Vec<Elem> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        match &toks[i] {
            PatternToken::Literal(_) => {
                let mut run = Vec::new();
                while let Some(PatternToken::Literal(t)) = toks.get(i) {
                    run.push(t.clone());
                    i += 1;
                }
                elems.push(Elem::Value(PatternAst::TokenLiteral(run)));
            }
            PatternToken::GapUnbounded => {
                elems.push(Elem::Gap(-1));
                i += 1;
            }
            PatternToken::GapBounded(d) => {
                elems.push(Elem::Gap(*d as i32));
                i += 1;
            }
            PatternToken::GroupOpen => {
                let close = matching_close(toks, i)?;
                elems.push(Elem::Value(parse_group(&toks[i + 1..close])?));
                i = close + 1;
            }
            PatternToken::GroupClose => return Err(DialectError::UnbalancedGroup),
            PatternToken::Branch => return Err(DialectError::BareAlternation),
            PatternToken::Separator => return Err(DialectError::DuplicateSeparator),
        }
    }
    if elems.is_empty() {
        return Err(DialectError::EmptyGroup);
    }
    if matches!(elems.first(), Some(Elem::Gap(_))) || matches!(elems.last(), Some(Elem::Gap(_))) {
        return Err(DialectError::DanglingGapOperator);
    }
    let mut children = Vec::with_capacity(elems.len());
    let mut prev_was_value = false;
    for elem in elems {
        match elem {
            Elem::Value(v) => {
                if prev_was_value {
                    children.push(PatternAst::Gap(0));
                }
                children.push(v);
                prev_was_value = true;
            }
            Elem::Gap(d) => {
                if !prev_was_value {
                    return Err(DialectError::DanglingGapOperator);
                }
                children.push(PatternAst::Gap(d));
                prev_was_value = false;
            }
        }
    }
    if children.len() == 1 {
        Ok(children.pop().expect("non-empty"))
    } else {
        Ok(PatternAst::Concat(children))
    }
}

fn parse_group(inner: &[PatternToken]) -> Result<PatternAst, DialectError> {
    let parts = split_top_level(inner);
    if parts.len() >= 2 {
        let mut branches = Vec::with_capacity(parts.len());
        for part in parts {
            if part.is_empty() {
                return Err(DialectError::EmptyBranch);
            }
            branches.push(parse_sequence(part)?);
        }
        Ok(PatternAst::Alternation(branches))
    } else {
        parse_sequence(inner)
    }
}

fn matching_close(toks: &[PatternToken], open: usize) -> Result<usize, DialectError> {
    let mut depth = 0i32;
    for (i, tok) in toks.iter().enumerate().skip(open) {
        match tok {
            PatternToken::GroupOpen => depth += 1,
            PatternToken::GroupClose => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
            _ => {}
        }
    }
    Err(DialectError::UnbalancedGroup)
}

/// Render a rule back to dialect text. Parsing the result yields a tree
/// structurally equal to the input.
pub fn print_canonical(ast: &RuleAst) -> String {
    let joiner = match ast.mode {
        TokenizerMode::Whitespace => " ",
        TokenizerMode::Char | TokenizerMode::Word => "",
    };
    let mut out = String::new();
    print_pattern(&ast.positive, joiner, &mut out);
    if let Some(neg) = &ast.negative {
        out.push_str("@@");
        print_pattern(neg, joiner, &mut out);
    }
    out
}

fn print_pattern(node: &PatternAst, joiner: &str, out: &mut String) {
    match node {
        PatternAst::TokenLiteral(tokens) => out.push_str(&tokens.join(joiner)),
        PatternAst::Gap(-1) => out.push_str(".*"),
        PatternAst::Gap(d) => out.push_str(&format!("{{,{d}}}")),
        PatternAst::Concat(children) => {
            for child in children {
                print_pattern(child, joiner, out);
            }
        }
        PatternAst::Alternation(branches) => {
            out.push('(');
            for (i, branch) in branches.iter().enumerate() {
                if i > 0 {
                    out.push('|');
                }
                print_pattern(branch, joiner, out);
            }
            out.push(')');
        }
    }
}

#[derive(Debug, Error)]
pub enum RuleFileError {
    #[error("io error reading rule file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `label<TAB>rule-text`")]
    BadLine { line: usize },
    #[error("line {line}: empty label")]
    EmptyLabel { line: usize },
}

/// Load a rule file: one `label<TAB>rule-text` per line, `#` comments.
/// Rules get ids `r<line-number>`.
pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<RuleSource>, RuleFileError> {
    parse_rules_text(&fs::read_to_string(path)?)
}

/// Same format as [`load_rules`], from an in-memory string.
pub fn parse_rules_text(content: &str) -> Result<Vec<RuleSource>, RuleFileError> {
    let mut rules = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or(RuleFileError::BadLine { line: line_no })?;
        if label.trim().is_empty() {
            return Err(RuleFileError::EmptyLabel { line: line_no });
        }
        rules.push(RuleSource::new(
            format!("r{line_no}"),
            label.trim(),
            text.trim(),
        ));
    }
    Ok(rules)
}
