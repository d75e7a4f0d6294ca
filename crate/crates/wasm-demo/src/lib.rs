//! Browser bindings for the rule engine. Three operations back the demo
//! page: compile a rule to its action sequence, trace exact matching over
//! a case, and trace soft matching against a built-in embedding table
//! whose synonym clusters let a rule written as "pushed into" also fire on
//! "put inside". Results come back as JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use softrules::dialect::{print_canonical, RuleSource};
use softrules::engine::{compile_rule, match_case, ExactMatcher, SoftMatcher};
use softrules::labels::LabelSeq;
use softrules::layout::{FindProvider, LayoutConfig};
use softrules::soft::{BilinearScorer, EmbeddingTable, ScorerSet};
use softrules::token::{Tokenizer, TokenizerMode};

#[derive(Serialize, Default)]
struct CompileOut {
    canonical: String,
    rpn: String,
    instructions: Vec<String>,
    error: Option<String>,
}

#[derive(Serialize)]
struct StepOut {
    instruction: String,
    binary: bool,
    /// Per-token values: 0/1 marks or soft probabilities.
    values: Vec<f64>,
    /// Decision positions (thresholded for soft sequences).
    marks: Vec<usize>,
}

#[derive(Serialize, Default)]
struct TraceOut {
    matched: bool,
    tokens: Vec<String>,
    steps: Vec<StepOut>,
    error: Option<String>,
}

fn tokenizer(mode: &str) -> Result<Tokenizer, String> {
    let mode: TokenizerMode = mode.parse()?;
    if mode == TokenizerMode::Word {
        return Err("the demo supports char and whitespace modes".into());
    }
    Ok(Tokenizer::new(mode))
}

fn layout(decompose: bool) -> LayoutConfig {
    LayoutConfig {
        decompose_literals: decompose,
        ..LayoutConfig::default()
    }
}

fn compile(rule: &str, mode: &str, decompose: bool) -> Result<CompileOut, String> {
    let tok = tokenizer(mode)?;
    let src = RuleSource::new("demo", "demo", rule.trim());
    let compiled =
        compile_rule(&src, &tok, &layout(decompose)).map_err(|e| e.to_string())?;
    Ok(CompileOut {
        canonical: print_canonical(&compiled.ast),
        rpn: compiled.program.to_text(),
        instructions: compiled
            .program
            .instructions
            .iter()
            .map(|i| i.to_string())
            .collect(),
        error: None,
    })
}

fn step_out(instruction: String, seq: &LabelSeq) -> StepOut {
    let marks = seq
        .marks()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= 1.0)
        .map(|(i, _)| i)
        .collect();
    StepOut {
        instruction,
        binary: seq.is_binary(),
        values: seq.values().to_vec(),
        marks,
    }
}

fn trace(
    rule: &str,
    case: &str,
    mode: &str,
    decompose: bool,
    matcher: &dyn FindProvider,
) -> Result<TraceOut, String> {
    let tok = tokenizer(mode)?;
    let src = RuleSource::new("demo", "demo", rule.trim());
    let compiled =
        compile_rule(&src, &tok, &layout(decompose)).map_err(|e| e.to_string())?;
    let tokens = tok.tokenize(case);
    if tokens.is_empty() {
        return Err("case is empty".into());
    }
    let result = match_case(&compiled, &tokens, matcher).map_err(|e| e.to_string())?;
    Ok(TraceOut {
        matched: result.matched,
        tokens,
        steps: result
            .trace
            .iter()
            .map(|s| step_out(s.instruction.to_string(), &s.output))
            .collect(),
        error: None,
    })
}

fn to_json<T: Serialize + Default>(result: Result<T, String>, set_error: fn(&mut T, String)) -> String {
    let value = match result {
        Ok(v) => v,
        Err(msg) => {
            let mut v = T::default();
            set_error(&mut v, msg);
            v
        }
    };
    serde_json::to_string(&value).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

/// Compile a rule and return `{canonical, rpn, instructions[], error}`.
#[wasm_bindgen]
pub fn compile_rule_text(rule: &str, mode: &str, decompose: bool) -> String {
    to_json(compile(rule, mode, decompose), |v, e| v.error = Some(e))
}

/// Exact matching: `{matched, tokens[], steps[], error}` with one step per
/// instruction carrying per-token values.
#[wasm_bindgen]
pub fn trace_exact(rule: &str, case: &str, mode: &str, decompose: bool) -> String {
    to_json(
        trace(rule, case, mode, decompose, &ExactMatcher),
        |v, e| v.error = Some(e),
    )
}

/// Soft matching against the built-in demo embeddings at threshold
/// `theta`; whitespace tokenization.
#[wasm_bindgen]
pub fn trace_soft(rule: &str, case: &str, theta: f64) -> String {
    let run = || -> Result<TraceOut, String> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(format!("theta {theta} must be inside (0, 1)"));
        }
        let table = demo_table();
        let scorers = ScorerSet::Separate {
            positive: BilinearScorer::identity(table.dim(), theta, vec![1, 2, 3]),
            negative: BilinearScorer::identity(table.dim(), theta, vec![1, 2]),
        };
        let matcher = SoftMatcher {
            table: &table,
            scorers: &scorers,
        };
        trace(rule, case, "whitespace", true, &matcher)
    };
    to_json(run(), |v, e| v.error = Some(e))
}

/// The demo vocabulary as `{clusters: [[word, ...], ...]}` so the page can
/// hint which words are known and which are near-synonyms.
#[wasm_bindgen]
pub fn demo_vocabulary() -> String {
    #[derive(Serialize)]
    struct Vocab {
        clusters: Vec<Vec<&'static str>>,
    }
    serde_json::to_string(&Vocab {
        clusters: CLUSTERS.iter().map(|c| c.to_vec()).collect(),
    })
    .unwrap_or_default()
}

/// Synonym clusters: members of one cluster share a base direction with a
/// pairwise cosine of 0.95; across clusters everything is orthogonal.
const CLUSTERS: &[&[&str]] = &[
    &["pushed", "put", "moved"],
    &["into", "inside"],
    &["extracted", "taken"],
    &["derived", "emanated"],
    &["from"],
    &["island"],
    &["farmed"],
    &["for"],
    &["year"],
    &["profit"],
    &["bottle", "container"],
    &["woman", "family"],
    &["<e1>"],
    &["</e1>"],
    &["<e2>"],
    &["</e2>"],
    &["the"],
    &["was"],
    &["of"],
    &["a"],
    &["her"],
    &["native"],
    &["target"],
    &["metal"],
    &["which"],
    &["grounded"],
    &["空调"],
    &["被盗"],
];

fn demo_table() -> EmbeddingTable {
    let n_clusters = CLUSTERS.len();
    let n_words: usize = CLUSTERS.iter().map(|c| c.len()).sum();
    let dim = n_clusters + n_words;
    let cos: f64 = 0.95_f64.sqrt(); // pairwise cosine cos^2 = 0.95
    let sin = (1.0 - cos * cos).sqrt();
    let mut entries = Vec::with_capacity(n_words);
    let mut unique = n_clusters;
    for (c, cluster) in CLUSTERS.iter().enumerate() {
        for word in cluster.iter() {
            let mut v = vec![0.0; dim];
            if cluster.len() == 1 {
                v[c] = 1.0;
            } else {
                v[c] = cos;
                v[unique] = sin;
            }
            entries.push((word.to_string(), v));
            unique += 1;
        }
    }
    EmbeddingTable::from_entries(entries).expect("demo table is well-formed")
}
