//! Training loops for the soft Find scorer.
//!
//! Pretraining samples (pattern, sentence) pairs from a corpus — the gold
//! labels are what exact matching would produce — and minimizes per-token
//! binary cross-entropy. Finetuning runs whole rules: per-token labels are
//! sampled from the Find probabilities, the assembled programs predict the
//! case's labels, and a +/-1 reward feeds a score-function gradient, so a
//! false positive pushes down exactly the tokens that were predicted 1.

use std::cell::Cell;
use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::engine::CompiledRule;
use crate::labels::{find_exact, LabelSeq, Polarity};
use crate::layout::{execute, FindError, FindProvider, Instruction};
use crate::soft::{BilinearScorer, EmbeddingTable, ScorerError, ScorerSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub case: Vec<String>,
    pub pattern: Vec<String>,
    pub gold: LabelSeq,
}

impl TrainSample {
    /// Gold labels are the exact-find labels of the pattern in the case.
    pub fn positive(case: Vec<String>, pattern: Vec<String>) -> Self {
        let gold = find_exact(&case, &pattern);
        TrainSample {
            case,
            pattern,
            gold,
        }
    }

    /// A pattern paired with a case that does not contain it.
    pub fn negative(case: Vec<String>, pattern: Vec<String>) -> Self {
        let gold = LabelSeq::zeros(case.len(), Polarity::Positive);
        TrainSample {
            case,
            pattern,
            gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub ngram_lengths: Vec<usize>,
    pub samples_per_sentence: usize,
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            ngram_lengths: vec![1, 2],
            samples_per_sentence: 2,
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

/// Sample training data from raw sentences: positives pick a random n-gram
/// of a sentence, negatives pair a sampled pattern with a sentence that
/// does not contain it. Deterministic under the config seed.
pub fn generate_pretraining_data(
    corpus: &[Vec<String>],
    cfg: &PretrainConfig,
) -> Vec<TrainSample> {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut samples = Vec::new();
    for sentence in corpus {
        if sentence.is_empty() {
            continue;
        }
        for _ in 0..cfg.samples_per_sentence {
            let lens: Vec<usize> = cfg
                .ngram_lengths
                .iter()
                .copied()
                .filter(|&l| l >= 1 && l <= sentence.len())
                .collect();
            if lens.is_empty() {
                continue;
            }
            let len = lens[rng.gen_range(0..lens.len())];
            let start = rng.gen_range(0..=sentence.len() - len);
            let pattern = sentence[start..start + len].to_vec();
            samples.push(TrainSample::positive(sentence.clone(), pattern));
        }
    }
    let target = (samples.len() as f64 * cfg.negative_ratio).round() as usize;
    let mut negatives = Vec::new();
    if !samples.is_empty() {
        let mut attempts = 0;
        let budget = target * 50 + 50;
        while negatives.len() < target && attempts < budget {
            attempts += 1;
            let pattern = samples[rng.gen_range(0..samples.len())].pattern.clone();
            let sentence = &corpus[rng.gen_range(0..corpus.len())];
            if sentence.is_empty() || find_exact(sentence, &pattern).has_evidence() {
                continue;
            }
            negatives.push(TrainSample::negative(sentence.clone(), pattern));
        }
    }
    samples.extend(negatives);
    samples.shuffle(&mut rng);
    samples
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss is not finite (training diverged)")]
    NonFiniteLoss,
    #[error("gradient is not finite (training diverged)")]
    NonFiniteGradient,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("rule execution failed during finetuning: {0}")]
    Exec(String),
}

/// Per-token binary cross-entropy of the scorer on one sample, with the
/// analytic gradient w.r.t. W. Only the argmax context of each position
/// contributes (subgradient through the max).
fn loss_and_grad(
    scorer: &BilinearScorer,
    table: &EmbeddingTable,
    sample: &TrainSample,
) -> Result<(f64, Vec<f64>), TrainError> {
    let fwd = scorer.forward(&sample.case, &sample.pattern, table)?;
    let dim = scorer.dim();
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim * dim];
    for (i, (&p, &g)) in fwd.probs.iter().zip(sample.gold.values()).enumerate() {
        loss -= if g >= 0.5 { p.ln() } else { (1.0 - p).ln() };
        let coeff = p - g;
        if coeff != 0.0 {
            add_outer(&mut grad, dim, coeff, &fwd.best_contexts[i], &fwd.pattern_vec);
        }
    }
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok((loss, grad))
}

fn add_outer(grad: &mut [f64], dim: usize, coeff: f64, v_c: &[f64], v_p: &[f64]) {
    for (r, &c) in v_c.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let row = &mut grad[r * dim..(r + 1) * dim];
        let scale = coeff * c;
        for (slot, &pv) in row.iter_mut().zip(v_p) {
            *slot += scale * pv;
        }
    }
}

/// One gradient-descent update of W; returns the loss before the update.
pub fn train_step(
    scorer: &mut BilinearScorer,
    table: &EmbeddingTable,
    sample: &TrainSample,
    lr: f64,
) -> Result<f64, TrainError> {
    let (loss, grad) = loss_and_grad(scorer, table, sample)?;
    for (w, g) in scorer.weights_mut().iter_mut().zip(&grad) {
        *w -= lr * g;
    }
    Ok(loss)
}

/// Compare the analytic gradient against central finite differences on a
/// random subset of at least 20 entries of W (all entries for small W).
/// Returns the maximum relative error.
pub fn grad_check(
    scorer: &BilinearScorer,
    table: &EmbeddingTable,
    sample: &TrainSample,
    h: f64,
    rng: &mut StdRng,
) -> Result<f64, TrainError> {
    let (_, analytic) = loss_and_grad(scorer, table, sample)?;
    let total = scorer.dim() * scorer.dim();
    let entries: Vec<usize> = if total <= 20 {
        (0..total).collect()
    } else {
        let mut picked = BTreeSet::new();
        while picked.len() < 20 {
            picked.insert(rng.gen_range(0..total));
        }
        picked.into_iter().collect()
    };
    let mut probe = scorer.clone();
    let mut max_rel: f64 = 0.0;
    for k in entries {
        let orig = probe.weights()[k];
        probe.weights_mut()[k] = orig + h;
        let plus = loss_and_grad(&probe, table, sample)?.0;
        probe.weights_mut()[k] = orig - h;
        let minus = loss_and_grad(&probe, table, sample)?.0;
        probe.weights_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// +1 when the predicted label set equals gold, else -1.
    PerCase,
    /// Each rule is rewarded by whether its own label's presence is correct.
    PerLabel,
}

/// Serves precomputed Find outputs in instruction order.
struct ReplayMatcher<'a> {
    outputs: &'a [LabelSeq],
    next: Cell<usize>,
}

impl FindProvider for ReplayMatcher<'_> {
    fn find(
        &self,
        _case: &[String],
        _pattern: &[String],
        _polarity: Polarity,
    ) -> Result<LabelSeq, FindError> {
        let i = self.next.get();
        self.next.set(i + 1);
        self.outputs
            .get(i)
            .cloned()
            .ok_or_else(|| FindError::Matcher("sampled find outputs exhausted".into()))
    }
}

/// One REINFORCE update from a single case: sample Bernoulli labels from
/// the Find probabilities, execute every rule on the samples, reward the
/// outcome against the gold labels, and ascend the score-function gradient.
/// Returns the (mean) reward.
#[allow(clippy::too_many_arguments)]
pub fn rl_finetune_step(
    rules: &[CompiledRule],
    case: &[String],
    gold_labels: &BTreeSet<String>,
    scorers: &mut ScorerSet,
    table: &EmbeddingTable,
    lr: f64,
    reward_mode: RewardMode,
    rng: &mut StdRng,
) -> Result<f64, TrainError> {
    let dim = scorers.positive().dim();
    struct RuleRun {
        pos_grad: Vec<f64>,
        neg_grad: Vec<f64>,
    }
    let mut runs = Vec::with_capacity(rules.len());
    let mut predicted: BTreeSet<String> = BTreeSet::new();
    for rule in rules {
        let mut sampled = Vec::new();
        let mut pos_grad = vec![0.0; dim * dim];
        let mut neg_grad = vec![0.0; dim * dim];
        for instr in &rule.program.instructions {
            let (pattern, polarity) = match instr {
                Instruction::FindPositive(p) => (p, Polarity::Positive),
                Instruction::FindNegative(p) => (p, Polarity::Negative),
                _ => continue,
            };
            let scorer = match polarity {
                Polarity::Positive => scorers.positive(),
                Polarity::Negative => scorers.negative(),
            };
            let fwd = scorer.forward(case, pattern, table)?;
            let grad = match polarity {
                Polarity::Positive => &mut pos_grad,
                Polarity::Negative => &mut neg_grad,
            };
            let mut marks = Vec::with_capacity(case.len());
            for (i, &p) in fwd.probs.iter().enumerate() {
                let b = u8::from(rng.gen::<f64>() < p);
                marks.push(b);
                // d log P(b|p) / d s for a Bernoulli through a sigmoid.
                let coeff = f64::from(b) - p;
                if coeff != 0.0 {
                    add_outer(grad, dim, coeff, &fwd.best_contexts[i], &fwd.pattern_vec);
                }
            }
            sampled.push(LabelSeq::from_marks(&marks, polarity));
        }
        let replay = ReplayMatcher {
            outputs: &sampled,
            next: Cell::new(0),
        };
        let result =
            execute(&rule.program, case, &replay).map_err(|e| TrainError::Exec(e.to_string()))?;
        if result.matched {
            predicted.insert(rule.label().to_string());
        }
        runs.push(RuleRun { pos_grad, neg_grad });
    }
    let case_reward = if predicted == *gold_labels { 1.0 } else { -1.0 };
    let mut total_pos = vec![0.0; dim * dim];
    let mut total_neg = vec![0.0; dim * dim];
    let mut reward_sum = 0.0;
    for (rule, run) in rules.iter().zip(&runs) {
        let r = match reward_mode {
            RewardMode::PerCase => case_reward,
            RewardMode::PerLabel => {
                let correct =
                    predicted.contains(rule.label()) == gold_labels.contains(rule.label());
                if correct {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        reward_sum += r;
        for (t, g) in total_pos.iter_mut().zip(&run.pos_grad) {
            *t += r * g;
        }
        for (t, g) in total_neg.iter_mut().zip(&run.neg_grad) {
            *t += r * g;
        }
    }
    if total_pos.iter().chain(&total_neg).any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    match scorers {
        ScorerSet::Separate { positive, negative } => {
            ascend(positive.weights_mut(), &total_pos, lr);
            ascend(negative.weights_mut(), &total_neg, lr);
        }
        ScorerSet::Shared(scorer) => {
            ascend(scorer.weights_mut(), &total_pos, lr);
            ascend(scorer.weights_mut(), &total_neg, lr);
        }
    }
    Ok(match reward_mode {
        RewardMode::PerCase => case_reward,
        RewardMode::PerLabel => {
            if rules.is_empty() {
                case_reward
            } else {
                reward_sum / rules.len() as f64
            }
        }
    })
}

fn ascend(weights: &mut [f64], grad: &[f64], lr: f64) {
    for (w, g) in weights.iter_mut().zip(grad) {
        *w += lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::RuleSource;
    use crate::engine::compile_rule;
    use crate::layout::LayoutConfig;
    use crate::soft::sigmoid;
    use crate::token::{Tokenizer, TokenizerMode};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn orthonormal(tokens: &[&str]) -> EmbeddingTable {
        let dim = tokens.len();
        EmbeddingTable::from_entries(tokens.iter().enumerate().map(|(k, t)| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            (t.to_string(), v)
        }))
        .unwrap()
    }

    fn rng(seed: u64) -> StdRng {
        StdRng::seed_from_u64(seed)
    }

    #[test]
    fn pretraining_positives_match_exact_find() {
        let corpus: Vec<Vec<String>> = vec![toks("a b c"), toks("c d e f"), toks("a a b")];
        let cfg = PretrainConfig {
            ngram_lengths: vec![1, 2],
            samples_per_sentence: 3,
            negative_ratio: 0.5,
            seed: 11,
        };
        let samples = generate_pretraining_data(&corpus, &cfg);
        assert!(!samples.is_empty());
        for s in &samples {
            if s.gold.has_evidence() {
                assert_eq!(s.gold, find_exact(&s.case, &s.pattern));
            } else {
                assert!(!find_exact(&s.case, &s.pattern).has_evidence());
            }
        }
    }

    #[test]
    fn single_sentence_two_gram_sample_is_one_of_the_two() {
        let corpus = vec![toks("a b c")];
        let cfg = PretrainConfig {
            ngram_lengths: vec![2],
            samples_per_sentence: 1,
            negative_ratio: 0.0,
            seed: 3,
        };
        let samples = generate_pretraining_data(&corpus, &cfg);
        assert_eq!(samples.len(), 1);
        let pat = samples[0].pattern.clone();
        assert!(pat == toks("a b") || pat == toks("b c"));
        assert_eq!(samples[0].gold, find_exact(&samples[0].case, &pat));
    }

    #[test]
    fn zero_negative_ratio_yields_no_all_zero_gold() {
        let corpus = vec![toks("a b"), toks("c d")];
        let cfg = PretrainConfig {
            ngram_lengths: vec![1],
            samples_per_sentence: 4,
            negative_ratio: 0.0,
            seed: 9,
        };
        for s in generate_pretraining_data(&corpus, &cfg) {
            assert!(s.gold.has_evidence());
        }
    }

    #[test]
    fn generation_is_deterministic_under_seed() {
        let corpus = vec![toks("a b c d"), toks("e f g")];
        let cfg = PretrainConfig::default();
        assert_eq!(
            generate_pretraining_data(&corpus, &cfg),
            generate_pretraining_data(&corpus, &cfg)
        );
    }

    #[test]
    fn zero_learning_rate_leaves_weights_bit_identical() {
        let table = orthonormal(&["a", "b", "c"]);
        let mut scorer = BilinearScorer::noisy_identity(3, 0.6, vec![1, 2], 0.1, &mut rng(5));
        let before = scorer.weights().to_vec();
        let sample = TrainSample::positive(toks("a b c"), toks("b"));
        train_step(&mut scorer, &table, &sample, 0.0).unwrap();
        assert_eq!(scorer.weights(), &before[..]);
    }

    #[test]
    fn saturated_correct_sample_has_near_zero_loss_and_update() {
        let table = orthonormal(&["a", "b"]);
        // Huge diagonal saturates the sigmoid at the right answers.
        let mut scorer = BilinearScorer::identity(2, 0.6, vec![1]);
        for k in 0..2 {
            scorer.weights_mut()[k * 2 + k] = 50.0;
            for j in 0..2 {
                if j != k {
                    scorer.weights_mut()[k * 2 + j] = -50.0;
                }
            }
        }
        let before = scorer.weights().to_vec();
        let sample = TrainSample::positive(toks("a b a"), toks("a"));
        let loss = train_step(&mut scorer, &table, &sample, 0.1).unwrap();
        assert!(loss.abs() < 1e-9, "loss {loss}");
        for (w, b) in scorer.weights().iter().zip(&before) {
            assert!((w - b).abs() < 1e-9);
        }
    }

    #[test]
    fn scalar_gradient_matches_hand_computation() {
        // One dimension: s = w * vc * vp, p = sigmoid(s),
        // dL/dw = (p - g) * vc * vp.
        let table = EmbeddingTable::from_entries([("a", vec![0.8]), ("b", vec![-0.4])]).unwrap();
        let mut scorer = BilinearScorer::identity(1, 0.6, vec![1]);
        scorer.weights_mut()[0] = 0.7;
        let sample = TrainSample::positive(toks("a b"), toks("a"));
        let (_, grad) = loss_and_grad(&scorer, &table, &sample).unwrap();
        let expected: f64 = [
            (0.8_f64, 1.0_f64), // token a, gold 1
            (-0.4, 0.0),        // token b, gold 0
        ]
        .iter()
        .map(|&(vc, g)| {
            let p = sigmoid(0.7 * vc * 0.8);
            (p - g) * vc * 0.8
        })
        .sum();
        assert!((grad[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_agree_with_the_analytic_gradient() {
        let mut r = rng(42);
        let tokens = ["a", "b", "c", "d", "e"];
        let dim = 4;
        let table = EmbeddingTable::from_entries(tokens.iter().map(|t| {
            let v: Vec<f64> = (0..dim).map(|_| super::super::gaussian(&mut r)).collect();
            (t.to_string(), v)
        }))
        .unwrap();
        let scorer = BilinearScorer::noisy_identity(dim, 0.6, vec![1, 2], 0.2, &mut r);
        let sample = TrainSample::positive(toks("a b c d e a"), toks("c d"));
        let err = grad_check(&scorer, &table, &sample, 1e-5, &mut r).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn one_dimensional_grad_check_is_tight() {
        let table =
            EmbeddingTable::from_entries([("a", vec![0.6]), ("b", vec![-0.9])]).unwrap();
        let mut scorer = BilinearScorer::identity(1, 0.6, vec![1]);
        scorer.weights_mut()[0] = 0.4;
        let sample = TrainSample::positive(toks("a b a"), toks("a"));
        let err = grad_check(&scorer, &table, &sample, 1e-5, &mut rng(8)).unwrap();
        assert!(err <= 1e-6, "scalar case error {err}");
    }

    #[test]
    fn saturated_zero_gradient_check_uses_the_floor() {
        let table = orthonormal(&["a", "b"]);
        let mut scorer = BilinearScorer::identity(2, 0.6, vec![1]);
        for k in 0..2 {
            scorer.weights_mut()[k * 2 + k] = 60.0;
            for j in 0..2 {
                if j != k {
                    scorer.weights_mut()[k * 2 + j] = -60.0;
                }
            }
        }
        let sample = TrainSample::positive(toks("a b"), toks("a"));
        let err = grad_check(&scorer, &table, &sample, 1e-5, &mut rng(1)).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    fn compile(text: &str, label: &str) -> CompiledRule {
        let src = RuleSource::new(format!("r-{label}"), label, text);
        let tok = Tokenizer::new(TokenizerMode::Whitespace);
        compile_rule(&src, &tok, &LayoutConfig::default()).unwrap()
    }

    #[test]
    fn positive_reward_raises_sampled_matched_tokens() {
        let table = orthonormal(&["a", "b"]);
        // Moderate diagonal: p(a|a) = sigmoid(2) ~ 0.88, almost always sampled 1.
        let mut scorer = BilinearScorer::identity(2, 0.6, vec![1]);
        scorer.weights_mut().copy_from_slice(&[2.0, 0.0, 0.0, 2.0]);
        let rules = vec![compile("a@@", "L")];
        let case = toks("a b");
        let gold: BTreeSet<String> = ["L".to_string()].into();
        let mut r = rng(2);
        let mut scorers = ScorerSet::Separate {
            negative: scorer.clone(),
            positive: scorer,
        };
        let before = scorers.positive().weights()[0];
        let mut reward_seen = 0.0;
        for _ in 0..20 {
            reward_seen += rl_finetune_step(
                &rules,
                &case,
                &gold,
                &mut scorers,
                &table,
                0.05,
                RewardMode::PerCase,
                &mut r,
            )
            .unwrap();
        }
        assert!(reward_seen > 0.0, "mostly correct predictions expected");
        let after = scorers.positive().weights()[0];
        assert!(
            after > before,
            "W[0,0] should grow: before {before} after {after}"
        );
    }

    #[test]
    fn degenerate_probabilities_contribute_zero_gradient() {
        let table = orthonormal(&["a", "b"]);
        // Saturated weights give p in {~0, ~1}; sampling is deterministic
        // and (b - p) vanishes, so W must stay put.
        let mut scorer = BilinearScorer::identity(2, 0.6, vec![1]);
        for k in 0..2 {
            scorer.weights_mut()[k * 2 + k] = 60.0;
            for j in 0..2 {
                if j != k {
                    scorer.weights_mut()[k * 2 + j] = -60.0;
                }
            }
        }
        let before = scorer.weights().to_vec();
        let rules = vec![compile("a@@", "L")];
        let gold: BTreeSet<String> = ["L".to_string()].into();
        let mut scorers = ScorerSet::Shared(scorer);
        let mut r = rng(3);
        for _ in 0..5 {
            rl_finetune_step(
                &rules,
                &toks("a b"),
                &gold,
                &mut scorers,
                &table,
                0.1,
                RewardMode::PerCase,
                &mut r,
            )
            .unwrap();
        }
        for (w, b) in scorers.positive().weights().iter().zip(&before) {
            assert!((w - b).abs() < 1e-12);
        }
    }
}
