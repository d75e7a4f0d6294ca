//! `softrules` command line: compile rules to action sequences, match and
//! evaluate corpora, train the soft Find scorer, and explain matches.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use softrules::config::EngineConfig;
use softrules::corpus::{load_corpus, split_corpus, CorpusRecord};
use softrules::dialect::load_rules;
use softrules::engine::{
    classify, compile_ruleset, evaluate, explain, CompiledRule, ExactMatcher, SoftMatcher,
};
use softrules::layout::{FindProvider, LayoutConfig};
use softrules::soft::{
    generate_pretraining_data, grad_check, rl_finetune_step, train_step, BilinearScorer,
    EmbeddingTable, PretrainConfig, RewardMode, ScorerSet, TrainSample,
};
use softrules::token::{Tokenizer, TokenizerMode};

const CONFIG_ENV: &str = "SOFTRULES_CONFIG";

#[derive(Parser)]
#[command(
    name = "softrules",
    version,
    about = "Rule engine over an extended regular-expression dialect with exact or embedding-based soft matching"
)]
struct Cli {
    /// Flat `key = value` config file; SOFTRULES_CONFIG is used when unset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print each rule's linearized action sequence.
    Compile(CompileArgs),
    /// Label a corpus: one `id<TAB>labels` line per case.
    Match(MatchArgs),
    /// Match a corpus and score predictions against its gold labels.
    Eval(EvalArgs),
    /// Pretrain a soft Find scorer on sampled pattern/sentence pairs.
    TrainFind(TrainFindArgs),
    /// Finetune scorers with rule-level reinforcement.
    Finetune(FinetuneArgs),
    /// Show the per-instruction trace of one rule on one case.
    Explain(ExplainArgs),
    /// Compare the analytic training gradient with finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct SharedOpts {
    /// Tokenizer mode: char, word or whitespace.
    #[arg(long)]
    mode: Option<String>,
    /// Keep multi-token literals as n-gram Finds instead of chains.
    #[arg(long)]
    no_decompose: bool,
    /// Longest n-gram for a single Find when not decomposing.
    #[arg(long)]
    max_find_ngram: Option<usize>,
    /// Word-mode segmentation lexicon, one word per line.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct SoftOpts {
    /// Use the soft matcher instead of exact token matching.
    #[arg(long)]
    soft: bool,
    /// Word-vector table in text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Scorer checkpoint for Find_Positive (and Find_Negative when shared
    /// or when --neg-checkpoint is not given).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Separate checkpoint for Find_Negative.
    #[arg(long)]
    neg_checkpoint: Option<PathBuf>,
    /// One scorer serves both polarities.
    #[arg(long)]
    shared_scorer: bool,
}

#[derive(Args)]
struct SplitOpts {
    /// Split ratios `train,validation,test` (must sum to 1).
    #[arg(long)]
    ratios: Option<String>,
    /// Shuffle seed for the split.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Which slice to use: train, validation or test.
    #[arg(long, default_value = "train")]
    slice: String,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[command(flatten)]
    shared: SharedOpts,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    shared: SharedOpts,
    #[command(flatten)]
    soft: SoftOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Report files are written as `<prefix>.txt` and `<prefix>.csv`.
    #[arg(long)]
    report_prefix: Option<PathBuf>,
    #[command(flatten)]
    shared: SharedOpts,
    #[command(flatten)]
    soft: SoftOpts,
    #[command(flatten)]
    split: SplitOpts,
}

#[derive(Args)]
struct TrainFindArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out_checkpoint: PathBuf,
    /// Appends one `epoch,loss` row per epoch.
    #[arg(long)]
    loss_log: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Slide window sizes, e.g. `1,2,3`.
    #[arg(long)]
    windows: Option<String>,
    /// Sampled pattern lengths, e.g. `1,2`.
    #[arg(long, default_value = "1,2")]
    ngram_lengths: String,
    #[arg(long, default_value_t = 2)]
    samples_per_sentence: usize,
    #[arg(long, default_value_t = 1.0)]
    negative_ratio: f64,
    #[command(flatten)]
    shared: SharedOpts,
    #[command(flatten)]
    split: SplitOpts,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    neg_checkpoint: Option<PathBuf>,
    #[arg(long)]
    shared_scorer: bool,
    #[arg(long)]
    out_checkpoint: PathBuf,
    /// Separate output for the negative scorer (defaults to
    /// `<out-checkpoint>.neg` when scorers are separate).
    #[arg(long)]
    out_neg_checkpoint: Option<PathBuf>,
    /// Appends one `epoch,reward` row per epoch.
    #[arg(long)]
    reward_log: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reward each rule by its own label instead of the whole label set.
    #[arg(long)]
    per_label_reward: bool,
    #[command(flatten)]
    shared: SharedOpts,
    #[command(flatten)]
    split: SplitOpts,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    rule_id: String,
    #[arg(long)]
    case_id: String,
    #[command(flatten)]
    shared: SharedOpts,
    #[command(flatten)]
    soft: SoftOpts,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    draws: usize,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = EngineConfig::default();
    let config_path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = config_path {
        cfg.merge_file(&path)
            .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    }
    match cli.command {
        Command::Compile(args) => cmd_compile(args, cfg),
        Command::Match(args) => cmd_match(args, cfg),
        Command::Eval(args) => cmd_eval(args, cfg),
        Command::TrainFind(args) => cmd_train_find(args, cfg),
        Command::Finetune(args) => cmd_finetune(args, cfg),
        Command::Explain(args) => cmd_explain(args, cfg),
        Command::GradCheck(args) => cmd_grad_check(args, cfg),
    }
}

fn apply_shared(cfg: &mut EngineConfig, shared: &SharedOpts) -> Result<(), CliError> {
    if let Some(mode) = &shared.mode {
        cfg.mode = mode
            .parse::<TokenizerMode>()
            .map_err(CliError::Usage)?;
    }
    if shared.no_decompose {
        cfg.decompose_literals = false;
    }
    if let Some(n) = shared.max_find_ngram {
        cfg.max_find_ngram = n;
    }
    if let Some(path) = &shared.lexicon {
        cfg.lexicon_path = Some(path.clone());
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

fn tokenizer_for(cfg: &EngineConfig) -> Result<Tokenizer, CliError> {
    match cfg.mode {
        TokenizerMode::Word => {
            let path = cfg.lexicon_path.as_ref().ok_or_else(|| {
                CliError::Usage("word mode needs --lexicon (or lexicon_path in the config)".into())
            })?;
            let content = fs::read_to_string(path)
                .map_err(|e| CliError::data(&path.display().to_string(), e))?;
            Ok(Tokenizer::with_lexicon(
                content.lines().map(str::trim).filter(|l| !l.is_empty()),
            ))
        }
        mode => Ok(Tokenizer::new(mode)),
    }
}

fn layout_for(cfg: &EngineConfig) -> LayoutConfig {
    LayoutConfig {
        decompose_literals: cfg.decompose_literals,
        max_find_ngram: cfg.max_find_ngram,
    }
}

fn required_path(
    flag: Option<PathBuf>,
    from_config: Option<PathBuf>,
    what: &str,
) -> Result<PathBuf, CliError> {
    flag.or(from_config)
        .ok_or_else(|| CliError::Usage(format!("missing --{what}")))
}

fn load_compiled_rules(
    path: &Path,
    tokenizer: &Tokenizer,
    layout: &LayoutConfig,
) -> Result<Vec<CompiledRule>, CliError> {
    let sources = load_rules(path).map_err(|e| CliError::data(&path.display().to_string(), e))?;
    compile_ruleset(&sources, tokenizer, layout)
        .map_err(|e| CliError::data(&path.display().to_string(), e))
}

fn load_records(path: &Path, tokenizer: &Tokenizer) -> Result<Vec<CorpusRecord>, CliError> {
    load_corpus(path, tokenizer).map_err(|e| CliError::data(&path.display().to_string(), e))
}

fn parse_ratios(text: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad --ratios `{text}`")))?;
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--ratios needs three comma-separated numbers, got `{text}`"
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn apply_split<T>(
    records: Vec<T>,
    split: &SplitOpts,
    cfg: &EngineConfig,
) -> Result<Vec<T>, CliError> {
    let Some(ratios) = &split.ratios else {
        return Ok(records);
    };
    let ratios = parse_ratios(ratios)?;
    let seed = split.split_seed.unwrap_or(cfg.seed);
    let (train, validation, test) = split_corpus(records, ratios, seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match split.slice.as_str() {
        "train" => Ok(train),
        "validation" | "valid" => Ok(validation),
        "test" => Ok(test),
        other => Err(CliError::Usage(format!(
            "unknown --slice `{other}` (expected train, validation or test)"
        ))),
    }
}

/// Matcher selected by the soft flags. Owns the loaded table and scorers.
enum MatcherKind {
    Exact,
    Soft {
        table: EmbeddingTable,
        scorers: ScorerSet,
    },
}

impl MatcherKind {
    fn provider(&self) -> Box<dyn FindProvider + '_> {
        match self {
            MatcherKind::Exact => Box::new(ExactMatcher),
            MatcherKind::Soft { table, scorers } => Box::new(SoftMatcher { table, scorers }),
        }
    }
}

fn build_matcher(soft: &SoftOpts, cfg: &EngineConfig) -> Result<MatcherKind, CliError> {
    if !soft.soft {
        return Ok(MatcherKind::Exact);
    }
    let emb_path = required_path(soft.embeddings.clone(), cfg.embeddings_path.clone(), "embeddings")?;
    let ckpt_path = required_path(soft.checkpoint.clone(), cfg.checkpoint_path.clone(), "checkpoint")?;
    let table = EmbeddingTable::load(&emb_path)
        .map_err(|e| CliError::data(&emb_path.display().to_string(), e))?;
    let positive = BilinearScorer::load(&ckpt_path)
        .map_err(|e| CliError::data(&ckpt_path.display().to_string(), e))?;
    if positive.dim() != table.dim() {
        return Err(CliError::Data(format!(
            "checkpoint dimension {} does not match embeddings dimension {}",
            positive.dim(),
            table.dim()
        )));
    }
    let scorers = if soft.shared_scorer || cfg.shared_scorer {
        ScorerSet::Shared(positive)
    } else {
        let negative = match &soft.neg_checkpoint {
            Some(path) => BilinearScorer::load(path)
                .map_err(|e| CliError::data(&path.display().to_string(), e))?,
            None => positive.clone(),
        };
        ScorerSet::Separate { positive, negative }
    };
    Ok(MatcherKind::Soft { table, scorers })
}

fn cmd_compile(args: CompileArgs, mut cfg: EngineConfig) -> Result<(), CliError> {
    apply_shared(&mut cfg, &args.shared)?;
    let rules_path = required_path(args.rules, cfg.rules_path.clone(), "rules")?;
    let tokenizer = tokenizer_for(&cfg)?;
    let rules = load_compiled_rules(&rules_path, &tokenizer, &layout_for(&cfg))?;
    for rule in &rules {
        println!("{}", rule.program.to_text());
    }
    Ok(())
}

fn cmd_match(args: MatchArgs, mut cfg: EngineConfig) -> Result<(), CliError> {
    apply_shared(&mut cfg, &args.shared)?;
    let rules_path = required_path(args.rules, cfg.rules_path.clone(), "rules")?;
    let corpus_path = required_path(args.corpus, cfg.corpus_path.clone(), "corpus")?;
    let tokenizer = tokenizer_for(&cfg)?;
    let rules = load_compiled_rules(&rules_path, &tokenizer, &layout_for(&cfg))?;
    let records = load_records(&corpus_path, &tokenizer)?;
    let matcher = build_matcher(&args.soft, &cfg)?;
    let provider = matcher.provider();
    let mut out = String::new();
    for record in &records {
        let labels = classify(&rules, &record.tokens, provider.as_ref())
            .map_err(|e| CliError::data(&record.id, e))?;
        let labels: Vec<String> = labels.into_iter().collect();
        out.push_str(&format!("{}\t{}\n", record.id, labels.join(",")));
    }
    match &args.out {
        Some(path) => fs::write(path, out)
            .map_err(|e| CliError::data(&path.display().to_string(), e))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs, mut cfg: EngineConfig) -> Result<(), CliError> {
    apply_shared(&mut cfg, &args.shared)?;
    let rules_path = required_path(args.rules, cfg.rules_path.clone(), "rules")?;
    let corpus_path = required_path(args.corpus, cfg.corpus_path.clone(), "corpus")?;
    let tokenizer = tokenizer_for(&cfg)?;
    let rules = load_compiled_rules(&rules_path, &tokenizer, &layout_for(&cfg))?;
    let records = load_records(&corpus_path, &tokenizer)?;
    let records = apply_split(records, &args.split, &cfg)?;
    let matcher = build_matcher(&args.soft, &cfg)?;
    let provider = matcher.provider();
    let report = evaluate(&rules, &records, provider.as_ref())
        .map_err(|e| CliError::data(&corpus_path.display().to_string(), e))?;
    print!("{}", report.render_table());
    if let Some(prefix) = &args.report_prefix {
        let txt = prefix.with_extension("txt");
        let csv = prefix.with_extension("csv");
        fs::write(&txt, report.render_table())
            .map_err(|e| CliError::data(&txt.display().to_string(), e))?;
        fs::write(&csv, report.render_csv())
            .map_err(|e| CliError::data(&csv.display().to_string(), e))?;
    }
    Ok(())
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    let items: Result<Vec<usize>, _> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect();
    items
        .ok()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("bad --{flag} `{text}`")))
}

fn append_log(path: &Path, rows: &[(usize, f64)]) -> Result<(), CliError> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    for (epoch, value) in rows {
        writeln!(file, "{epoch},{value}")
            .map_err(|e| CliError::data(&path.display().to_string(), e))?;
    }
    Ok(())
}

fn cmd_train_find(args: TrainFindArgs, mut cfg: EngineConfig) -> Result<(), CliError> {
    apply_shared(&mut cfg, &args.shared)?;
    if let Some(theta) = args.theta {
        cfg.theta = theta;
    }
    let corpus_path = required_path(args.corpus, cfg.corpus_path.clone(), "corpus")?;
    let emb_path = required_path(args.embeddings, cfg.embeddings_path.clone(), "embeddings")?;
    let tokenizer = tokenizer_for(&cfg)?;
    let records = load_records(&corpus_path, &tokenizer)?;
    let records = apply_split(records, &args.split, &cfg)?;
    let table = EmbeddingTable::load(&emb_path)
        .map_err(|e| CliError::data(&emb_path.display().to_string(), e))?;

    let sentences: Vec<Vec<String>> = records.iter().map(|r| r.tokens.clone()).collect();
    let seed = args.seed.unwrap_or(cfg.seed);
    let pretrain = PretrainConfig {
        ngram_lengths: parse_usize_list(&args.ngram_lengths, "ngram-lengths")?,
        samples_per_sentence: args.samples_per_sentence,
        negative_ratio: args.negative_ratio,
        seed,
    };
    let samples = generate_pretraining_data(&sentences, &pretrain);
    if samples.is_empty() {
        return Err(CliError::Data("no training samples generated".into()));
    }
    let windows = match &args.windows {
        Some(w) => parse_usize_list(w, "windows")?,
        None => cfg.positive_windows.clone(),
    };
    let mut rng = StdRng::seed_from_u64(seed);
    let mut scorer =
        BilinearScorer::noisy_identity(table.dim(), cfg.theta, windows, 0.01, &mut rng);
    let epochs = args.epochs.unwrap_or(cfg.epoch_cap);
    let lr = args.lr.unwrap_or(cfg.pretrain_lr);
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut total = 0.0;
        for sample in &samples {
            total += train_step(&mut scorer, &table, sample, lr)
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        log.push((epoch + 1, total / samples.len() as f64));
    }
    append_log(&args.loss_log, &log)?;
    scorer
        .save(&args.out_checkpoint)
        .map_err(|e| CliError::data(&args.out_checkpoint.display().to_string(), e))?;
    println!(
        "trained {} epochs on {} samples; final mean loss {:.6}",
        epochs,
        samples.len(),
        log.last().map(|(_, l)| *l).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_finetune(args: FinetuneArgs, mut cfg: EngineConfig) -> Result<(), CliError> {
    apply_shared(&mut cfg, &args.shared)?;
    let rules_path = required_path(args.rules, cfg.rules_path.clone(), "rules")?;
    let corpus_path = required_path(args.corpus, cfg.corpus_path.clone(), "corpus")?;
    let emb_path = required_path(args.embeddings, cfg.embeddings_path.clone(), "embeddings")?;
    let ckpt_path = required_path(args.checkpoint, cfg.checkpoint_path.clone(), "checkpoint")?;
    let tokenizer = tokenizer_for(&cfg)?;
    let rules = load_compiled_rules(&rules_path, &tokenizer, &layout_for(&cfg))?;
    let records = load_records(&corpus_path, &tokenizer)?;
    let records = apply_split(records, &args.split, &cfg)?;
    if records.is_empty() {
        return Err(CliError::Data("selected corpus slice is empty".into()));
    }
    let table = EmbeddingTable::load(&emb_path)
        .map_err(|e| CliError::data(&emb_path.display().to_string(), e))?;
    let positive = BilinearScorer::load(&ckpt_path)
        .map_err(|e| CliError::data(&ckpt_path.display().to_string(), e))?;
    let mut scorers = if args.shared_scorer || cfg.shared_scorer {
        ScorerSet::Shared(positive)
    } else {
        let negative = match &args.neg_checkpoint {
            Some(path) => BilinearScorer::load(path)
                .map_err(|e| CliError::data(&path.display().to_string(), e))?,
            None => positive.clone(),
        };
        ScorerSet::Separate { positive, negative }
    };

    let reward_mode = if args.per_label_reward || cfg.reward_per_label {
        RewardMode::PerLabel
    } else {
        RewardMode::PerCase
    };
    let epochs = args.epochs.unwrap_or(cfg.epoch_cap);
    let lr = args.lr.unwrap_or(cfg.finetune_lr);
    let mut rng = StdRng::seed_from_u64(args.seed.unwrap_or(cfg.seed));
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut total = 0.0;
        for record in &records {
            total += rl_finetune_step(
                &rules,
                &record.tokens,
                &record.gold_labels,
                &mut scorers,
                &table,
                lr,
                reward_mode,
                &mut rng,
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
        }
        log.push((epoch + 1, total / records.len() as f64));
    }
    append_log(&args.reward_log, &log)?;
    match &scorers {
        ScorerSet::Shared(scorer) => scorer
            .save(&args.out_checkpoint)
            .map_err(|e| CliError::data(&args.out_checkpoint.display().to_string(), e))?,
        ScorerSet::Separate { positive, negative } => {
            positive
                .save(&args.out_checkpoint)
                .map_err(|e| CliError::data(&args.out_checkpoint.display().to_string(), e))?;
            let neg_path = args
                .out_neg_checkpoint
                .clone()
                .unwrap_or_else(|| args.out_checkpoint.with_extension("neg"));
            negative
                .save(&neg_path)
                .map_err(|e| CliError::data(&neg_path.display().to_string(), e))?;
        }
    }
    println!(
        "finetuned {} epochs on {} cases; final mean reward {:.4}",
        epochs,
        records.len(),
        log.last().map(|(_, r)| *r).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_explain(args: ExplainArgs, mut cfg: EngineConfig) -> Result<(), CliError> {
    apply_shared(&mut cfg, &args.shared)?;
    let rules_path = required_path(args.rules, cfg.rules_path.clone(), "rules")?;
    let corpus_path = required_path(args.corpus, cfg.corpus_path.clone(), "corpus")?;
    let tokenizer = tokenizer_for(&cfg)?;
    let rules = load_compiled_rules(&rules_path, &tokenizer, &layout_for(&cfg))?;
    let records = load_records(&corpus_path, &tokenizer)?;
    let rule = rules
        .iter()
        .find(|r| r.id() == args.rule_id)
        .ok_or_else(|| CliError::Data(format!("no rule with id `{}`", args.rule_id)))?;
    let record = records
        .iter()
        .find(|r| r.id == args.case_id)
        .ok_or_else(|| CliError::Data(format!("no case with id `{}`", args.case_id)))?;
    let matcher = build_matcher(&args.soft, &cfg)?;
    let provider = matcher.provider();
    let text = explain(rule, &record.tokens, provider.as_ref())
        .map_err(|e| CliError::data(&record.id, e))?;
    print!("{text}");
    Ok(())
}

fn cmd_grad_check(args: GradCheckArgs, cfg: EngineConfig) -> Result<(), CliError> {
    if args.dim == 0 || args.draws == 0 || args.h <= 0.0 {
        return Err(CliError::Usage(
            "--dim and --draws must be positive, --h must be > 0".into(),
        ));
    }
    let mut rng = StdRng::seed_from_u64(args.seed.unwrap_or(cfg.seed));
    let mut worst: f64 = 0.0;
    for _ in 0..args.draws {
        let n_tokens = rng.gen_range(4..=8);
        let tokens: Vec<String> = (0..n_tokens).map(|k| format!("t{k}")).collect();
        let table = EmbeddingTable::from_entries(tokens.iter().map(|t| {
            let v: Vec<f64> = (0..args.dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            (t.clone(), v)
        }))
        .map_err(|e| CliError::Data(e.to_string()))?;
        let scorer = BilinearScorer::noisy_identity(args.dim, cfg.theta, vec![1, 2], 0.25, &mut rng);
        let case_len = rng.gen_range(3..=10);
        let case: Vec<String> = (0..case_len)
            .map(|_| tokens[rng.gen_range(0..n_tokens)].clone())
            .collect();
        let pat_len = rng.gen_range(1..=2.min(case.len()));
        let start = rng.gen_range(0..=case.len() - pat_len);
        let pattern = case[start..start + pat_len].to_vec();
        let sample = TrainSample::positive(case, pattern);
        let err = grad_check(&scorer, &table, &sample, args.h, &mut rng)
            .map_err(|e| CliError::Data(e.to_string()))?;
        worst = worst.max(err);
    }
    println!("{worst:e}");
    if worst > 1e-4 {
        return Err(CliError::Data(format!(
            "max relative error {worst:e} exceeds 1e-4"
        )));
    }
    Ok(())
}
