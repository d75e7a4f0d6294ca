//! softrules: a rule engine that compiles an extended regular-expression
//! dialect into Reverse-Polish programs over six primitive actions and runs
//! them against tokenized text.
//!
//! A rule has a positive part (what must appear) and an optional negative
//! part (what must not), separated by `@@`:
//!
//! ```text
//! island.*</e1>.*farmed for.*<e2>@@<e2>(year|profit).*</e2>
//! ```
//!
//! The pipeline is `dialect` (lex/parse) -> `layout` (linearize to a stack
//! program, execute) -> `labels` (the exact per-token algebra). Find steps
//! are pluggable: [`layout::ExactMatcher`] does literal token matching,
//! while [`engine::SoftMatcher`] scores multi-scale contexts against the
//! pattern with a trainable bilinear form (`soft`), which lets a rule
//! written as "pushed into" also fire on "put inside" when the embeddings
//! are close. `engine` adds multi-label classification and micro-averaged
//! evaluation, `corpus`/`config` handle data files and settings.

pub mod config;
pub mod corpus;
pub mod dialect;
pub mod engine;
pub mod labels;
pub mod layout;
pub mod soft;
pub mod token;
