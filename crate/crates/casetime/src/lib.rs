//! Relative clinical timelines from case-report corpora.
//!
//! `casetime` turns a directory of PMOA-style full-text articles into
//! evaluated event timelines: it finds case reports, asks a chat-completion
//! model to extract `(event, hours-from-presentation)` pairs with a fixed
//! prompt protocol, aligns those events against reference annotations, and
//! scores temporal agreement.
//!
//! # Pipeline
//!
//! ```text
//! corpus dir ──extract──> manifest ──annotate──> timelines (CSV)
//!                                        │
//!          reference CSVs ──────────┐    │
//!                                   ▼    ▼
//!                              match / evaluate / agree
//!                                        │
//!                                        ▼
//!                    eval reports (JSON) ──report──> summary + tables
//! ```
//!
//! Every stage works offline: matching falls back to a character-trigram
//! embedder, and the annotate stage accepts canned fixture responses.
//!
//! # Examples
//!
//! One runnable example per capability (all offline):
//!
//! - **`extract_and_sample`**: corpus scan, eligibility manifest, seeded
//!   reproducible sampling.
//! - **`render_prompt`**: the annotation prompt template and token-budget
//!   truncation.
//! - **`annotate_offline`**: the annotate/feedback protocol against a
//!   fixture transport.
//! - **`match_events`**: distance matrices, the recursive best match, and
//!   its audit trail.
//! - **`evaluate_timelines`**: concordance, time errors, subgroup
//!   breakdowns, and the JSON report.
//! - **`full_pipeline_offline`**: the whole CLI chain in a temp dir.
//!
//! ```bash
//! cargo run -p casetime --example match_events
//! ```
//!
//! # Modules
//!
//! - [`corpus`]: article-body slicing, case-report filter, corpus scan,
//!   seeded sampling, manifest format.
//! - [`timeline`]: the timeline model, bar-separated LLM output parsing,
//!   CSV serialization, descriptive statistics.
//! - [`prompt`]: the packaged base prompt, template rendering,
//!   token-budget truncation.
//! - [`chat`]: chat transports (HTTP, fixtures, caching, pacing) and the
//!   annotate/feedback protocol.
//! - [`embed`]: embedding backends (remote HTTP, trigram fallback) and
//!   cosine distance.
//! - [`matching`]: Levenshtein distance, distance matrices, the recursive
//!   best-match alignment, audit exports.
//! - [`metrics`]: concordance, absolute time errors, subgroup and
//!   distribution histograms, match-rate curves.
//! - [`report`]: per-report evaluation, corpus aggregation, JSON and
//!   table emission.
//! - [`cli`]: the `casetime` binary's subcommands.

pub mod chat;
pub mod cli;
pub mod corpus;
pub mod embed;
pub mod matching;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod timeline;
pub mod util;
