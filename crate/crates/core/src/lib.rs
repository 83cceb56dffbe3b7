//! Core library for synthesizing, analyzing, and probing instruction-tuning
//! corpora distilled from a chat-completion teacher endpoint.
//!
//! The main building blocks:
//!
//! - [`corpus`] — JSONL-backed store of instruction records with dedup,
//!   sampling, and per-subset statistics
//! - [`promptgen`] — instruction-generation prompt rendering
//! - [`topics`] — Wikipedia category ingestion and common-topic filtering
//! - [`teacher`] — chat/moderation/embedding clients with retry, backoff,
//!   and a bounded in-flight pool, plus a programmable mock transport
//! - [`parsegen`] — extraction of `<example>`-tagged batches from raw
//!   teacher output
//! - [`diversity`] — TTR/MATTR, pairwise cosine statistics, PCA projection
//! - [`probes`] — hallucination question-rejection harness, toxicity probe,
//!   human-rating ingestion
//! - [`pipeline`] — round-based generation and resumable response filling
//! - [`report`] — Markdown report assembly from emitted artifacts

pub mod corpus;
pub mod diversity;
pub mod parsegen;
pub mod pipeline;
pub mod probes;
pub mod promptgen;
pub mod report;
pub mod teacher;
pub mod tokenize;
pub mod topics;
