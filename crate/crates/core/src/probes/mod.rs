//! Model-behavior probes: the hallucination question-rejection harness,
//! the toxicity completion probe, and human-rating ingestion.

pub mod hallucination;
pub mod ratings;
pub mod toxicity;

pub use hallucination::{
    load_hallucination_set, run_hallucination_probe, score_hallucination, HallucinationCategory,
    HallucinationItem, HallucinationScore, Label, LabelSource, ProbeOptions, ProbeResult,
};
pub use ratings::{ingest_ratings, summarize_ratings, Grade, ModelSummary, Rating};
pub use toxicity::{
    run_toxicity_probe, select_toxicity_prompts, Bucket, ToxicityPrompt, ToxicityReport,
    ToxicityResult, TOXICITY_INSTRUCTION_PREFIX,
};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("question set must have exactly 40 items with 10 per category; {0}")]
    BadShape(String),
    #[error("results without labels: ids {0:?}")]
    Unlabeled(Vec<u32>),
    #[error("malformed result line {line}: {message}")]
    MalformedResult { line: usize, message: String },
    #[error("teacher: {0}")]
    Teacher(#[from] crate::teacher::TeacherError),
}
