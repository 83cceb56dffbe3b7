//! Round-based instruction generation and resumable response filling —
//! the flows the CLI commands drive.
//!
//! Generation: per round, sample three seeds (plus three topics when
//! topic-guided), render the prompt, ask the teacher for a batch, parse,
//! validate, and append records the store has not seen yet (first
//! occurrence wins, keyed by the normalized instruction).
//!
//! Response filling: every completed response is appended to a progress
//! sidecar before anything else happens, so an interrupted run never
//! re-queries an already-answered record.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_key, CorpusError, CorpusStore, InstructionRecord, SubsetTag};
use crate::parsegen;
use crate::promptgen::{self, PromptError, PromptSpec, SeedRecord, SourceFamily};
use crate::teacher::{hash_hex, parallel_map, TeacherClient, TeacherError};
use crate::topics::{self, TopicError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub family: SourceFamily,
    pub rounds: usize,
    pub seed: u64,
    /// Topic titles for topic-guided generation (self-instruct only).
    pub topic_pool: Option<Vec<String>>,
    pub length_cap: usize,
    /// Pinned record timestamp; None means now. Pin it for reproducible
    /// corpus files.
    pub timestamp: Option<String>,
}

impl GenerationOptions {
    pub fn new(family: SourceFamily, rounds: usize, seed: u64) -> Self {
        GenerationOptions {
            family,
            rounds,
            seed,
            topic_pool: None,
            length_cap: parsegen::DEFAULT_LENGTH_CAP,
            timestamp: None,
        }
    }

    fn subset(&self) -> SubsetTag {
        match (self.family, self.topic_pool.is_some()) {
            (SourceFamily::SelfInstruct, false) => SubsetTag::GenSi,
            (SourceFamily::SelfInstruct, true) => SubsetTag::GenTopicSi,
            (SourceFamily::P3, _) => SubsetTag::GenP3,
            (SourceFamily::Flan, _) => SubsetTag::GenFlan,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct GenerationSummary {
    pub rounds_run: usize,
    pub parsed_examples: usize,
    pub appended: usize,
    /// Cross-batch duplicates skipped against the store.
    pub duplicates_skipped: usize,
    /// Within-batch parser rejections plus validation failures.
    pub rejected: usize,
    pub shortfall: usize,
    /// Per-round teacher failures; the run continues past them.
    pub round_errors: Vec<(usize, String)>,
}

fn round_seed(base: u64, round: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(round as u64)
}

fn make_record(
    text: &str,
    subset: SubsetTag,
    spec: &PromptSpec,
    model: &str,
    timestamp: &str,
) -> InstructionRecord {
    let key = normalize_key(text);
    let mut record = InstructionRecord::new(
        format!("{}-{}", subset.as_str(), hash_hex(&key, 16)),
        text.to_string(),
        subset,
    );
    record.meta.model = model.to_string();
    record.meta.timestamp = timestamp.to_string();
    record.meta.prompt_hash = hash_hex(&spec.rendered_text, 16);
    record.meta.topics = spec.topics.as_ref().map(|t| t.to_vec()).unwrap_or_default();
    record
}

/// Runs `rounds` prompt/parse rounds, appending new unique records to the
/// store. Deterministic for a fixed seed and teacher.
pub fn run_generation_rounds(
    client: &TeacherClient,
    store: &mut CorpusStore,
    seed_pool: &[SeedRecord],
    options: &GenerationOptions,
) -> Result<GenerationSummary, PipelineError> {
    let subset = options.subset();
    let timestamp = options
        .timestamp
        .clone()
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339());
    let model = client.config().model_name.clone();
    let mut seen: HashSet<String> = store
        .records()
        .iter()
        .map(|r| normalize_key(&r.instruction))
        .collect();
    let mut summary = GenerationSummary::default();

    for round in 0..options.rounds {
        let rseed = round_seed(options.seed, round);
        let seeds = promptgen::sample_seeds(seed_pool, options.family, rseed)?;
        let spec = match &options.topic_pool {
            Some(titles) => {
                let picked = topics::sample_topic_titles(titles, rseed ^ 0x746f_7069)?;
                promptgen::render_topic_guided(&seeds, &picked)?
            }
            None => promptgen::render_example_guided(&seeds, options.family)?,
        };
        summary.rounds_run += 1;
        let batch = match client.generate_instruction_batch(&spec) {
            Ok(batch) => batch,
            Err(e) => {
                summary.round_errors.push((round, e.to_string()));
                continue;
            }
        };
        summary.parsed_examples += batch.examples.len();
        summary.rejected += batch.rejected.len();
        summary.shortfall += batch.shortfall;
        for example in &batch.examples {
            let text = match parsegen::validate_example(example, options.length_cap) {
                Ok(text) => text,
                Err(_) => {
                    summary.rejected += 1;
                    continue;
                }
            };
            let key = normalize_key(text);
            if !seen.insert(key) {
                summary.duplicates_skipped += 1;
                continue;
            }
            store.append(make_record(text, subset, &spec, &model, &timestamp))?;
            summary.appended += 1;
        }
    }
    Ok(summary)
}

/// One line of the response-filling progress sidecar.
#[derive(Debug, Serialize, Deserialize)]
struct ProgressLine {
    id: String,
    response: String,
}

/// Applies a progress sidecar onto records; returns how many responses it
/// carried over.
pub fn apply_progress(
    records: &mut [InstructionRecord],
    progress_path: &Path,
) -> Result<usize, PipelineError> {
    if !progress_path.exists() {
        return Ok(0);
    }
    let mut by_id: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    let reader = BufReader::new(std::fs::File::open(progress_path)?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(entry) = serde_json::from_str::<ProgressLine>(&line) {
            by_id.insert(entry.id, entry.response);
        }
    }
    let mut applied = 0;
    for record in records.iter_mut() {
        if record.response.is_none() {
            if let Some(response) = by_id.get(&record.id) {
                record.response = Some(response.clone());
                applied += 1;
            }
        }
    }
    Ok(applied)
}

#[derive(Debug, Default)]
pub struct FillSummary {
    pub already_answered: usize,
    pub resumed_from_progress: usize,
    pub filled: usize,
    pub errors: Vec<(String, String)>,
}

/// Generates responses for every record lacking one, querying the teacher
/// with the record's fused instruction. Completions land in the progress
/// sidecar as they arrive; call sites merge and rewrite the corpus file
/// afterwards and may then remove the sidecar.
pub fn fill_responses(
    client: &TeacherClient,
    records: &mut [InstructionRecord],
    progress_path: &Path,
) -> Result<FillSummary, PipelineError> {
    let mut summary = FillSummary {
        already_answered: records.iter().filter(|r| r.response.is_some()).count(),
        ..FillSummary::default()
    };
    summary.resumed_from_progress = apply_progress(records, progress_path)?;
    summary.already_answered += summary.resumed_from_progress;

    let pending: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.response.is_none())
        .map(|(i, _)| i)
        .collect();
    if pending.is_empty() {
        return Ok(summary);
    }

    let progress_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(progress_path)?;
    let progress = Mutex::new(BufWriter::new(progress_file));

    let records_view: &[InstructionRecord] = records;
    let outcomes: Vec<(usize, Result<String, String>)> =
        parallel_map(&pending, client.max_in_flight(), |_, &record_index| {
            let record = &records_view[record_index];
            let fused =
                promptgen::fuse_instruction_input(&record.instruction, record.input.as_deref())
                    .map_err(|e| e.to_string());
            let outcome = fused.and_then(|instruction| {
                client
                    .generate_response(&instruction)
                    .map_err(|e| e.to_string())
            });
            if let Ok(response) = &outcome {
                let line = ProgressLine {
                    id: record.id.clone(),
                    response: response.clone(),
                };
                let mut writer = progress.lock().unwrap();
                if let Ok(json) = serde_json::to_string(&line) {
                    let _ = writeln!(writer, "{json}");
                    let _ = writer.flush();
                }
            }
            (record_index, outcome)
        });

    for (record_index, outcome) in outcomes {
        match outcome {
            Ok(response) => {
                records[record_index].response = Some(response);
                summary.filled += 1;
            }
            Err(message) => {
                summary
                    .errors
                    .push((records[record_index].id.clone(), message));
            }
        }
    }
    Ok(summary)
}
