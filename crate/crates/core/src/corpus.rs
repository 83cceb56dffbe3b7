//! Instruction-record corpus: JSONL persistence, deduplication, seeded
//! sampling, and per-subset statistics.
//!
//! A corpus is a sequence of [`InstructionRecord`]s. Each record belongs to
//! one of seven subsets ([`SubsetTag`]); the union of all subsets is the
//! complete dataset. The JSONL schema is one record per line:
//!
//! ```text
//! {"id": str, "instruction": str, "input": str|null, "response": str|null,
//!  "subset": str, "meta": {"model": str, "timestamp": str, "prompt_hash": str,
//!  "topics": [str]}}
//! ```
//!
//! Unknown fields are preserved on round-trip in lenient mode and rejected
//! in strict mode.

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::tokenize::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("store is not open for writing")]
    ReadOnly,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The seven dataset subsets. `all` is a union view, not a tag a record
/// can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetTag {
    GenSi,
    GenTopicSi,
    GenP3,
    GenFlan,
    Alpaca,
    P3,
    Flan,
}

impl SubsetTag {
    pub const ALL: [SubsetTag; 7] = [
        SubsetTag::GenSi,
        SubsetTag::GenTopicSi,
        SubsetTag::GenP3,
        SubsetTag::GenFlan,
        SubsetTag::Alpaca,
        SubsetTag::P3,
        SubsetTag::Flan,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SubsetTag::GenSi => "gen_si",
            SubsetTag::GenTopicSi => "gen_topic_si",
            SubsetTag::GenP3 => "gen_p3",
            SubsetTag::GenFlan => "gen_flan",
            SubsetTag::Alpaca => "alpaca",
            SubsetTag::P3 => "p3",
            SubsetTag::Flan => "flan",
        }
    }

    pub fn parse(s: &str) -> Option<SubsetTag> {
        SubsetTag::ALL.iter().copied().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for SubsetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GenerationMeta {
    pub model: String,
    /// ISO-8601 timestamp of generation.
    pub timestamp: String,
    pub prompt_hash: String,
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// One instruction/input/response triple with its subset tag and
/// generation metadata. The atom of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub response: Option<String>,
    pub subset: SubsetTag,
    pub meta: GenerationMeta,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl InstructionRecord {
    pub fn new(id: impl Into<String>, instruction: impl Into<String>, subset: SubsetTag) -> Self {
        InstructionRecord {
            id: id.into(),
            instruction: instruction.into(),
            input: None,
            response: None,
            subset,
            meta: GenerationMeta::default(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.instruction.trim().is_empty() {
            return Err(CorpusError::Validation(format!(
                "record {:?} has an empty instruction",
                self.id
            )));
        }
        if self.id.is_empty() {
            return Err(CorpusError::Validation("record id is empty".into()));
        }
        Ok(())
    }

    fn has_unknown_fields(&self) -> bool {
        !self.extra.is_empty() || !self.meta.extra.is_empty()
    }
}

/// Key normalization used everywhere records are compared for identity:
/// leading/trailing whitespace trim, then Unicode NFC. No case folding.
pub fn normalize_key(text: &str) -> String {
    text.trim().nfc().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupKey {
    Instruction,
    InstructionResponsePair,
}

fn record_key(record: &InstructionRecord, key: DedupKey) -> String {
    match key {
        DedupKey::Instruction => normalize_key(&record.instruction),
        DedupKey::InstructionResponsePair => {
            let mut k = normalize_key(&record.instruction);
            k.push('\u{1f}');
            match &record.response {
                Some(r) => k.push_str(&normalize_key(r)),
                None => k.push('\u{0}'),
            }
            k
        }
    }
}

/// Keeps the first occurrence of each key, preserving input order.
/// Returns the surviving records and the number of duplicates dropped.
pub fn dedup(records: Vec<InstructionRecord>, key: DedupKey) -> (Vec<InstructionRecord>, usize) {
    let mut seen = HashSet::with_capacity(records.len());
    let mut unique = Vec::with_capacity(records.len());
    let mut dropped = 0usize;
    for record in records {
        if seen.insert(record_key(&record, key)) {
            unique.push(record);
        } else {
            dropped += 1;
        }
    }
    (unique, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Abort on the first malformed line; unknown fields are malformed.
    Strict,
    /// Skip malformed lines, counting them; unknown fields round-trip.
    Lenient,
}

/// One skipped line from a lenient load.
#[derive(Debug, Clone)]
pub struct SkippedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub skipped: Vec<SkippedLine>,
}

fn parse_line(raw: &str, line_no: usize, mode: LoadMode) -> Result<InstructionRecord, CorpusError> {
    let record: InstructionRecord =
        serde_json::from_str(raw).map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
    if mode == LoadMode::Strict && record.has_unknown_fields() {
        return Err(CorpusError::MalformedLine {
            line: line_no,
            message: "unknown fields present in strict mode".into(),
        });
    }
    record.validate().map_err(|e| CorpusError::MalformedLine {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(record)
}

/// Loads records from a JSONL file. In lenient mode malformed lines are
/// skipped and reported; in strict mode the first one aborts the load.
pub fn load_jsonl(
    path: impl AsRef<Path>,
    mode: LoadMode,
) -> Result<(Vec<InstructionRecord>, LoadReport), CorpusError> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut report = LoadReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, line_no, mode) {
            Ok(record) => records.push(record),
            Err(e) => match mode {
                LoadMode::Strict => return Err(e),
                LoadMode::Lenient => report.skipped.push(SkippedLine {
                    line: line_no,
                    message: e.to_string(),
                }),
            },
        }
    }
    Ok((records, report))
}

/// Writes records to a JSONL file, one per line, replacing any existing
/// content.
pub fn save_jsonl(
    records: &[InstructionRecord],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)
            .map_err(|e| CorpusError::Validation(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Ordered store of instruction records with id uniqueness. Optionally
/// backed by an append-only JSONL file so every accepted append is durable
/// immediately. One writer at a time; snapshot reads are safe concurrently
/// when nothing is appending.
pub struct CorpusStore {
    records: Vec<InstructionRecord>,
    ids: HashSet<String>,
    writer: Option<BufWriter<File>>,
}

impl CorpusStore {
    pub fn in_memory() -> Self {
        CorpusStore {
            records: Vec::new(),
            ids: HashSet::new(),
            writer: None,
        }
    }

    /// Opens (creating if missing) a JSONL-backed store. Existing records
    /// are loaded per `mode`; subsequent appends go straight to disk.
    pub fn open(path: impl AsRef<Path>, mode: LoadMode) -> Result<(Self, LoadReport), CorpusError> {
        let path = path.as_ref();
        let (records, report) = if path.exists() {
            load_jsonl(path, mode)?
        } else {
            (Vec::new(), LoadReport::default())
        };
        let mut ids = HashSet::with_capacity(records.len());
        for record in &records {
            if !ids.insert(record.id.clone()) {
                return Err(CorpusError::DuplicateId(record.id.clone()));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let store = CorpusStore {
            records,
            ids,
            writer: Some(BufWriter::new(file)),
        };
        Ok((store, report))
    }

    pub fn from_records(records: Vec<InstructionRecord>) -> Result<Self, CorpusError> {
        let mut store = CorpusStore::in_memory();
        for record in records {
            store.append(record)?;
        }
        Ok(store)
    }

    /// Appends one record. Order of successful appends is preserved; for a
    /// file-backed store the line is flushed before the call returns.
    pub fn append(&mut self, record: InstructionRecord) -> Result<(), CorpusError> {
        record.validate()?;
        if self.ids.contains(&record.id) {
            return Err(CorpusError::DuplicateId(record.id.clone()));
        }
        if let Some(writer) = self.writer.as_mut() {
            serde_json::to_writer(&mut *writer, &record)
                .map_err(|e| CorpusError::Validation(e.to_string()))?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        self.ids.insert(record.id.clone());
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn into_records(self) -> Vec<InstructionRecord> {
        self.records
    }
}

/// Statistics for one subset (or the union): counts and average lengths
/// in tokens. `empty` marks subsets with no records; their averages are
/// reported as 0 rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SubsetStats {
    pub samples: u64,
    pub instruction_tokens: u64,
    pub avg_instruction_len: f64,
    pub response_tokens: u64,
    pub avg_response_len: f64,
    pub empty: bool,
}

impl SubsetStats {
    fn finalize(mut self) -> Self {
        if self.samples == 0 {
            self.empty = true;
            self.avg_instruction_len = 0.0;
            self.avg_response_len = 0.0;
        } else {
            self.avg_instruction_len = self.instruction_tokens as f64 / self.samples as f64;
            self.avg_response_len = self.response_tokens as f64 / self.samples as f64;
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct CorpusStats {
    /// One row per subset, in canonical subset order.
    pub per_subset: Vec<(SubsetTag, SubsetStats)>,
    /// The union of all subsets.
    pub union: SubsetStats,
}

impl CorpusStats {
    pub fn subset(&self, tag: SubsetTag) -> &SubsetStats {
        &self
            .per_subset
            .iter()
            .find(|(t, _)| *t == tag)
            .expect("all subsets present")
            .1
    }

    /// CSV with header `subset,samples,ins_tokens,avg_ins_len,res_tokens,avg_res_len`.
    /// Averages use two decimals; the union row is labelled `all`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("subset,samples,ins_tokens,avg_ins_len,res_tokens,avg_res_len\n");
        for (tag, stats) in &self.per_subset {
            push_stats_row(&mut out, tag.as_str(), stats);
        }
        push_stats_row(&mut out, "all", &self.union);
        out
    }
}

fn push_stats_row(out: &mut String, label: &str, stats: &SubsetStats) {
    out.push_str(&format!(
        "{},{},{},{:.2},{},{:.2}\n",
        label,
        stats.samples,
        stats.instruction_tokens,
        stats.avg_instruction_len,
        stats.response_tokens,
        stats.avg_response_len
    ));
}

/// Single-pass per-subset and union token statistics. Deterministic for a
/// fixed tokenizer. Records without a response contribute zero response
/// tokens.
pub fn compute_stats(records: &[InstructionRecord], tokenizer: &dyn Tokenizer) -> CorpusStats {
    let mut acc: Vec<SubsetStats> = vec![SubsetStats::default(); SubsetTag::ALL.len()];
    for record in records {
        let idx = SubsetTag::ALL
            .iter()
            .position(|t| *t == record.subset)
            .expect("closed enumeration");
        let row = &mut acc[idx];
        row.samples += 1;
        row.instruction_tokens += tokenizer.count(&record.instruction) as u64;
        if let Some(response) = &record.response {
            row.response_tokens += tokenizer.count(response) as u64;
        }
    }
    let mut union = SubsetStats::default();
    for row in &acc {
        union.samples += row.samples;
        union.instruction_tokens += row.instruction_tokens;
        union.response_tokens += row.response_tokens;
    }
    CorpusStats {
        per_subset: SubsetTag::ALL
            .iter()
            .zip(acc)
            .map(|(tag, row)| (*tag, row.finalize()))
            .collect(),
        union: union.finalize(),
    }
}

/// Uniform sample of `n` records without replacement, deterministic for a
/// fixed seed. If `n` covers the whole (filtered) population the population
/// is returned in store order.
pub fn sample_records(
    records: &[InstructionRecord],
    n: usize,
    seed: u64,
    subset: Option<SubsetTag>,
) -> Vec<&InstructionRecord> {
    let population: Vec<&InstructionRecord> = records
        .iter()
        .filter(|r| subset.is_none_or(|s| r.subset == s))
        .collect();
    if n >= population.len() {
        return population;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, population.len(), n)
        .into_iter()
        .map(|i| population[i])
        .collect()
}
