//! Wikipedia category ingestion and the common-topic filter.
//!
//! Categories arrive as a UTF-8 TSV dump (`title<TAB>subcategories<TAB>pages`)
//! or from a JSON category endpoint. The common-topic pool keeps titles of
//! fewer than three words whose category has more than 10 sub-categories
//! and more than 50 pages — both strictly greater.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum TopicError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: negative count")]
    NegativeCount { line: usize },
    #[error("topic pool too small: need at least 3, have {0}")]
    PoolTooSmall(usize),
}

/// A Wikipedia category with the counts the filter looks at. `word_count`
/// is computed from the title on ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicEntry {
    pub title: String,
    pub word_count: usize,
    pub subcategory_count: u64,
    pub page_count: u64,
}

impl TopicEntry {
    pub fn new(title: impl Into<String>, subcategory_count: u64, page_count: u64) -> Self {
        let title = title.into();
        let word_count = title.split_whitespace().count();
        TopicEntry {
            title,
            word_count,
            subcategory_count,
            page_count,
        }
    }
}

fn parse_count(field: &str, line: usize) -> Result<u64, TopicError> {
    let value: i64 = field.trim().parse().map_err(|_| TopicError::Malformed {
        line,
        message: format!("count field {field:?} is not an integer"),
    })?;
    u64::try_from(value).map_err(|_| TopicError::NegativeCount { line })
}

/// Reads TSV rows into entries, computing word counts and collapsing
/// duplicate titles (first occurrence wins).
pub fn ingest_categories<R: Read>(source: R) -> Result<Vec<TopicEntry>, TopicError> {
    let reader = BufReader::new(source);
    let mut entries: Vec<TopicEntry> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let title = fields.next().unwrap_or("").trim();
        let subcats = fields.next().ok_or_else(|| TopicError::Malformed {
            line: line_no,
            message: "missing subcategory count".into(),
        })?;
        let pages = fields.next().ok_or_else(|| TopicError::Malformed {
            line: line_no,
            message: "missing page count".into(),
        })?;
        if title.is_empty() {
            return Err(TopicError::Malformed {
                line: line_no,
                message: "empty title".into(),
            });
        }
        let entry = TopicEntry::new(
            title,
            parse_count(subcats, line_no)?,
            parse_count(pages, line_no)?,
        );
        if seen.insert(entry.title.clone()) {
            entries.push(entry);
        }
    }
    Ok(entries)
}

pub fn ingest_categories_file(path: impl AsRef<Path>) -> Result<Vec<TopicEntry>, TopicError> {
    ingest_categories(File::open(path.as_ref())?)
}

#[derive(Debug, Deserialize)]
struct ApiCategory {
    title: String,
    subcategories: u64,
    pages: u64,
}

#[derive(Debug, Deserialize)]
struct ApiPage {
    categories: Vec<ApiCategory>,
    #[serde(default)]
    next_offset: Option<u64>,
}

/// Pulls categories from a JSON endpoint page by page, reusing the teacher
/// HTTP stack and its retry policy. The endpoint contract is
/// `POST {base}/categories` with `{"offset": n, "limit": m}` returning
/// `{"categories": [{"title","subcategories","pages"}...], "next_offset": n|null}`.
pub fn ingest_categories_api(
    client: &crate::teacher::TeacherClient,
    page_limit: u64,
) -> Result<Vec<TopicEntry>, crate::teacher::TeacherError> {
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut offset = 0u64;
    loop {
        let body = serde_json::json!({ "offset": offset, "limit": page_limit });
        let value = client.post_json(crate::teacher::Endpoint::Categories, &body)?;
        let page: ApiPage = serde_json::from_value(value).map_err(|e| {
            crate::teacher::TeacherError::MalformedResponse(format!("categories page: {e}"))
        })?;
        for cat in page.categories {
            if seen.insert(cat.title.clone()) {
                entries.push(TopicEntry::new(cat.title, cat.subcategories, cat.pages));
            }
        }
        match page.next_offset {
            Some(next) => offset = next,
            None => break,
        }
    }
    Ok(entries)
}

/// The common-topic predicate: fewer than three words, more than 10
/// sub-categories, and more than 50 pages.
pub fn is_common_topic(entry: &TopicEntry) -> bool {
    entry.word_count < 3 && entry.subcategory_count > 10 && entry.page_count > 50
}

/// Keeps exactly the common-topic entries, preserving order.
pub fn filter_topics(entries: &[TopicEntry]) -> Vec<TopicEntry> {
    entries
        .iter()
        .filter(|e| is_common_topic(e))
        .cloned()
        .collect()
}

/// Draws 3 distinct titles uniformly without replacement, deterministic
/// for a fixed seed.
pub fn sample_topics(pool: &[TopicEntry], seed: u64) -> Result<[String; 3], TopicError> {
    if pool.len() < 3 {
        return Err(TopicError::PoolTooSmall(pool.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, pool.len(), 3);
    let titles: Vec<String> = idx.into_iter().map(|i| pool[i].title.clone()).collect();
    Ok(titles.try_into().expect("exactly 3 titles"))
}

/// Same draw from a plain title list (the `harvest-topics` output format).
pub fn sample_topic_titles(titles: &[String], seed: u64) -> Result<[String; 3], TopicError> {
    if titles.len() < 3 {
        return Err(TopicError::PoolTooSmall(titles.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, titles.len(), 3);
    let picked: Vec<String> = idx.into_iter().map(|i| titles[i].clone()).collect();
    Ok(picked.try_into().expect("exactly 3 titles"))
}
