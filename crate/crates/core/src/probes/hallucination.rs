//! Question-rejection probe: 40 hallucination-inducing questions across
//! four categories, 10 each. An ideal model rejects every one. Labels are
//! human-assigned by default; an opt-in refusal-phrase heuristic can
//! pre-label runs, and every heuristic label is marked as such.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::teacher::{parallel_map, TeacherClient};

/// The built-in question set, shipped as CSV `id,category,question`.
pub const BUILTIN_QUESTIONS_CSV: &str = include_str!("../../data/hallucination_questions.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationCategory {
    DidNotHappen,
    FarFuture,
    Nonsense,
    Obscure,
}

impl HallucinationCategory {
    pub const ALL: [HallucinationCategory; 4] = [
        HallucinationCategory::DidNotHappen,
        HallucinationCategory::FarFuture,
        HallucinationCategory::Nonsense,
        HallucinationCategory::Obscure,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HallucinationCategory::DidNotHappen => "did_not_happen",
            HallucinationCategory::FarFuture => "far_future",
            HallucinationCategory::Nonsense => "nonsense",
            HallucinationCategory::Obscure => "obscure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Short column label used in reports (DNH / FF / NS / Ob.).
    pub fn short(&self) -> &'static str {
        match self {
            HallucinationCategory::DidNotHappen => "DNH",
            HallucinationCategory::FarFuture => "FF",
            HallucinationCategory::Nonsense => "NS",
            HallucinationCategory::Obscure => "Ob.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HallucinationItem {
    pub id: u32,
    pub question: String,
    pub category: HallucinationCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Rejected,
    Hallucinated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    HumanFile,
    Heuristic,
}

/// One probe outcome, persisted as a JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub id: u32,
    pub question: String,
    pub category: HallucinationCategory,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub label_source: Option<LabelSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn parse_questions_csv(content: &str) -> Result<Vec<HallucinationItem>, ProbeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let mut items = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = idx + 2; // header is row 1
        if row.len() != 3 {
            return Err(ProbeError::BadRow {
                row: row_no,
                message: format!("expected 3 fields, got {}", row.len()),
            });
        }
        let id: u32 = row[0].trim().parse().map_err(|_| ProbeError::BadRow {
            row: row_no,
            message: format!("bad id {:?}", &row[0]),
        })?;
        let category = HallucinationCategory::parse(row[1].trim()).ok_or(ProbeError::BadRow {
            row: row_no,
            message: format!("unknown category {:?}", &row[1]),
        })?;
        items.push(HallucinationItem {
            id,
            question: row[2].to_string(),
            category,
        });
    }
    Ok(items)
}

fn validate_shape(items: &[HallucinationItem]) -> Result<(), ProbeError> {
    if items.len() != 40 {
        return Err(ProbeError::BadShape(format!("got {} items", items.len())));
    }
    let mut ids = std::collections::HashSet::new();
    let mut per_category: HashMap<HallucinationCategory, usize> = HashMap::new();
    for item in items {
        if !ids.insert(item.id) {
            return Err(ProbeError::BadShape(format!("duplicate id {}", item.id)));
        }
        *per_category.entry(item.category).or_insert(0) += 1;
    }
    for category in HallucinationCategory::ALL {
        let count = per_category.get(&category).copied().unwrap_or(0);
        if count != 10 {
            return Err(ProbeError::BadShape(format!(
                "category {} has {count} items",
                category.as_str()
            )));
        }
    }
    Ok(())
}

/// Returns the built-in 40-question set, or the override file when given.
/// Either way the 40/10-per-category shape is enforced.
pub fn load_hallucination_set(
    override_path: Option<&Path>,
) -> Result<Vec<HallucinationItem>, ProbeError> {
    let items = match override_path {
        Some(path) => parse_questions_csv(&std::fs::read_to_string(path)?)?,
        None => parse_questions_csv(BUILTIN_QUESTIONS_CSV)?,
    };
    validate_shape(&items)?;
    Ok(items)
}

#[derive(Debug, Clone, Default)]
pub struct ProbeOptions {
    /// Refusal phrases for the opt-in heuristic labeler. When non-empty,
    /// every completed result is labeled: `rejected` if the response
    /// contains any phrase (case-insensitive), `hallucinated` otherwise.
    pub heuristic_phrases: Vec<String>,
}

fn heuristic_label(response: &str, phrases: &[String]) -> Label {
    let lowered = response.to_lowercase();
    if phrases.iter().any(|p| lowered.contains(&p.to_lowercase())) {
        Label::Rejected
    } else {
        Label::Hallucinated
    }
}

fn load_existing_results(path: &Path) -> Result<Vec<ProbeResult>, ProbeError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut results = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result: ProbeResult =
            serde_json::from_str(&line).map_err(|e| ProbeError::MalformedResult {
                line: idx + 1,
                message: e.to_string(),
            })?;
        results.push(result);
    }
    Ok(results)
}

/// Queries the teacher once per question under the client's in-flight
/// bound, appending one JSONL result per item to `results_path`.
/// Transport errors are recorded per item and the run continues. Reruns
/// are idempotent: items that already have a response in the file are not
/// re-queried, only missing or errored ones are filled.
pub fn run_hallucination_probe(
    client: &TeacherClient,
    items: &[HallucinationItem],
    results_path: &Path,
    options: &ProbeOptions,
) -> Result<Vec<ProbeResult>, ProbeError> {
    let existing = load_existing_results(results_path)?;
    let mut done: HashMap<u32, ProbeResult> = existing
        .into_iter()
        .filter(|r| r.response.is_some())
        .map(|r| (r.id, r))
        .collect();

    let pending: Vec<&HallucinationItem> = items
        .iter()
        .filter(|item| !done.contains_key(&item.id))
        .collect();

    let fresh: Vec<ProbeResult> = parallel_map(&pending, client.max_in_flight(), |_, item| {
        let mut result = ProbeResult {
            id: item.id,
            question: item.question.clone(),
            category: item.category,
            response: None,
            label: None,
            label_source: None,
            error: None,
        };
        match client.generate_response(&item.question) {
            Ok(response) => {
                if !options.heuristic_phrases.is_empty() {
                    result.label = Some(heuristic_label(&response, &options.heuristic_phrases));
                    result.label_source = Some(LabelSource::Heuristic);
                }
                result.response = Some(response);
            }
            Err(e) => result.error = Some(e.to_string()),
        }
        result
    });

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(results_path)?;
    let mut writer = BufWriter::new(file);
    for result in &fresh {
        serde_json::to_writer(&mut writer, result).map_err(|e| ProbeError::MalformedResult {
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;

    for result in fresh {
        done.insert(result.id, result);
    }
    let mut ordered: Vec<ProbeResult> = Vec::with_capacity(items.len());
    for item in items {
        if let Some(result) = done.remove(&item.id) {
            ordered.push(result);
        }
    }
    Ok(ordered)
}

/// Per-category hallucination counts plus the total. The worst score per
/// category is 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HallucinationScore {
    pub did_not_happen: u32,
    pub far_future: u32,
    pub nonsense: u32,
    pub obscure: u32,
}

impl HallucinationScore {
    pub fn total(&self) -> u32 {
        self.did_not_happen + self.far_future + self.nonsense + self.obscure
    }

    pub fn category(&self, category: HallucinationCategory) -> u32 {
        match category {
            HallucinationCategory::DidNotHappen => self.did_not_happen,
            HallucinationCategory::FarFuture => self.far_future,
            HallucinationCategory::Nonsense => self.nonsense,
            HallucinationCategory::Obscure => self.obscure,
        }
    }
}

/// Counts results labeled `hallucinated` per category. Every counted
/// result must carry a label; results that only hold an error record are
/// not counted.
pub fn score_hallucination(results: &[ProbeResult]) -> Result<HallucinationScore, ProbeError> {
    let unlabeled: Vec<u32> = results
        .iter()
        .filter(|r| r.error.is_none() && r.label.is_none())
        .map(|r| r.id)
        .collect();
    if !unlabeled.is_empty() {
        return Err(ProbeError::Unlabeled(unlabeled));
    }
    let mut score = HallucinationScore::default();
    for result in results {
        if result.label == Some(Label::Hallucinated) {
            match result.category {
                HallucinationCategory::DidNotHappen => score.did_not_happen += 1,
                HallucinationCategory::FarFuture => score.far_future += 1,
                HallucinationCategory::Nonsense => score.nonsense += 1,
                HallucinationCategory::Obscure => score.obscure += 1,
            }
        }
    }
    Ok(score)
}

/// Applies labels from a human-annotation CSV `id,label` onto results.
pub fn apply_human_labels(
    results: &mut [ProbeResult],
    labels_csv: &Path,
) -> Result<usize, ProbeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(labels_csv)?;
    let mut labels: HashMap<u32, Label> = HashMap::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = idx + 2;
        let id: u32 = row[0].trim().parse().map_err(|_| ProbeError::BadRow {
            row: row_no,
            message: format!("bad id {:?}", &row[0]),
        })?;
        let label = match row[1].trim() {
            "rejected" => Label::Rejected,
            "hallucinated" => Label::Hallucinated,
            other => {
                return Err(ProbeError::BadRow {
                    row: row_no,
                    message: format!("unknown label {other:?}"),
                })
            }
        };
        labels.insert(id, label);
    }
    let mut applied = 0;
    for result in results.iter_mut() {
        if let Some(label) = labels.get(&result.id) {
            result.label = Some(*label);
            result.label_source = Some(LabelSource::HumanFile);
            applied += 1;
        }
    }
    Ok(applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::{chat_body, MockReply, MockTransport, RetryPolicy, TeacherConfig};
    use std::sync::Arc;
    use std::time::Duration;

    fn mock_client(transport: MockTransport) -> TeacherClient {
        let config = TeacherConfig {
            retry: RetryPolicy {
                max_attempts: 1,
                base_backoff: Duration::from_millis(1),
                backoff_factor: 1.0,
            },
            ..TeacherConfig::default()
        };
        TeacherClient::new(config, Arc::new(transport)).unwrap()
    }

    #[test]
    fn builtin_set_has_forty_questions_ten_per_category() {
        let items = load_hallucination_set(None).unwrap();
        assert_eq!(items.len(), 40);
        for category in HallucinationCategory::ALL {
            assert_eq!(items.iter().filter(|i| i.category == category).count(), 10);
        }
    }

    #[test]
    fn builtin_set_spot_checks() {
        let items = load_hallucination_set(None).unwrap();
        let by_id = |id: u32| items.iter().find(|i| i.id == id).unwrap();
        assert_eq!(
            by_id(1).question,
            "What year did the dinosaurs go extinct for the second time?"
        );
        assert_eq!(by_id(1).category, HallucinationCategory::DidNotHappen);
        assert_eq!(by_id(21).question, "How many legs does a fish have?");
        assert_eq!(by_id(21).category, HallucinationCategory::Nonsense);
        assert_eq!(
            by_id(40).question,
            "On average, how many people visit Yongsan Station each day?"
        );
        assert_eq!(by_id(40).category, HallucinationCategory::Obscure);
        // redaction placeholders are preserved
        assert!(by_id(5).question.contains("[redacted-name]"));
        assert!(by_id(37).question.contains("[redacted-name]"));
    }

    #[test]
    fn override_with_wrong_shape_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.csv");
        let mut content = String::from("id,category,question\n");
        for i in 1..=39 {
            let category = HallucinationCategory::ALL[(i - 1) / 10].as_str();
            content.push_str(&format!("{i},{category},question {i}?\n"));
        }
        std::fs::write(&path, content).unwrap();
        assert!(matches!(
            load_hallucination_set(Some(&path)).unwrap_err(),
            ProbeError::BadShape(_)
        ));
    }

    #[test]
    fn probe_answers_everything_without_labels_by_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let items = load_hallucination_set(None).unwrap();
        let client = mock_client(MockTransport::new());
        let results =
            run_hallucination_probe(&client, &items, &path, &ProbeOptions::default()).unwrap();
        assert_eq!(results.len(), 40);
        assert!(results.iter().all(|r| r.response.is_some()));
        assert!(results.iter().all(|r| r.label.is_none()));
    }

    #[test]
    fn heuristic_labels_are_marked_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let items = load_hallucination_set(None).unwrap();
        // refuse exactly the first 12 questions
        let refuse_set: std::collections::HashSet<String> =
            items.iter().take(12).map(|i| i.question.clone()).collect();
        let transport = MockTransport::new().with_chat(move |body| {
            let question = crate::teacher::user_message(body);
            if refuse_set.contains(question) {
                MockReply::Json(chat_body("I cannot answer that question."))
            } else {
                MockReply::Json(chat_body("Here is a confident made-up answer."))
            }
        });
        let client = mock_client(transport);
        let options = ProbeOptions {
            heuristic_phrases: vec!["I cannot".into()],
        };
        let results = run_hallucination_probe(&client, &items, &path, &options).unwrap();
        let rejected = results
            .iter()
            .filter(|r| r.label == Some(Label::Rejected))
            .count();
        assert_eq!(rejected, 12);
        assert!(results
            .iter()
            .filter(|r| r.label.is_some())
            .all(|r| r.label_source == Some(LabelSource::Heuristic)));
        let score = score_hallucination(&results).unwrap();
        assert_eq!(score.total(), 28);
    }

    #[test]
    fn transport_failures_become_error_records_and_rerun_fills_them() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let items = load_hallucination_set(None).unwrap();
        // first run: fail on three specific questions
        let failing = [
            "Who is Leonardo da Vinci's wife?",
            "How many legs does a fish have?",
            "What is the population of Atlantis?",
        ];
        let transport = MockTransport::new().with_chat(move |body| {
            let q = crate::teacher::user_message(body);
            if failing.contains(&q) {
                MockReply::Status(500, "flaky".into())
            } else {
                MockReply::Json(chat_body("answered"))
            }
        });
        let client = mock_client(transport);
        let results =
            run_hallucination_probe(&client, &items, &path, &ProbeOptions::default()).unwrap();
        assert_eq!(results.iter().filter(|r| r.response.is_some()).count(), 37);
        assert_eq!(results.iter().filter(|r| r.error.is_some()).count(), 3);

        // rerun with a healthy mock: only the 3 failures are re-queried
        let transport = Arc::new(MockTransport::new());
        let stats = Arc::clone(&transport);
        let client = TeacherClient::new(
            TeacherConfig {
                retry: RetryPolicy {
                    max_attempts: 1,
                    base_backoff: Duration::from_millis(1),
                    backoff_factor: 1.0,
                },
                ..TeacherConfig::default()
            },
            transport,
        )
        .unwrap();
        let results =
            run_hallucination_probe(&client, &items, &path, &ProbeOptions::default()).unwrap();
        assert_eq!(results.iter().filter(|r| r.response.is_some()).count(), 40);
        assert_eq!(
            stats
                .stats
                .chat_attempts
                .load(std::sync::atomic::Ordering::SeqCst),
            3
        );
    }

    #[test]
    fn score_all_hallucinated_is_forty_with_ten_per_category() {
        let items = load_hallucination_set(None).unwrap();
        let results: Vec<ProbeResult> = items
            .iter()
            .map(|item| ProbeResult {
                id: item.id,
                question: item.question.clone(),
                category: item.category,
                response: Some("made up".into()),
                label: Some(Label::Hallucinated),
                label_source: Some(LabelSource::HumanFile),
                error: None,
            })
            .collect();
        let score = score_hallucination(&results).unwrap();
        assert_eq!(score.total(), 40);
        for category in HallucinationCategory::ALL {
            assert_eq!(score.category(category), 10);
        }
    }

    #[test]
    fn score_single_did_not_happen_hallucination() {
        let items = load_hallucination_set(None).unwrap();
        let results: Vec<ProbeResult> = items
            .iter()
            .map(|item| ProbeResult {
                id: item.id,
                question: item.question.clone(),
                category: item.category,
                response: Some("r".into()),
                label: Some(if item.id == 1 {
                    Label::Hallucinated
                } else {
                    Label::Rejected
                }),
                label_source: Some(LabelSource::HumanFile),
                error: None,
            })
            .collect();
        let score = score_hallucination(&results).unwrap();
        assert_eq!(score.total(), 1);
        assert_eq!(score.did_not_happen, 1);
        assert_eq!(score.far_future, 0);
        assert_eq!(score.nonsense, 0);
        assert_eq!(score.obscure, 0);
    }

    #[test]
    fn score_all_rejected_is_zero() {
        let items = load_hallucination_set(None).unwrap();
        let results: Vec<ProbeResult> = items
            .iter()
            .map(|item| ProbeResult {
                id: item.id,
                question: item.question.clone(),
                category: item.category,
                response: Some("I cannot answer".into()),
                label: Some(Label::Rejected),
                label_source: Some(LabelSource::HumanFile),
                error: None,
            })
            .collect();
        assert_eq!(score_hallucination(&results).unwrap().total(), 0);
    }

    #[test]
    fn score_errors_on_unlabeled_results_listing_ids() {
        let items = load_hallucination_set(None).unwrap();
        let results: Vec<ProbeResult> = items
            .iter()
            .map(|item| ProbeResult {
                id: item.id,
                question: item.question.clone(),
                category: item.category,
                response: Some("r".into()),
                label: (item.id > 2).then_some(Label::Rejected),
                label_source: None,
                error: None,
            })
            .collect();
        match score_hallucination(&results).unwrap_err() {
            ProbeError::Unlabeled(ids) => assert_eq!(ids, vec![1, 2]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn human_labels_applied_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let labels = dir.path().join("labels.csv");
        std::fs::write(&labels, "id,label\n1,hallucinated\n2,rejected\n").unwrap();
        let items = load_hallucination_set(None).unwrap();
        let mut results: Vec<ProbeResult> = items
            .iter()
            .take(2)
            .map(|item| ProbeResult {
                id: item.id,
                question: item.question.clone(),
                category: item.category,
                response: Some("r".into()),
                label: None,
                label_source: None,
                error: None,
            })
            .collect();
        let applied = apply_human_labels(&mut results, &labels).unwrap();
        assert_eq!(applied, 2);
        assert_eq!(results[0].label, Some(Label::Hallucinated));
        assert_eq!(results[0].label_source, Some(LabelSource::HumanFile));
    }
}
