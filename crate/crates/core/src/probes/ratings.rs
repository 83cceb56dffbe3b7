//! Ingestion and summarization of four-level human quality ratings
//! (A best through D worst), as produced by an external annotation pass.
//! This module only consumes the labels; running the study is out of
//! scope.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
}

impl Grade {
    pub fn parse(s: &str) -> Option<Grade> {
        match s.trim() {
            "A" => Some(Grade::A),
            "B" => Some(Grade::B),
            "C" => Some(Grade::C),
            "D" => Some(Grade::D),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rating {
    pub instruction_id: String,
    pub model: String,
    pub grade: Grade,
    pub annotator: String,
}

/// Reads ratings from CSV `instruction_id,model,grade,annotator`. A grade
/// outside {A,B,C,D} is a validation error carrying the row number.
pub fn ingest_ratings(path: &Path) -> Result<Vec<Rating>, ProbeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut ratings = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = idx + 2;
        if row.len() != 4 {
            return Err(ProbeError::BadRow {
                row: row_no,
                message: format!("expected 4 fields, got {}", row.len()),
            });
        }
        let grade = Grade::parse(&row[2]).ok_or_else(|| ProbeError::BadRow {
            row: row_no,
            message: format!("grade {:?} is not one of A/B/C/D", &row[2]),
        })?;
        ratings.push(Rating {
            instruction_id: row[0].to_string(),
            model: row[1].to_string(),
            grade,
            annotator: row[3].to_string(),
        });
    }
    Ok(ratings)
}

/// Per-model grade counts. The four counts sum to `total`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelSummary {
    pub model: String,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl ModelSummary {
    pub fn total(&self) -> usize {
        self.a + self.b + self.c + self.d
    }

    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (self.a, self.b, self.c, self.d)
    }
}

/// Groups ratings by model, in first-seen order.
pub fn summarize_ratings(ratings: &[Rating]) -> Vec<ModelSummary> {
    let mut summaries: Vec<ModelSummary> = Vec::new();
    for rating in ratings {
        let summary = match summaries.iter_mut().find(|s| s.model == rating.model) {
            Some(existing) => existing,
            None => {
                summaries.push(ModelSummary {
                    model: rating.model.clone(),
                    ..Default::default()
                });
                summaries.last_mut().unwrap()
            }
        };
        match rating.grade {
            Grade::A => summary.a += 1,
            Grade::B => summary.b += 1,
            Grade::C => summary.c += 1,
            Grade::D => summary.d += 1,
        }
    }
    summaries
}

/// CSV with header `model,a,b,c,d,total`.
pub fn summaries_to_csv(summaries: &[ModelSummary]) -> String {
    let mut out = String::from("model,a,b,c,d,total\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.model,
            s.a,
            s.b,
            s.c,
            s.d,
            s.total()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_csv(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn all_a_ratings_summarize_correctly() {
        let mut content = String::from("instruction_id,model,grade,annotator\n");
        for i in 0..114 {
            content.push_str(&format!("ins-{i},modelx,A,ann-{}\n", i % 8));
        }
        let (_dir, path) = write_csv(&content);
        let ratings = ingest_ratings(&path).unwrap();
        assert_eq!(ratings.len(), 114);
        let summaries = summarize_ratings(&ratings);
        assert_eq!(summaries.len(), 1);
        assert_eq!(summaries[0].counts(), (114, 0, 0, 0));
        assert_eq!(summaries[0].total(), 114);
    }

    #[test]
    fn grade_e_is_a_validation_error_with_row_number() {
        let (_dir, path) =
            write_csv("instruction_id,model,grade,annotator\ni1,m,A,a1\ni2,m,E,a1\n");
        match ingest_ratings(&path).unwrap_err() {
            ProbeError::BadRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mixed_grades_partition_totals() {
        let mut content = String::from("instruction_id,model,grade,annotator\n");
        let plan = [("ma", 91, 14, 9, 0), ("mb", 39, 34, 29, 12)];
        for (model, a, b, c, d) in plan {
            for (grade, count) in [("A", a), ("B", b), ("C", c), ("D", d)] {
                for i in 0..count {
                    content.push_str(&format!("ins-{grade}-{i},{model},{grade},ann\n"));
                }
            }
        }
        let (_dir, path) = write_csv(&content);
        let summaries = summarize_ratings(&ingest_ratings(&path).unwrap());
        assert_eq!(summaries[0].counts(), (91, 14, 9, 0));
        assert_eq!(summaries[0].total(), 114);
        assert_eq!(summaries[1].counts(), (39, 34, 29, 12));
        assert_eq!(summaries[1].total(), 114);
        let csv = summaries_to_csv(&summaries);
        assert!(csv.contains("ma,91,14,9,0,114"));
    }
}
