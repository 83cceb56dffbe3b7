//! Aggregates emitted artifacts (stats CSV, diversity CSV, probe results,
//! toxicity CSV, ratings summary CSV) into one Markdown report whose
//! sections mirror the corpus-statistics, lexical-diversity,
//! hallucination, and toxicity tables.

use std::collections::BTreeMap;

use crate::probes::hallucination::{score_hallucination, HallucinationCategory, ProbeResult};
use crate::probes::ProbeError;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no inputs given — at least one artifact is required")]
    NoInputs,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Probe(#[from] ProbeError),
}

#[derive(Debug, Default)]
pub struct ReportInputs {
    pub stats_csv: Option<String>,
    pub diversity_csv: Option<String>,
    pub hallucination_results: Option<Vec<ProbeResult>>,
    pub toxicity_csv: Option<String>,
    pub ratings_csv: Option<String>,
}

impl ReportInputs {
    pub fn is_empty(&self) -> bool {
        self.stats_csv.is_none()
            && self.diversity_csv.is_none()
            && self.hallucination_results.is_none()
            && self.toxicity_csv.is_none()
            && self.ratings_csv.is_none()
    }
}

fn csv_rows(content: &str) -> Result<Vec<Vec<String>>, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(content.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(|f| f.to_string()).collect());
    }
    Ok(rows)
}

fn stats_section(out: &mut String, content: &str) -> Result<(), ReportError> {
    out.push_str("## Corpus statistics\n\n");
    out.push_str(
        "| Dataset | Samples | Ins. tokens | Avg. ins. len. | Res. tokens | Avg. res. len. |\n",
    );
    out.push_str("|---|---|---|---|---|---|\n");
    for row in csv_rows(content)? {
        if row.len() == 6 {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                row[0], row[1], row[2], row[3], row[4], row[5]
            ));
        }
    }
    out.push('\n');
    Ok(())
}

fn diversity_section(out: &mut String, content: &str) -> Result<(), ReportError> {
    out.push_str("## Lexical diversity (MATTR x100)\n\n");
    // pivot subset rows into X / Y columns
    let mut per_subset: BTreeMap<String, (Option<String>, Option<String>)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut window = String::from("50");
    for row in csv_rows(content)? {
        if row.len() != 6 {
            continue;
        }
        if !order.contains(&row[0]) {
            order.push(row[0].clone());
        }
        window = row[2].clone();
        let entry = per_subset.entry(row[0].clone()).or_default();
        match row[1].as_str() {
            "instruction" => entry.0 = Some(row[3].clone()),
            "response" => entry.1 = Some(row[3].clone()),
            _ => {}
        }
    }
    out.push_str(&format!("Window size: {window}\n\n"));
    out.push_str("| Dataset | Instructions (X) | Responses (Y) |\n|---|---|---|\n");
    for subset in order {
        let (x, y) = per_subset.get(&subset).cloned().unwrap_or_default();
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            subset,
            x.unwrap_or_else(|| "-".into()),
            y.unwrap_or_else(|| "-".into())
        ));
    }
    out.push('\n');
    Ok(())
}

fn hallucination_section(out: &mut String, results: &[ProbeResult]) -> Result<(), ReportError> {
    out.push_str("## Hallucination probe\n\n");
    let answered = results.iter().filter(|r| r.response.is_some()).count();
    let errored = results.iter().filter(|r| r.error.is_some()).count();
    let labeled = results.iter().filter(|r| r.label.is_some()).count();
    out.push_str(&format!(
        "{answered} responses collected ({errored} errors), {labeled} labeled.\n\n"
    ));
    if labeled == results.len() - errored && labeled > 0 {
        let score = score_hallucination(results)?;
        let heuristic = results
            .iter()
            .any(|r| r.label_source == Some(crate::probes::LabelSource::Heuristic));
        out.push_str("| Total | DNH | FF | NS | Ob. |\n|---|---|---|---|---|\n");
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            score.total(),
            score.category(HallucinationCategory::DidNotHappen),
            score.category(HallucinationCategory::FarFuture),
            score.category(HallucinationCategory::Nonsense),
            score.category(HallucinationCategory::Obscure),
        ));
        if heuristic {
            out.push_str("\nLabels include heuristic (phrase-match) judgments, not human ones.\n");
        }
    } else {
        out.push_str("Scores pending labels: annotate the results file, then re-run.\n");
    }
    out.push('\n');
    Ok(())
}

fn toxicity_section(out: &mut String, content: &str) -> Result<(), ReportError> {
    out.push_str("## Toxicity probe\n\n");
    out.push_str("Flagged completions per prompt bucket (lower is better):\n\n");
    let mut non_toxic = String::from("-");
    let mut toxic = String::from("-");
    let mut detail = String::new();
    for row in csv_rows(content)? {
        if row.len() == 4 {
            detail.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                row[0], row[1], row[2], row[3]
            ));
            match row[0].as_str() {
                "non_toxic" => non_toxic = row[2].clone(),
                "toxic" => toxic = row[2].clone(),
                _ => {}
            }
        }
    }
    out.push_str("| Non-Toxic | Toxic |\n|---|---|\n");
    out.push_str(&format!("| {non_toxic} | {toxic} |\n\n"));
    out.push_str("Full counts:\n\n| Bucket | Total | Flagged | Errors |\n|---|---|---|---|\n");
    out.push_str(&detail);
    out.push('\n');
    Ok(())
}

fn ratings_section(out: &mut String, content: &str) -> Result<(), ReportError> {
    out.push_str("## Human ratings\n\n");
    out.push_str("| Model | A | B | C | D | Total |\n|---|---|---|---|---|---|\n");
    for row in csv_rows(content)? {
        if row.len() == 6 {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                row[0], row[1], row[2], row[3], row[4], row[5]
            ));
        }
    }
    out.push('\n');
    Ok(())
}

/// Builds the aggregated Markdown document. Errors when no inputs are
/// present at all.
pub fn build_markdown(inputs: &ReportInputs) -> Result<String, ReportError> {
    if inputs.is_empty() {
        return Err(ReportError::NoInputs);
    }
    let mut out = String::from("# Instruction corpus report\n\n");
    if let Some(content) = &inputs.stats_csv {
        stats_section(&mut out, content)?;
    }
    if let Some(content) = &inputs.diversity_csv {
        diversity_section(&mut out, content)?;
    }
    if let Some(results) = &inputs.hallucination_results {
        hallucination_section(&mut out, results)?;
    }
    if let Some(content) = &inputs.toxicity_csv {
        toxicity_section(&mut out, content)?;
    }
    if let Some(content) = &inputs.ratings_csv {
        ratings_section(&mut out, content)?;
    }
    Ok(out)
}
