use std::path::Path;

use distill_core::corpus::{compute_stats, load_jsonl, sample_records, LoadMode};
use distill_core::diversity::{cosine_stats, diversity_report, pca_project};
use distill_core::tokenize::WhitespaceTokenizer;

use super::{require_input, write_file};
use crate::config::RunConfig;
use crate::CliError;

pub fn stats(config: &RunConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    require_input(input)?;
    let (records, report) = load_jsonl(input, LoadMode::Lenient)
        .map_err(|e| CliError::Failure(format!("cannot load corpus: {e}")))?;
    if !report.skipped.is_empty() {
        eprintln!("warning: skipped {} malformed lines", report.skipped.len());
    }
    let stats = compute_stats(&records, &WhitespaceTokenizer);
    let csv = stats.to_csv();
    print!("{csv}");
    if let Some(out) = out {
        write_file(out, &csv)?;
        config.log_beside("stats", out)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn diversity(
    config: &RunConfig,
    input: &Path,
    out: Option<&Path>,
    window: usize,
    markdown: Option<&Path>,
    pca_out: Option<&Path>,
    cosine: bool,
    embed_sample: usize,
) -> Result<(), CliError> {
    require_input(input)?;
    let (records, report) = load_jsonl(input, LoadMode::Lenient)
        .map_err(|e| CliError::Failure(format!("cannot load corpus: {e}")))?;
    if !report.skipped.is_empty() {
        eprintln!("warning: skipped {} malformed lines", report.skipped.len());
    }

    let lexical = diversity_report(&records, window, &WhitespaceTokenizer)
        .map_err(|e| CliError::Failure(format!("diversity failed: {e}")))?;
    let csv = lexical.to_csv();
    print!("{csv}");
    if let Some(out) = out {
        write_file(out, &csv)?;
        config.log_beside("diversity", out)?;
    }
    if let Some(markdown_path) = markdown {
        write_file(markdown_path, &lexical.to_markdown())?;
    }

    if pca_out.is_some() || cosine {
        let sample = sample_records(&records, embed_sample, config.seed, None);
        if sample.len() < 2 {
            return Err(CliError::Usage(
                "semantic measures need at least 2 records to embed".into(),
            ));
        }
        let texts: Vec<String> = sample.iter().map(|r| r.instruction.clone()).collect();
        let client = config.client()?;
        let vectors = client
            .embed(&texts)
            .map_err(|e| CliError::Failure(format!("embedding failed: {e}")))?;
        if cosine {
            let stats = cosine_stats(&vectors)
                .map_err(|e| CliError::Failure(format!("cosine stats failed: {e}")))?;
            println!(
                "cosine: mean {:.4}, stddev {:.4} over {} pairs{}",
                stats.mean,
                stats.stddev,
                stats.pairs,
                if stats.sampled { " (sampled)" } else { "" }
            );
        }
        if let Some(pca_path) = pca_out {
            let projection = pca_project(&vectors, 2)
                .map_err(|e| CliError::Failure(format!("pca failed: {e}")))?;
            if projection.rank_warning {
                eprintln!("warning: embedding rank below 2; projection degenerate");
            }
            let mut content = String::from("id,x,y,label\n");
            for (record, point) in sample.iter().zip(&projection.points) {
                content.push_str(&format!(
                    "{},{:.6},{:.6},{}\n",
                    record.id,
                    point[0],
                    point.get(1).copied().unwrap_or(0.0),
                    record.subset
                ));
            }
            write_file(pca_path, &content)?;
        }
    }
    Ok(())
}
