use std::path::Path;

use distill_core::probes::{
    self, hallucination::apply_human_labels, ratings::summaries_to_csv, ProbeOptions,
};

use super::{require_input, write_file};
use crate::config::RunConfig;
use crate::CliError;

pub fn hallucination(
    config: &RunConfig,
    out: &Path,
    questions: Option<&Path>,
    heuristic: Option<&Path>,
    labels: Option<&Path>,
) -> Result<(), CliError> {
    if let Some(path) = questions {
        require_input(path)?;
    }
    let items = probes::load_hallucination_set(questions)
        .map_err(|e| CliError::Usage(format!("bad question set: {e}")))?;

    let options = match heuristic {
        Some(path) => {
            require_input(path)?;
            let content = std::fs::read_to_string(path)
                .map_err(|e| CliError::Failure(format!("cannot read phrases: {e}")))?;
            let phrases: Vec<String> = content
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            if phrases.is_empty() {
                return Err(CliError::Usage("heuristic phrase file is empty".into()));
            }
            ProbeOptions {
                heuristic_phrases: phrases,
            }
        }
        None => ProbeOptions::default(),
    };

    let client = config.client()?;
    let mut results = probes::run_hallucination_probe(&client, &items, out, &options)
        .map_err(|e| CliError::Failure(format!("probe failed: {e}")))?;
    config.log_beside("probe-hallucination", out)?;

    if let Some(labels_path) = labels {
        require_input(labels_path)?;
        let applied = apply_human_labels(&mut results, labels_path)
            .map_err(|e| CliError::Failure(format!("cannot apply labels: {e}")))?;
        println!("applied {applied} human labels");
    }

    let answered = results.iter().filter(|r| r.response.is_some()).count();
    let errored = results.iter().filter(|r| r.error.is_some()).count();
    let labeled = results.iter().filter(|r| r.label.is_some()).count();
    println!("probe-hallucination: {answered} answered, {errored} errors, {labeled} labeled");
    if labeled > 0 && labeled == results.len() - errored {
        let score =
            probes::score_hallucination(&results).map_err(|e| CliError::Failure(e.to_string()))?;
        println!("hallucinations: total {}", score.total());
        for category in probes::HallucinationCategory::ALL {
            println!("  {:>4}: {}", category.short(), score.category(category));
        }
    }
    if errored > 0 {
        return Err(CliError::Failure(format!(
            "{errored} questions failed; rerun to retry them"
        )));
    }
    Ok(())
}

pub fn toxicity(
    config: &RunConfig,
    prompts_path: &Path,
    n_per_bucket: usize,
    out: &Path,
    report: Option<&Path>,
) -> Result<(), CliError> {
    require_input(prompts_path)?;
    let (prompts, selection) =
        probes::select_toxicity_prompts(prompts_path, n_per_bucket, config.seed)
            .map_err(|e| CliError::Failure(format!("prompt selection failed: {e}")))?;
    for (bucket, have, want) in &selection.shortfalls {
        eprintln!(
            "warning: bucket {} has only {have} prompts (wanted {want})",
            bucket.as_str()
        );
    }

    let client = config.client()?;
    let (results, table) = probes::run_toxicity_probe(&client, &prompts, out)
        .map_err(|e| CliError::Failure(format!("probe failed: {e}")))?;
    config.log_beside("probe-toxicity", out)?;

    let csv = table.to_csv();
    print!("{csv}");
    if let Some(report_path) = report {
        write_file(report_path, &csv)?;
    }
    let errors = results.iter().filter(|r| r.error.is_some()).count();
    if errors > 0 {
        return Err(CliError::Failure(format!(
            "{errors} prompts failed; rerun to retry them"
        )));
    }
    Ok(())
}

pub fn ratings(config: &RunConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    require_input(input)?;
    let ratings = probes::ingest_ratings(input)
        .map_err(|e| CliError::Failure(format!("cannot ingest ratings: {e}")))?;
    let summaries = probes::summarize_ratings(&ratings);
    let csv = summaries_to_csv(&summaries);
    print!("{csv}");
    if let Some(out) = out {
        write_file(out, &csv)?;
        config.log_beside("ratings", out)?;
    }
    Ok(())
}
