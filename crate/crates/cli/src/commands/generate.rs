use std::path::{Path, PathBuf};

use distill_core::corpus::{load_jsonl, save_jsonl, CorpusStore, LoadMode};
use distill_core::pipeline::{self, GenerationOptions};
use distill_core::promptgen::{SeedRecord, SourceFamily};

use super::require_input;
use crate::config::RunConfig;
use crate::CliError;

fn parse_family(family: &str) -> Result<SourceFamily, CliError> {
    match family {
        "self-instruct" => Ok(SourceFamily::SelfInstruct),
        "p3" => Ok(SourceFamily::P3),
        "flan" => Ok(SourceFamily::Flan),
        other => Err(CliError::Usage(format!(
            "unknown family {other:?}: expected self-instruct, p3, or flan"
        ))),
    }
}

pub fn gen_instructions(
    config: &RunConfig,
    seeds_path: &Path,
    family: &str,
    rounds: usize,
    topics_path: Option<&Path>,
    out: &Path,
    timestamp: Option<String>,
) -> Result<(), CliError> {
    require_input(seeds_path)?;
    let family = parse_family(family)?;
    if topics_path.is_some() && family != SourceFamily::SelfInstruct {
        return Err(CliError::Usage(
            "topic-guided generation only applies to --family self-instruct".into(),
        ));
    }
    let topic_pool = match topics_path {
        Some(path) => {
            require_input(path)?;
            let content = std::fs::read_to_string(path)
                .map_err(|e| CliError::Failure(format!("cannot read topics: {e}")))?;
            let titles: Vec<String> = content
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            Some(titles)
        }
        None => None,
    };

    let (seed_records, seed_report) = load_jsonl(seeds_path, LoadMode::Lenient)
        .map_err(|e| CliError::Failure(format!("cannot load seeds: {e}")))?;
    if !seed_report.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} malformed seed lines",
            seed_report.skipped.len()
        );
    }
    let seed_pool: Vec<SeedRecord> = seed_records.iter().map(SeedRecord::from_record).collect();

    let client = config.client()?;
    let (mut store, store_report) = CorpusStore::open(out, LoadMode::Lenient)
        .map_err(|e| CliError::Failure(format!("cannot open corpus {}: {e}", out.display())))?;
    if !store_report.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} malformed corpus lines",
            store_report.skipped.len()
        );
    }

    let options = GenerationOptions {
        topic_pool,
        timestamp,
        ..GenerationOptions::new(family, rounds, config.seed)
    };
    let summary = pipeline::run_generation_rounds(&client, &mut store, &seed_pool, &options)
        .map_err(|e| CliError::Failure(format!("generation failed: {e}")))?;

    config.log_beside("gen-instructions", out)?;
    println!(
        "gen-instructions: {} rounds, {} parsed, {} appended, {} duplicates skipped, {} rejected, shortfall {}",
        summary.rounds_run,
        summary.parsed_examples,
        summary.appended,
        summary.duplicates_skipped,
        summary.rejected,
        summary.shortfall
    );
    if !summary.round_errors.is_empty() {
        for (round, message) in &summary.round_errors {
            eprintln!("round {round}: {message}");
        }
        return Err(CliError::Failure(format!(
            "{} of {} rounds failed",
            summary.round_errors.len(),
            summary.rounds_run
        )));
    }
    Ok(())
}

pub fn gen_responses(config: &RunConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    require_input(input)?;
    let out: PathBuf = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.to_path_buf());
    let progress_path = {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".progress.jsonl");
        out.with_file_name(name)
    };

    let (mut records, report) = load_jsonl(input, LoadMode::Lenient)
        .map_err(|e| CliError::Failure(format!("cannot load corpus: {e}")))?;
    if !report.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} malformed corpus lines",
            report.skipped.len()
        );
    }

    let client = config.client()?;
    let summary = pipeline::fill_responses(&client, &mut records, &progress_path)
        .map_err(|e| CliError::Failure(format!("response filling failed: {e}")))?;

    // atomic rewrite: temp file in the same directory, then rename
    let tmp = out.with_extension("tmp");
    save_jsonl(&records, &tmp)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, &out)
        .map_err(|e| CliError::Failure(format!("cannot replace {}: {e}", out.display())))?;

    config.log_beside("gen-responses", &out)?;
    println!(
        "gen-responses: {} already answered ({} from progress file), {} filled, {} errors",
        summary.already_answered,
        summary.resumed_from_progress,
        summary.filled,
        summary.errors.len()
    );
    if summary.errors.is_empty() {
        // everything merged into the corpus file; the sidecar is done
        let _ = std::fs::remove_file(&progress_path);
        Ok(())
    } else {
        for (id, message) in summary.errors.iter().take(10) {
            eprintln!("{id}: {message}");
        }
        Err(CliError::Failure(format!(
            "{} records still lack responses; rerun to retry them",
            summary.errors.len()
        )))
    }
}
