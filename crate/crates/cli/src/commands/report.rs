use std::path::Path;

use distill_core::probes::hallucination::ProbeResult;
use distill_core::report::{build_markdown, ReportError, ReportInputs};

use super::{require_input, write_file};
use crate::config::RunConfig;
use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    require_input(path)?;
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Failure(format!("cannot read {}: {e}", path.display())))
}

fn read_results(path: &Path) -> Result<Vec<ProbeResult>, CliError> {
    let content = read(path)?;
    let mut results = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result: ProbeResult = serde_json::from_str(line)
            .map_err(|e| CliError::Failure(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        results.push(result);
    }
    Ok(results)
}

pub fn report(
    config: &RunConfig,
    stats: Option<&Path>,
    diversity: Option<&Path>,
    hallucination: Option<&Path>,
    toxicity: Option<&Path>,
    ratings: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let inputs = ReportInputs {
        stats_csv: stats.map(read).transpose()?,
        diversity_csv: diversity.map(read).transpose()?,
        hallucination_results: hallucination.map(read_results).transpose()?,
        toxicity_csv: toxicity.map(read).transpose()?,
        ratings_csv: ratings.map(read).transpose()?,
    };
    let markdown = match build_markdown(&inputs) {
        Ok(markdown) => markdown,
        Err(ReportError::NoInputs) => return Err(CliError::Usage(
            "report needs at least one of --stats/--diversity/--hallucination/--toxicity/--ratings"
                .into(),
        )),
        Err(e) => return Err(CliError::Failure(e.to_string())),
    };
    write_file(out, &markdown)?;
    config.log_beside("report", out)?;
    println!("report written to {}", out.display());
    Ok(())
}
