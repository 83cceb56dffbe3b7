use std::path::Path;

use distill_core::topics;

use super::{require_input, write_file};
use crate::config::RunConfig;
use crate::CliError;

pub fn harvest_topics(config: &RunConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    require_input(input)?;
    let entries = topics::ingest_categories_file(input)
        .map_err(|e| CliError::Failure(format!("ingest failed: {e}")))?;
    let kept = topics::filter_topics(&entries);
    let mut content = String::new();
    for entry in &kept {
        content.push_str(&entry.title);
        content.push('\n');
    }
    write_file(out, &content)?;
    config.log_beside("harvest-topics", out)?;
    println!(
        "harvest-topics: {} categories in, {} common topics kept",
        entries.len(),
        kept.len()
    );
    Ok(())
}
