pub mod analyze;
pub mod generate;
pub mod harvest;
pub mod probe;
pub mod report;

use std::path::Path;

use crate::CliError;

/// Missing input files are usage errors (exit 2).
pub fn require_input(path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "input not found: {}",
            path.display()
        )));
    }
    Ok(())
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Failure(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}
