//! Command-line front end: problem files in, CSV and JSON reports out.

pub mod battery;
pub mod cli;
pub mod commands;
pub mod criteria;
pub mod error;
pub mod files;
pub mod oracle;
pub mod report;

/// Caps the worker pool at `EXTREMAL_LAB_THREADS` when set.
pub fn configure_threads() -> Result<(), error::CliError> {
    let Ok(value) = std::env::var("EXTREMAL_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| error::CliError::Usage(format!("EXTREMAL_LAB_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| error::CliError::Usage(format!("cannot configure worker pool: {e}")))
}
