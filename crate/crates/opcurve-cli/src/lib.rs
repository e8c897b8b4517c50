//! Plumbing behind the `opcurve` binary: case-file ingestion, layered
//! configuration, and the emitters for JSON results, CSV series, and SVG
//! plots. The binary in `main.rs` is a thin dispatcher over these modules.

pub mod config;
pub mod ingest;
pub mod output;

/// Marks an error as the caller's fault (bad flags, malformed input,
/// out-of-domain settings) so the binary exits with code 2 instead of 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit code for an error chain: usage and validation problems are 2,
/// numerical failures 1.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<opcurve::Error>() {
            return match core {
                opcurve::Error::Numerical(_) => 1,
                _ => 2,
            };
        }
    }
    1
}
