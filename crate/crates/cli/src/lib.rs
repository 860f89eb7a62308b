//! Batch pipeline behind the `lumen3d` executable.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod demo;
pub mod error;
pub mod job;
pub mod output;

pub use error::{CliError, CliResult};
pub use job::{Job, JobConfig};

/// JSON Schema of a viewer bundle's `manifest.json`.
pub const BUNDLE_MANIFEST_SCHEMA: &str = include_str!("../schema/bundle-manifest.schema.json");

/// Sizes the global worker pool from `LUMEN3D_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("LUMEN3D_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            error::config(format!(
                "LUMEN3D_THREADS={value:?} is not a positive integer"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| error::config(format!("cannot size thread pool: {e}")))
}
