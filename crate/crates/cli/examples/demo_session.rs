//! Writes a synthetic capture session for trying the pipeline:
//!
//! ```text
//! cargo run --example demo_session -- /tmp/session spheres
//! lumen3d solve --job /tmp/session/job.json
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use lumen3d_cli::demo::{write_dome_session, write_sphere_session};

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let (Some(dir), kind) = (args.next(), args.next()) else {
        eprintln!("usage: demo_session <dir> [spheres|dome]");
        return ExitCode::from(2);
    };
    let dir = PathBuf::from(dir);
    let written = match kind.as_deref().unwrap_or("spheres") {
        "spheres" => write_sphere_session(&dir, 12, 7),
        "dome" => write_dome_session(&dir, 64, 7),
        other => {
            eprintln!("unknown session kind {other:?}");
            return ExitCode::from(2);
        }
    };
    match written {
        Ok(job) => {
            println!("{}", job.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
