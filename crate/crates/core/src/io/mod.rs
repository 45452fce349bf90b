//! File formats, embedding providers and synthetic sequences.

use std::path::PathBuf;

use thiserror::Error;

pub mod mot;
pub mod provider;
pub mod sidecar;
pub mod synth;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot open {}: {source}", path.display())]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("sidecar misaligned: {0}")]
    SidecarMisaligned(String),
    #[error("{}:{line}: non-normalized embedding (norm {norm})", path.display())]
    NonNormalized { path: PathBuf, line: u64, norm: f64 },
}
