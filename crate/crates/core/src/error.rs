use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{DatasetError, ManifestError};
use crate::decompose::DecomposeError;
use crate::preprocess::PreprocessError;
use crate::stats::StatsError;
use crate::synchrony::SynchronyError;
use crate::synthgen::SynthError;
use crate::vizmap::VizError;

/// Process exit codes.
pub const EXIT_MANIFEST: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{context}: {source}")]
    Dataset { context: String, source: DatasetError },
    #[error("{context}: {source}")]
    Preprocess { context: String, source: PreprocessError },
    #[error("{context}: {source}")]
    Decompose { context: String, source: DecomposeError },
    #[error("{context}: {source}")]
    Synchrony { context: String, source: SynchronyError },
    #[error("{context}: {source}")]
    Stats { context: String, source: StatsError },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{context}: {source}")]
    Viz { context: String, source: VizError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed artifact: {source}", path.display())]
    Artifact { path: PathBuf, source: serde_json::Error },
}

/// Attach a context string while converting a module error.
pub trait Context<T> {
    fn context(self, context: impl Into<String>) -> Result<T, Error>;
}

macro_rules! context_impl {
    ($err:ty, $variant:ident) => {
        impl<T> Context<T> for Result<T, $err> {
            fn context(self, context: impl Into<String>) -> Result<T, Error> {
                self.map_err(|source| Error::$variant { context: context.into(), source })
            }
        }
    };
}

context_impl!(DatasetError, Dataset);
context_impl!(PreprocessError, Preprocess);
context_impl!(DecomposeError, Decompose);
context_impl!(SynchronyError, Synchrony);
context_impl!(StatsError, Stats);
context_impl!(VizError, Viz);

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Module-qualified identifier such as `dataset.rate_mismatch`.
    pub fn code(&self) -> String {
        let (module, variant) = match self {
            Error::Manifest(e) => ("manifest", variant_name(e)),
            Error::Dataset { source, .. } => ("dataset", variant_name(source)),
            Error::Preprocess { source, .. } => ("preprocess", variant_name(source)),
            Error::Decompose { source, .. } => ("decompose", variant_name(source)),
            Error::Synchrony { source, .. } => ("synchrony", variant_name(source)),
            Error::Stats { source, .. } => ("stats", variant_name(source)),
            Error::Synth(e) => ("synthgen", variant_name(e)),
            Error::Viz { source, .. } => ("vizmap", variant_name(source)),
            Error::Io { .. } => ("io", "Io".to_string()),
            Error::Artifact { .. } => ("cli", "Artifact".to_string()),
        };
        format!("{module}.{}", snake_case(&variant))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Manifest(_) | Error::Synth(_) => EXIT_MANIFEST,
            Error::Dataset { .. } | Error::Io { .. } | Error::Artifact { .. } => EXIT_DATA,
            Error::Preprocess { source, .. } => match source {
                PreprocessError::CutoffAboveNyquist { .. } | PreprocessError::InvalidConfig(_) => EXIT_MANIFEST,
                _ => EXIT_NUMERIC,
            },
            Error::Decompose { source, .. } => match source {
                DecomposeError::Filter(_) => EXIT_NUMERIC,
                _ => EXIT_MANIFEST,
            },
            Error::Synchrony { source, .. } => match source {
                SynchronyError::EmptyCohort(_)
                | SynchronyError::PairTableFormat(_)
                | SynchronyError::RateMismatch { .. } => EXIT_DATA,
                SynchronyError::InfeasibleBand { .. } | SynchronyError::NonIntegerRate { .. } => EXIT_MANIFEST,
                _ => EXIT_NUMERIC,
            },
            Error::Stats { source, .. } => match source {
                StatsError::TableFormat(_) | StatsError::IncompleteDesign(_) => EXIT_DATA,
                _ => EXIT_NUMERIC,
            },
            Error::Viz { source, .. } => match source {
                VizError::DegenerateRange => EXIT_NUMERIC,
                VizError::InvalidConfig(_) => EXIT_MANIFEST,
                _ => EXIT_DATA,
            },
        }
    }

    /// Single-line JSON for machine consumers.
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.code(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let path = match self {
            Error::Manifest(ManifestError::MissingFile { path })
            | Error::Manifest(ManifestError::Io { path, .. })
            | Error::Io { path, .. }
            | Error::Artifact { path, .. } => Some(path),
            _ => None,
        };
        if let Some(path) = path {
            obj["path"] = path.display().to_string().into();
        }
        obj.to_string()
    }
}

fn variant_name(e: &impl std::fmt::Debug) -> String {
    format!("{e:?}").chars().take_while(char::is_ascii_alphanumeric).collect()
}

fn snake_case(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}
