//! Typed schemas for the CSV artifacts exchanged with other tools (landmark
//! tables, pixel annotations, sync tables), batch file discovery and run
//! manifests.

mod annotations;
mod discover;
mod landmarks;
mod manifest;
mod sync;
mod table;

pub use annotations::{read_annotations, write_annotations, AnnotationTable, PixelPoint};
pub use discover::{discover, DiscoverError};
pub use landmarks::{parse_landmarks, write_landmarks, LandmarkKind, LandmarkPoint, LandmarkTable};
pub use manifest::{FileFailure, ManifestError, RunManifest, RunStatus};
pub use sync::{apply_sync, parse_sync_table, FrameSelect, SyncEntry, SyncError, SyncTable};
pub use table::{fmt_exact, fmt_fixed, fmt_sig9, parse_cell, CsvWriter, Row, SchemaError, Table};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TabularError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("landmark table is {found:?}, expected {expected:?}")]
    Kind { expected: LandmarkKind, found: LandmarkKind },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}
