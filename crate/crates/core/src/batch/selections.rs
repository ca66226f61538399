use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BatchError;
use crate::forcecube::ForceSelections;

pub const SELECTIONS_FILE: &str = "selections.json";

/// CoP column choice for one file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopSelection {
    pub cx_column: String,
    pub cy_column: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FileSelections {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<ForceSelections>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cop: Option<CopSelection>,
}

/// Per-file selections keyed by `/`-separated path relative to the
/// workspace root.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionStore {
    #[serde(default)]
    pub files: BTreeMap<String, FileSelections>,
}

impl SelectionStore {
    /// A missing file is an empty store.
    pub fn load(path: &Path) -> Result<Self, BatchError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| BatchError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(BatchError::Path { path: path.to_path_buf(), message: e.to_string() }),
        }
    }

    /// Writes through a temporary sibling and a rename.
    pub fn save(&self, path: &Path) -> Result<(), BatchError> {
        let io = |e: std::io::Error| BatchError::Path { path: path.to_path_buf(), message: e.to_string() };
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("selections serialize");
        fs::write(&tmp, text + "\n").map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn get(&self, file: &str) -> Option<&FileSelections> {
        self.files.get(file)
    }

    pub fn upsert_force(&mut self, file: &str, sel: ForceSelections) {
        self.files.entry(file.to_owned()).or_default().force = Some(sel);
    }

    pub fn upsert_cop(&mut self, file: &str, sel: CopSelection) {
        self.files.entry(file.to_owned()).or_default().cop = Some(sel);
    }
}
