use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub const MANIFEST_JSON: &str = "manifest.json";
pub const MANIFEST_TXT: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
}

impl RunStatus {
    pub fn from_counts(succeeded: usize, failed: usize) -> Self {
        match (succeeded, failed) {
            (_, 0) if succeeded > 0 => RunStatus::Success,
            (0, _) => RunStatus::Failed,
            _ => RunStatus::Partial,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Partial => 2,
            RunStatus::Failed => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Partial => "partial",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileFailure {
    pub input: String,
    pub error: String,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot write manifest in {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
}

/// Record of one batch run. Paths in `outputs` are relative to the run
/// directory, `/`-separated and sorted; the manifest files themselves are
/// not listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// ISO-8601, local time with offset.
    pub timestamp: String,
    pub run_dir: String,
    pub inputs: Vec<String>,
    pub parameters: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub succeeded: Vec<String>,
    pub failures: Vec<FileFailure>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Flat `key=value` rendering; list items get indexed keys.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool={}", self.tool);
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "timestamp={}", self.timestamp);
        let _ = writeln!(s, "run_dir={}", self.run_dir);
        let _ = writeln!(s, "status={}", self.status.as_str());
        let _ = writeln!(s, "input_count={}", self.inputs.len());
        let _ = writeln!(s, "success_count={}", self.succeeded.len());
        let _ = writeln!(s, "failure_count={}", self.failures.len());
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "param.{k}={v}");
        }
        for (i, p) in self.inputs.iter().enumerate() {
            let _ = writeln!(s, "input.{i}={p}");
        }
        for (i, p) in self.outputs.iter().enumerate() {
            let _ = writeln!(s, "output.{i}={p}");
        }
        for (i, f) in self.failures.iter().enumerate() {
            let _ = writeln!(s, "failure.{i}={}: {}", f.input, f.error.replace('\n', " "));
        }
        s
    }

    /// Lists every regular file under `dir` (excluding the manifest pair)
    /// into `outputs`.
    pub fn collect_outputs(&mut self, dir: &Path) {
        self.outputs = list_outputs(dir);
    }

    /// Writes `manifest.json` and `manifest.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ManifestError> {
        let io = |source| ManifestError::Io { path: dir.to_path_buf(), source };
        fs::write(dir.join(MANIFEST_JSON), self.to_json()).map_err(io)?;
        fs::write(dir.join(MANIFEST_TXT), self.to_kv()).map_err(io)?;
        Ok(())
    }

    pub fn read_from(dir: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(dir.join(MANIFEST_JSON))
            .map_err(|source| ManifestError::Io { path: dir.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Listed outputs that are absent from `dir`, and files present but
    /// unlisted.
    pub fn diff_outputs(&self, dir: &Path) -> (Vec<String>, Vec<String>) {
        let present = list_outputs(dir);
        let missing = self.outputs.iter().filter(|p| !present.contains(p)).cloned().collect();
        let extra = present.into_iter().filter(|p| !self.outputs.contains(p)).collect();
        (missing, extra)
    }
}

fn list_outputs(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let rel = e.path().strip_prefix(dir).ok()?;
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/");
            (rel != MANIFEST_JSON && rel != MANIFEST_TXT).then_some(rel)
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunManifest {
        RunManifest {
            tool: "emg".into(),
            version: "0.1.0".into(),
            timestamp: "2024-01-02T03:04:05+00:00".into(),
            run_dir: "emg_20240102_030405".into(),
            inputs: vec!["a.csv".into(), "b.csv".into()],
            parameters: BTreeMap::from([("order".into(), "4".into())]),
            outputs: vec![],
            succeeded: vec!["a.csv".into()],
            failures: vec![FileFailure { input: "b.csv".into(), error: "line 3: bad".into() }],
            status: RunStatus::Partial,
        }
    }

    #[test]
    fn status_from_counts() {
        assert_eq!(RunStatus::from_counts(3, 0), RunStatus::Success);
        assert_eq!(RunStatus::from_counts(3, 1), RunStatus::Partial);
        assert_eq!(RunStatus::from_counts(0, 2), RunStatus::Failed);
        assert_eq!(RunStatus::Partial.exit_code(), 2);
    }

    #[test]
    fn json_round_trip_and_output_listing() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        fs::write(dir.path().join("a/x.csv"), "x").unwrap();
        fs::write(dir.path().join("plot.svg"), "x").unwrap();
        let mut m = sample();
        m.collect_outputs(dir.path());
        m.write_to(dir.path()).unwrap();
        assert_eq!(m.outputs, ["a/x.csv", "plot.svg"]);
        assert_eq!(RunManifest::read_from(dir.path()).unwrap(), m);
        assert_eq!(m.diff_outputs(dir.path()), (vec![], vec![]));
        let kv = fs::read_to_string(dir.path().join(MANIFEST_TXT)).unwrap();
        assert!(kv.contains("status=partial\n"));
        assert!(kv.contains("param.order=4\n"));
        assert!(kv.contains("failure.0=b.csv: line 3: bad\n"));
    }
}
