use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    C3d,
    Video,
    ForceCsv,
    CopCsv,
    EmgCsv,
    ImuCsv,
    MarkerCsv,
    LandmarkCsv,
    AnnotationCsv,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// `/`-separated, relative to the workspace root.
    pub path: String,
    #[serde(rename = "type")]
    pub kind: FileKind,
    pub size: u64,
}

const VIDEO_EXTENSIONS: [&str; 6] = ["mp4", "mov", "avi", "webm", "mkv", "m4v"];

/// Resolves a client-supplied relative path inside `root` (which must be
/// canonical). Absolute paths, `..` components and symlinks leading
/// outside the root are refused with 403; missing targets give 404.
pub fn resolve_in_root(root: &Path, rel: &str) -> Result<PathBuf, ApiError> {
    let rel_path = Path::new(rel);
    if rel_path.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(ApiError::forbidden(format!("`{rel}` points outside the workspace")));
    }
    let joined = root.join(rel_path);
    let canon = joined.canonicalize().map_err(|_| ApiError::not_found(format!("no such file `{rel}`")))?;
    if !canon.starts_with(root) {
        return Err(ApiError::forbidden(format!("`{rel}` points outside the workspace")));
    }
    Ok(canon)
}

pub fn relative(root: &Path, path: &Path) -> String {
    biomotion::batch::relative_key(root, path)
}

fn csv_kind(path: &Path) -> FileKind {
    let Ok(f) = File::open(path) else { return FileKind::Csv };
    let mut line = String::new();
    if BufReader::new(f.take(64 * 1024)).read_line(&mut line).is_err() {
        return FileKind::Csv;
    }
    let h: Vec<String> = line.trim().split(',').map(|c| c.trim().trim_matches('"').to_ascii_lowercase()).collect();
    let has = |name: &str| h.iter().any(|c| c == name);
    let first = h.first().map(String::as_str).unwrap_or("");
    let is_pair = |i: usize, c: &str| {
        let want = [format!("p{}_x", i / 2 + 1), format!("p{}_y", i / 2 + 1)];
        c == want[i % 2]
    };
    if first == "frame" && h.len() > 1 && h[1..].iter().enumerate().all(|(i, c)| is_pair(i, c)) {
        FileKind::AnnotationCsv
    } else if first == "frame" || first == "frame_index" {
        FileKind::LandmarkCsv
    } else if has("gyro_x") {
        FileKind::ImuCsv
    } else if has("cx") && has("cy") {
        FileKind::CopCsv
    } else if has("fz") {
        FileKind::ForceCsv
    } else if first == "time"
        && h.len() >= 4
        && (h.len() - 1) % 3 == 0
        && h[1..].chunks(3).all(|t| t[0].ends_with("_x") && t[1].ends_with("_y") && t[2].ends_with("_z"))
    {
        FileKind::MarkerCsv
    } else if (first == "time" || first == "time_s") && h.len() > 1 {
        FileKind::EmgCsv
    } else {
        FileKind::Csv
    }
}

pub fn classify(path: &Path) -> Option<FileKind> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "c3d" => Some(FileKind::C3d),
        "csv" => Some(csv_kind(path)),
        e if VIDEO_EXTENSIONS.contains(&e) => Some(FileKind::Video),
        _ => None,
    }
}

/// Data files under `dir`, sorted by path. Hidden entries and anything
/// under `exclude` are skipped.
pub fn catalog(root: &Path, dir: &Path, exclude: &Path) -> Vec<FileEntry> {
    let mut out: Vec<FileEntry> = WalkDir::new(dir)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| {
            (e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.')) && !e.path().starts_with(exclude)
        })
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let kind = classify(e.path())?;
            let size = e.metadata().map(|m| m.len()).unwrap_or(0);
            Some(FileEntry { path: relative(root, e.path()), kind, size })
        })
        .collect();
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out
}
