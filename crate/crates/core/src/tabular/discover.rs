use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum DiscoverError {
    #[error("input directory {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("cannot walk {path}: {message}")]
    Walk { path: PathBuf, message: String },
}

/// Recursively lists files under `root` whose extension matches
/// `extension` (`.c3d`, `c3d` and `*.c3d` are equivalent; matching ignores
/// case), in lexicographic path order. Hidden entries (names starting with
/// `.`) below the root are skipped.
pub fn discover(root: &Path, extension: &str) -> Result<Vec<PathBuf>, DiscoverError> {
    if !root.is_dir() {
        return Err(DiscoverError::MissingRoot(root.to_path_buf()));
    }
    let wanted = extension.trim().trim_start_matches('*').trim_start_matches('.').to_ascii_lowercase();
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| DiscoverError::Walk {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let matches = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(&wanted));
        if matches {
            files.push(entry.into_path());
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn empty_dir_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(discover(dir.path(), ".csv").unwrap().is_empty());
    }

    #[test]
    fn lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.csv"), "").unwrap();
        fs::write(dir.path().join("a.csv"), "").unwrap();
        let found = discover(dir.path(), ".csv").unwrap();
        let names: Vec<_> = found.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["a.csv", "b.csv"]);
    }

    #[test]
    fn only_matching_extension_recursively() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("sub/deeper")).unwrap();
        for f in ["x.c3d", "x.csv", "sub/y.C3D", "sub/deeper/z.c3d", "sub/notes.txt", "c3d"] {
            fs::write(dir.path().join(f), "").unwrap();
        }
        let found = discover(dir.path(), ".c3d").unwrap();
        assert_eq!(found.len(), 3);
        assert!(found.iter().all(|p| p.extension().unwrap().eq_ignore_ascii_case("c3d")));
        assert_eq!(found, discover(dir.path(), "*.c3d").unwrap());
    }

    #[test]
    fn hidden_entries_skipped() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join(".state")).unwrap();
        for f in [".state/a.csv", ".b.csv", "c.csv"] {
            fs::write(dir.path().join(f), "").unwrap();
        }
        assert_eq!(discover(dir.path(), "csv").unwrap(), vec![dir.path().join("c.csv")]);
    }

    #[test]
    fn missing_root_is_path_error() {
        assert!(matches!(discover(Path::new("/definitely/not/here"), "csv"), Err(DiscoverError::MissingRoot(_))));
    }
}
