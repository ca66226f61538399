use std::fmt::Display;
use std::fs;
use std::path::Path;

use biomotion::kinematics::ClusterDefinition;

/// A command failure; always exit status 1.
#[derive(Debug)]
pub struct Failure(pub String);

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }

    pub fn fatal(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }

    pub fn data(path: &Path, e: impl Display) -> Self {
        Self(format!("{}: {e}", path.display()))
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::data(path, e))
}

pub fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Failure::data(path, e))
}

/// `NAME=M1,M2,M3`.
pub fn parse_cluster(spec: &str) -> Result<ClusterDefinition, Failure> {
    let bad = || Failure::usage(format!("cluster `{spec}` is not NAME=M1,M2,M3"));
    let (name, markers) = spec.split_once('=').ok_or_else(bad)?;
    let m: Vec<&str> = markers.split(',').map(str::trim).collect();
    match m.as_slice() {
        [a, b, c] if !name.trim().is_empty() && m.iter().all(|s| !s.is_empty()) => {
            Ok(ClusterDefinition::new(name.trim(), a, b, c))
        }
        _ => Err(bad()),
    }
}
