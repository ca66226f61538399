//! Local HTTP facade over a workspace directory: file catalog, decimated
//! series, selections, pixel annotations and batch runs, plus static
//! `/media` (byte-range) and `/ui` serving. Binds loopback only.

mod api;
mod catalog;
mod error;
mod runs;

use std::collections::{BTreeMap, HashMap};
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

pub use catalog::{catalog, classify, resolve_in_root, FileEntry, FileKind};
pub use error::{ApiError, FieldError};
pub use runs::{RunRecord, RunState};

pub const DEFAULT_PORT: u16 = 8765;
/// Hidden per-workspace state directory (annotations live here).
pub const STATE_DIR: &str = ".biomotion";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub workspace: PathBuf,
    /// Batch runs land here; defaults to `<workspace>/runs`.
    pub output_root: Option<PathBuf>,
    /// Built frontend served at `/ui`.
    pub ui_dir: Option<PathBuf>,
    pub port: u16,
}

impl ServiceConfig {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        Self { workspace: workspace.into(), output_root: None, ui_dir: None, port: DEFAULT_PORT }
    }
}

pub(crate) struct Inner {
    root: PathBuf,
    output_root: PathBuf,
    ui_dir: Option<PathBuf>,
    file_locks: Mutex<HashMap<PathBuf, Arc<tokio::sync::Mutex<()>>>>,
    runs: Mutex<BTreeMap<String, RunRecord>>,
    next_run: AtomicU64,
    pub(crate) run_slot: tokio::sync::Mutex<()>,
    pub(crate) run_gate: tokio::sync::RwLock<()>,
}

#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig) -> std::io::Result<Self> {
        let root = cfg.workspace.canonicalize()?;
        if !root.is_dir() {
            return Err(std::io::Error::new(std::io::ErrorKind::NotADirectory, "workspace is not a directory"));
        }
        let output_root = match &cfg.output_root {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => root.join(p),
            None => root.join(RUNS_DIR),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                root,
                output_root,
                ui_dir: cfg.ui_dir.clone(),
                file_locks: Mutex::new(HashMap::new()),
                runs: Mutex::new(BTreeMap::new()),
                next_run: AtomicU64::new(1),
                run_slot: tokio::sync::Mutex::new(()),
                run_gate: tokio::sync::RwLock::new(()),
            }),
        })
    }

    /// Canonical workspace root.
    pub fn root(&self) -> &Path {
        &self.inner.root
    }

    pub fn output_root(&self) -> &Path {
        &self.inner.output_root
    }

    pub(crate) fn annotation_path(&self, rel: &str) -> PathBuf {
        self.inner.root.join(STATE_DIR).join("annotations").join(format!("{rel}.csv"))
    }

    /// Serializes writers of one file.
    pub(crate) async fn lock_file(&self, path: &Path) -> tokio::sync::OwnedMutexGuard<()> {
        let lock = {
            let mut locks = self.inner.file_locks.lock().expect("lock map poisoned");
            locks.entry(path.to_path_buf()).or_default().clone()
        };
        lock.lock_owned().await
    }

    pub(crate) fn next_run_id(&self) -> String {
        format!("run-{:06}", self.inner.next_run.fetch_add(1, Ordering::Relaxed))
    }

    pub(crate) fn insert_run(&self, rec: RunRecord) {
        self.inner.runs.lock().expect("run table poisoned").insert(rec.id.clone(), rec);
    }

    pub(crate) fn update_run(&self, id: &str, f: impl FnOnce(&mut RunRecord)) {
        if let Some(r) = self.inner.runs.lock().expect("run table poisoned").get_mut(id) {
            f(r);
        }
    }

    pub fn run(&self, id: &str) -> Option<RunRecord> {
        self.inner.runs.lock().expect("run table poisoned").get(id).cloned()
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.inner.runs.lock().expect("run table poisoned").values().cloned().collect()
    }

    /// Holds started runs before they touch any file until the guard drops.
    #[doc(hidden)]
    pub async fn pause_runs(&self) -> tokio::sync::RwLockWriteGuard<'_, ()> {
        self.inner.run_gate.write().await
    }
}

pub fn router(state: AppState) -> Router {
    let media = ServeDir::new(state.root());
    let ui = state.inner.ui_dir.clone();
    let mut app = Router::new()
        .route("/api/files", get(api::files))
        .route("/api/series", get(api::series))
        .route("/api/selections", get(api::get_selections).post(api::post_selections))
        .route("/api/annotations", get(api::get_annotations).post(api::post_annotations))
        .route("/api/run/{tool}", post(api::post_run))
        .route("/api/runs", get(api::list_runs))
        .route("/api/runs/{id}", get(api::get_run))
        .nest_service("/media", media);
    app = match ui {
        Some(dir) => app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => app.route("/ui", get(api::no_ui)).route("/ui/{*rest}", get(api::no_ui)),
    };
    app.with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(&cfg)?;
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, cfg.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{}", state.root().display(), listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
