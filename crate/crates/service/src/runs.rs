use biomotion::batch::{run_tool, ToolConfig, ToolKind};
use biomotion::tabular::{RunManifest, RunStatus};
use chrono::{Local, SecondsFormat};
use serde::{Deserialize, Serialize};

use crate::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Queued,
    Running,
    Done,
    Failed,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub tool: String,
    pub status: RunState,
    pub submitted: String,
    pub started: Option<String>,
    pub finished: Option<String>,
    /// Relative to the workspace root.
    pub run_dir: Option<String>,
    pub manifest: Option<RunManifest>,
    pub error: Option<String>,
}

pub(crate) fn now() -> String {
    Local::now().to_rfc3339_opts(SecondsFormat::Secs, false)
}

impl RunRecord {
    pub(crate) fn queued(id: String, tool: ToolKind) -> Self {
        Self {
            id,
            tool: tool.name().into(),
            status: RunState::Queued,
            submitted: now(),
            started: None,
            finished: None,
            run_dir: None,
            manifest: None,
            error: None,
        }
    }
}

/// Waits for the workspace run slot, then executes the batch on a blocking
/// thread and records the outcome.
pub(crate) async fn execute(state: AppState, id: String, cfg: ToolConfig) {
    let _slot = state.inner.run_slot.lock().await;
    state.update_run(&id, |r| {
        r.status = RunState::Running;
        r.started = Some(now());
    });
    let _gate = state.inner.run_gate.read().await;
    let root = state.root().to_path_buf();
    let result = tokio::task::spawn_blocking(move || run_tool(&cfg)).await;
    state.update_run(&id, |r| {
        r.finished = Some(now());
        match result {
            Ok(Ok(out)) => {
                r.status = match out.manifest.status {
                    RunStatus::Success => RunState::Done,
                    RunStatus::Partial => RunState::Partial,
                    RunStatus::Failed => RunState::Failed,
                };
                r.run_dir = Some(crate::catalog::relative(&root, &out.run_dir));
                r.manifest = Some(out.manifest);
            }
            Ok(Err(e)) => {
                r.status = RunState::Failed;
                r.error = Some(e.to_string());
            }
            Err(e) => {
                r.status = RunState::Failed;
                r.error = Some(format!("run aborted: {e}"));
            }
        }
    });
    log::info!("run {id} finished");
}
