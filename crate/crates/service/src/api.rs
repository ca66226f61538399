use std::collections::BTreeMap;
use std::fs;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use biomotion::batch::{CopSelection, FileSelections, SelectionStore, ToolConfig, ToolKind, ToolParams, SELECTIONS_FILE};
use biomotion::forcecube::{parse_force_csv, ForceSelections, PickedPeaks};
use biomotion::plot::{min_max_decimate, Bucket};
use biomotion::tabular::{read_annotations, write_annotations, AnnotationTable, PixelPoint, Table};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::catalog::{catalog, relative, resolve_in_root};
use crate::error::{field, ApiError, FieldError};
use crate::runs::{execute, RunRecord};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    if body.is_empty() {
        return serde_json::from_str("{}").map_err(|e| ApiError::unprocessable(format!("request body required: {e}")));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

fn read_text(path: &std::path::Path) -> ApiResult<String> {
    fs::read_to_string(path).map_err(|e| ApiError::unprocessable(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
pub struct FilesQuery {
    #[serde(default)]
    dir: Option<String>,
}

pub async fn files(State(state): State<AppState>, Query(q): Query<FilesQuery>) -> ApiResult<Response> {
    let dir = match q.dir.as_deref() {
        Some(d) if !d.is_empty() => resolve_in_root(state.root(), d)?,
        _ => state.root().to_path_buf(),
    };
    let root = state.root().to_path_buf();
    let exclude = state.output_root().to_path_buf();
    let list = tokio::task::spawn_blocking(move || catalog(&root, &dir, &exclude))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(list).into_response())
}

#[derive(Debug, Deserialize)]
pub struct SeriesQuery {
    file: String,
    column: String,
    max_points: Option<usize>,
    rate_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResponse {
    pub file: String,
    pub column: String,
    pub rate_hz: f64,
    pub t0_s: f64,
    /// Sample count of the full series.
    pub n: usize,
    pub duration_s: f64,
    pub decimated: bool,
    /// Time-ordered samples drawn: every sample, or each bucket's min and
    /// max. Gaps are `null`.
    pub time: Vec<f64>,
    pub values: Vec<Option<f64>>,
    /// Sample index of every entry of `values`.
    pub index: Vec<usize>,
    pub buckets: Option<Vec<Bucket>>,
}

pub const DEFAULT_MAX_POINTS: usize = 2000;

pub async fn series(State(state): State<AppState>, Query(q): Query<SeriesQuery>) -> ApiResult<Json<SeriesResponse>> {
    let path = resolve_in_root(state.root(), &q.file)?;
    if !path.is_file() {
        return Err(ApiError::not_found(format!("no such file `{}`", q.file)));
    }
    let max_points = q.max_points.unwrap_or(DEFAULT_MAX_POINTS);
    if max_points == 0 {
        return Err(ApiError::validation(vec![field("max_points", "must be positive")]));
    }
    tokio::task::spawn_blocking(move || {
        let text = read_text(&path)?;
        let table = Table::parse(&text).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        if table.column_index(&q.column).is_none() {
            return Err(ApiError::validation(vec![field("column", format!("no column `{}`", q.column))]));
        }
        let s = parse_force_csv(&text, &q.column, q.rate_hz).map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let y = s.values();
        let (index, buckets) = if y.len() <= max_points {
            ((0..y.len()).collect::<Vec<_>>(), None)
        } else {
            let b = min_max_decimate(y, max_points);
            let mut idx = Vec::with_capacity(2 * b.len());
            for k in &b {
                let (lo, hi) = if k.min_index <= k.max_index { (k.min_index, k.max_index) } else { (k.max_index, k.min_index) };
                idx.push(lo);
                idx.push(hi);
            }
            (idx, Some(b))
        };
        Ok(Json(SeriesResponse {
            file: q.file,
            column: q.column,
            rate_hz: s.rate_hz(),
            t0_s: s.t0_s(),
            n: s.len(),
            duration_s: s.duration_s(),
            decimated: buckets.is_some(),
            time: index.iter().map(|&i| s.time_at(i)).collect(),
            values: index.iter().map(|&i| Some(y[i]).filter(|v| v.is_finite())).collect(),
            index,
            buckets,
        }))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPost {
    file: String,
    #[serde(default)]
    force: Option<ForceSelections>,
    #[serde(default)]
    cop: Option<CopSelection>,
}

fn validate_force(text: &str, sel: &ForceSelections) -> Vec<FieldError> {
    let column = sel.fz_column.as_deref().unwrap_or("fz");
    let fz = match Table::parse(text) {
        Ok(t) if t.resolve_column(column).is_err() => {
            return vec![field("force.fz_column", format!("no column named or numbered `{column}`"))]
        }
        Ok(_) => match parse_force_csv(text, column, None) {
            Ok(fz) => fz,
            Err(e) => return vec![field("file", e.to_string())],
        },
        Err(e) => return vec![field("file", e.to_string())],
    };
    let mut errs: Vec<FieldError> =
        sel.validate(fz.t0_s(), fz.end_s()).into_iter().map(|(f, m)| field(format!("force.{f}"), m)).collect();
    for (k, p) in sel.picked_peaks.iter().enumerate() {
        let (lo, hi) = match sel.analysis_windows.get(k) {
            Some(&(a, b)) => match fz.index_window(a, b) {
                Ok(r) => r,
                Err(_) => continue,
            },
            None => (0, fz.len()),
        };
        let PickedPeaks { itransient, vip, max } = *p;
        for (name, v) in [("itransient", itransient), ("vip", vip), ("max", max)] {
            if let Some(i) = v {
                if i < lo || i >= hi {
                    errs.push(field(
                        format!("force.picked_peaks[{k}].{name}"),
                        format!("sample {i} is outside the window's samples {lo}..{hi}"),
                    ));
                }
            }
        }
    }
    errs
}

fn validate_cop(text: &str, sel: &CopSelection) -> Vec<FieldError> {
    let table = match Table::parse(text) {
        Ok(t) => t,
        Err(e) => return vec![field("file", e.to_string())],
    };
    let mut errs = Vec::new();
    for (name, col) in [("cop.cx_column", &sel.cx_column), ("cop.cy_column", &sel.cy_column)] {
        if table.resolve_column(col).is_err() {
            errs.push(field(name, format!("no column named or numbered `{col}`")));
        }
    }
    errs
}

pub async fn post_selections(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<FileSelections>> {
    let req: SelectionPost = parse_body(&body)?;
    let path = resolve_in_root(state.root(), &req.file)?;
    if req.force.is_none() && req.cop.is_none() {
        return Err(ApiError::validation(vec![field("force", "one of `force` or `cop` is required")]));
    }
    let text = read_text(&path)?;
    let mut errs = Vec::new();
    if let Some(f) = &req.force {
        errs.extend(validate_force(&text, f));
    }
    if let Some(c) = &req.cop {
        errs.extend(validate_cop(&text, c));
    }
    if !errs.is_empty() {
        return Err(ApiError::validation(errs));
    }
    let key = relative(state.root(), &path);
    let store_path = state.root().join(SELECTIONS_FILE);
    let _guard = state.lock_file(&store_path).await;
    let mut store = SelectionStore::load(&store_path).map_err(|e| ApiError::internal(e.to_string()))?;
    if let Some(f) = req.force {
        store.upsert_force(&key, f);
    }
    if let Some(c) = req.cop {
        store.upsert_cop(&key, c);
    }
    store.save(&store_path).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(store.get(&key).cloned().unwrap_or_default()))
}

#[derive(Debug, Deserialize)]
pub struct FileQuery {
    file: Option<String>,
    #[serde(default)]
    format: Option<String>,
}

pub async fn get_selections(State(state): State<AppState>, Query(q): Query<FileQuery>) -> ApiResult<Response> {
    let store_path = state.root().join(SELECTIONS_FILE);
    let store = SelectionStore::load(&store_path).map_err(|e| ApiError::internal(e.to_string()))?;
    match q.file {
        None => Ok(Json(store).into_response()),
        Some(f) => {
            let key = relative(state.root(), &resolve_in_root(state.root(), &f)?);
            match store.get(&key) {
                Some(s) => Ok(Json(s.clone()).into_response()),
                None => Err(ApiError::not_found(format!("no selections stored for `{f}`"))),
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkDelta {
    frame: i64,
    /// 1-based slot, `p1` is 1.
    point: usize,
    x: Option<f64>,
    y: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationPost {
    file: String,
    #[serde(default)]
    marks: Vec<MarkDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub frame: u64,
    pub points: Vec<Option<PixelPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub file: String,
    pub slots: usize,
    pub marked: usize,
    pub frames: Vec<AnnotatedFrame>,
}

fn annotation_wire(file: String, t: &AnnotationTable) -> AnnotationResponse {
    AnnotationResponse {
        file,
        slots: t.slots,
        marked: t.marked_count(),
        frames: t.frames.iter().map(|(&frame, points)| AnnotatedFrame { frame, points: points.clone() }).collect(),
    }
}

fn load_annotations(path: &std::path::Path) -> ApiResult<AnnotationTable> {
    match fs::read_to_string(path) {
        Ok(text) => read_annotations(&text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(AnnotationTable::new(0)),
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

fn validate_marks(marks: &[MarkDelta]) -> Vec<FieldError> {
    let mut errs = Vec::new();
    for (i, m) in marks.iter().enumerate() {
        if m.frame < 0 {
            errs.push(field(format!("marks[{i}].frame"), "must be non-negative"));
        }
        if m.point == 0 {
            errs.push(field(format!("marks[{i}].point"), "slots are numbered from 1"));
        }
        match (m.x, m.y) {
            (Some(_), None) | (None, Some(_)) => {
                errs.push(field(format!("marks[{i}]"), "x and y must both be set or both be null"))
            }
            _ => {}
        }
        for (name, v) in [("x", m.x), ("y", m.y)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    errs.push(field(format!("marks[{i}].{name}"), "pixel coordinates must be finite and non-negative"));
                }
            }
        }
    }
    errs
}

pub async fn post_annotations(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<AnnotationResponse>> {
    let req: AnnotationPost = parse_body(&body)?;
    let path = resolve_in_root(state.root(), &req.file)?;
    let errs = validate_marks(&req.marks);
    if !errs.is_empty() {
        return Err(ApiError::validation(errs));
    }
    let key = relative(state.root(), &path);
    let store = state.annotation_path(&key);
    let _guard = state.lock_file(&store).await;
    let mut table = load_annotations(&store)?;
    for m in &req.marks {
        let point = m.x.zip(m.y).map(|(x, y)| PixelPoint { x, y });
        table.upsert(m.frame as u64, m.point - 1, point);
    }
    table.frames.retain(|_, row| row.iter().any(Option::is_some));
    if !req.marks.is_empty() {
        if let Some(dir) = store.parent() {
            fs::create_dir_all(dir).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let tmp = store.with_extension("csv.tmp");
        fs::write(&tmp, write_annotations(&table))
            .and_then(|_| fs::rename(&tmp, &store))
            .map_err(|e| ApiError::internal(e.to_string()))?;
    }
    Ok(Json(annotation_wire(key, &table)))
}

pub async fn get_annotations(State(state): State<AppState>, Query(q): Query<FileQuery>) -> ApiResult<Response> {
    let Some(file) = q.file else {
        return Err(ApiError::validation(vec![field("file", "required")]));
    };
    let key = relative(state.root(), &resolve_in_root(state.root(), &file)?);
    let table = load_annotations(&state.annotation_path(&key))?;
    match q.format.as_deref() {
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], write_annotations(&table)).into_response()),
        None | Some("json") => Ok(Json(annotation_wire(key, &table)).into_response()),
        Some(other) => Err(ApiError::validation(vec![field("format", format!("unknown format `{other}`"))])),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    /// `key = value` overrides on the tool's defaults.
    #[serde(default)]
    set: BTreeMap<String, String>,
    #[serde(default)]
    jobs: Option<usize>,
}

pub async fn post_run(
    State(state): State<AppState>,
    UrlPath(tool): UrlPath<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<RunRecord>)> {
    let kind = ToolKind::from_name(&tool).ok_or_else(|| ApiError::not_found(format!("unknown tool `{tool}`")))?;
    let req: RunRequest = parse_body(&body)?;
    if req.jobs == Some(0) {
        return Err(ApiError::validation(vec![field("jobs", "must be positive")]));
    }
    let mut params = ToolParams::defaults(kind)
        .with_overrides(&req.set)
        .map_err(|e| ApiError::validation(vec![field("set", e.to_string())]))?;
    let store = state.root().join(SELECTIONS_FILE).display().to_string();
    match &mut params {
        ToolParams::ForceCube(p) if !req.set.contains_key("selections") => p.selections = store,
        ToolParams::Cop(p) if !req.set.contains_key("selections") => p.selections = store,
        _ => {}
    }
    let cfg = ToolConfig {
        input_root: state.root().to_path_buf(),
        output_root: state.output_root().to_path_buf(),
        params,
        jobs: req.jobs,
    };
    let id = state.next_run_id();
    let rec = RunRecord::queued(id.clone(), kind);
    state.insert_run(rec.clone());
    tokio::spawn(execute(state.clone(), id, cfg));
    Ok((StatusCode::ACCEPTED, Json(rec)))
}

pub async fn get_run(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RunRecord>> {
    state.run(&id).map(Json).ok_or_else(|| ApiError::not_found(format!("no run `{id}`")))
}

pub async fn list_runs(State(state): State<AppState>) -> Json<Vec<RunRecord>> {
    Json(state.runs())
}

pub async fn no_ui() -> ApiError {
    ApiError::not_found("no UI assets configured; start the service with a UI directory")
}
