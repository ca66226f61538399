//! Directory-level batch runs: discover inputs, process each file
//! independently on a worker pool, and record the run in a manifest.

mod params;
mod selections;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Local, SecondsFormat};
use rayon::prelude::*;
use thiserror::Error;

pub use params::{
    parse_kv, C3dToCsvParams, ClusterToolParams, CopToolParams, CsvToC3dParams, ForceToolParams, MarkerFormat, ToolKind,
    ToolParams,
};
pub use selections::{CopSelection, FileSelections, SelectionStore, SELECTIONS_FILE};

use crate::c3d::{c3d_to_csv, csv_to_c3d_with_units, parse_triplet_csv, read_c3d, write_c3d};
use crate::cop::{analyze_cop, metrics_csv, parse_cop_csv, write_cop_report, CopMetrics};
use crate::emg::{emg_pipeline, parse_emg_csv, summary_csv, write_emg_outputs};
use crate::forcecube::{analyze_file, fill_cumsum, invalid_fields_csv, parse_force_csv, plot_trial, rows_to_csv, ForceCubeRow, ForceSelections, G};
use crate::kinematics::{cluster_pipeline, imu_pipeline};
use crate::model::LengthUnit;
use crate::tabular::{discover, DiscoverError, FileFailure, ManifestError, RunManifest, RunStatus};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FORCECUBE_RESULTS: &str = "forcecube_results.csv";
pub const FORCECUBE_INVALID: &str = "forcecube_invalid_fields.csv";
pub const COP_METRICS: &str = "cop_metrics.csv";
pub const EULER_SEQUENCE: &str = "XYZ Cardan, R = Rx·Ry·Rz";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("no `.{extension}` files under {}", root.display())]
    EmptyBatch { root: PathBuf, extension: String },
    #[error("{}: {message}", path.display())]
    Path { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

impl BatchError {
    /// Process exit status for a run that could not complete.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolConfig {
    pub input_root: PathBuf,
    pub output_root: PathBuf,
    pub params: ToolParams,
    /// Worker threads; logical cores when absent.
    pub jobs: Option<usize>,
}

impl ToolConfig {
    pub fn new(tool: ToolKind, input_root: impl Into<PathBuf>, output_root: impl Into<PathBuf>) -> Self {
        Self { input_root: input_root.into(), output_root: output_root.into(), params: ToolParams::defaults(tool), jobs: None }
    }

    pub fn tool(&self) -> ToolKind {
        self.params.kind()
    }

    pub fn extension(&self) -> &'static str {
        match &self.params {
            ToolParams::C3dToCsv(_) => "c3d",
            ToolParams::Cluster(p) if p.input_format == MarkerFormat::C3d => "c3d",
            _ => "csv",
        }
    }

    /// Manifest parameter record: the effective tool parameters plus run
    /// settings.
    pub fn record(&self) -> std::collections::BTreeMap<String, String> {
        let mut m = self.params.record();
        m.insert("run.input_extension".into(), self.extension().into());
        m.insert("run.jobs".into(), self.jobs.map_or_else(|| "auto".into(), |j| j.to_string()));
        match self.tool() {
            ToolKind::Cluster | ToolKind::Imu => {
                m.insert("run.euler_sequence".into(), EULER_SEQUENCE.into());
            }
            ToolKind::Emg => {
                m.insert("run.filter".into(), "butterworth band-pass, zero-phase forward-backward".into());
            }
            ToolKind::Cop => {
                m.insert("run.output_unit".into(), "cm".into());
            }
            _ => {}
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.manifest.status.exit_code()
    }
}

enum FileResult {
    Done,
    Force(Vec<ForceCubeRow>),
    Cop(Box<CopMetrics>),
}

struct Context<'a> {
    cfg: &'a ToolConfig,
    run_dir: &'a Path,
    timestamp: &'a str,
    selections: SelectionStore,
    selections_base: PathBuf,
}

impl Context<'_> {
    fn selection(&self, file: &Path) -> Option<&FileSelections> {
        let canon = fs::canonicalize(file).unwrap_or_else(|_| file.to_path_buf());
        self.selections.get(&relative_key(&self.selections_base, &canon))
    }
}

fn path_err(path: &Path, e: impl std::fmt::Display) -> BatchError {
    BatchError::Path { path: path.to_path_buf(), message: e.to_string() }
}

/// `/`-separated path of `file` relative to `root`.
pub fn relative_key(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn claim_run_dir(output_root: &Path, tool: ToolKind, now: &DateTime<Local>) -> Result<PathBuf, BatchError> {
    let base = format!("{}_{}", tool.name(), now.format("%Y%m%d_%H%M%S"));
    for n in 1.. {
        let name = if n == 1 { base.clone() } else { format!("{base}_{n}") };
        let dir = output_root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(path_err(&dir, e)),
        }
    }
    unreachable!()
}

/// Runs one tool over every matching file under the input root. Per-file
/// failures are recorded and never abort the batch.
pub fn run_tool(cfg: &ToolConfig) -> Result<RunOutcome, BatchError> {
    let tool = cfg.tool();
    let ext = cfg.extension();
    if let ToolParams::Cluster(p) = &cfg.params {
        if p.clusters.is_empty() {
            return Err(BatchError::Config("no clusters defined".into()));
        }
    }
    let mut files = discover(&cfg.input_root, ext).map_err(|e| match e {
        DiscoverError::MissingRoot(p) => path_err(&p, "input directory does not exist"),
        other => path_err(&cfg.input_root, other),
    })?;
    fs::create_dir_all(&cfg.output_root).map_err(|e| path_err(&cfg.output_root, e))?;
    let out_canon = fs::canonicalize(&cfg.output_root).map_err(|e| path_err(&cfg.output_root, e))?;
    files.retain(|f| !fs::canonicalize(f).is_ok_and(|c| c.starts_with(&out_canon)));
    if files.is_empty() {
        return Err(BatchError::EmptyBatch { root: cfg.input_root.clone(), extension: ext.into() });
    }

    let selections_path = match &cfg.params {
        ToolParams::ForceCube(p) => Some(cfg.input_root.join(&p.selections)),
        ToolParams::Cop(p) => Some(cfg.input_root.join(&p.selections)),
        _ => None,
    };
    let selections = match &selections_path {
        Some(p) => SelectionStore::load(p)?,
        None => SelectionStore::default(),
    };
    let selections_base = selections_path
        .as_deref()
        .and_then(Path::parent)
        .map(|p| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()))
        .unwrap_or_else(|| cfg.input_root.clone());
    let now = Local::now();
    let timestamp = now.to_rfc3339_opts(SecondsFormat::Secs, false);
    let run_dir = claim_run_dir(&cfg.output_root, tool, &now)?;
    log::info!("biomotion {TOOL_VERSION}: {tool} over {} file(s) into {}", files.len(), run_dir.display());

    let ctx = Context { cfg, run_dir: &run_dir, timestamp: &timestamp, selections, selections_base };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| BatchError::Config(e.to_string()))?;
    let results: Vec<Result<FileResult, String>> =
        pool.install(|| files.par_iter().map(|f| process_file(&ctx, f)).collect());

    let mut manifest = RunManifest {
        tool: tool.name().into(),
        version: TOOL_VERSION.into(),
        timestamp: timestamp.clone(),
        run_dir: run_dir.display().to_string(),
        inputs: files.iter().map(|f| relative_key(&cfg.input_root, f)).collect(),
        parameters: cfg.record(),
        outputs: Vec::new(),
        succeeded: Vec::new(),
        failures: Vec::new(),
        status: RunStatus::Success,
    };
    let mut force_rows = Vec::new();
    let mut cop_rows = Vec::new();
    for (input, res) in manifest.inputs.clone().into_iter().zip(results) {
        match res {
            Ok(r) => {
                match r {
                    FileResult::Done => {}
                    FileResult::Force(rows) => force_rows.extend(rows),
                    FileResult::Cop(m) => cop_rows.push(*m),
                }
                manifest.succeeded.push(input);
            }
            Err(error) => {
                log::warn!("{input}: {error}");
                manifest.failures.push(FileFailure { input, error });
            }
        }
    }
    match &cfg.params {
        ToolParams::ForceCube(_) => {
            fill_cumsum(&mut force_rows);
            write(&run_dir.join(FORCECUBE_RESULTS), rows_to_csv(&force_rows))?;
            if force_rows.iter().any(|r| !r.invalid.is_empty()) {
                write(&run_dir.join(FORCECUBE_INVALID), invalid_fields_csv(&force_rows))?;
            }
        }
        ToolParams::Cop(p) => write(&run_dir.join(COP_METRICS), metrics_csv(&cop_rows, &p.analysis))?,
        _ => {}
    }
    manifest.status = RunStatus::from_counts(manifest.succeeded.len(), manifest.failures.len());
    manifest.collect_outputs(&run_dir);
    manifest.write_to(&run_dir)?;
    Ok(RunOutcome { run_dir, manifest })
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), BatchError> {
    fs::write(path, body).map_err(|e| path_err(path, e))
}

fn safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn process_file(ctx: &Context<'_>, file: &Path) -> Result<FileResult, String> {
    let key = relative_key(&ctx.cfg.input_root, file);
    let rel = Path::new(&key);
    let stem = rel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
    let parent = ctx.run_dir.join(rel.parent().unwrap_or(Path::new("")));
    let mkdir = |d: &Path| fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display()));
    let put = |p: PathBuf, body: &[u8]| fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display()));
    let read_text = || fs::read_to_string(file).map_err(|e| format!("cannot read: {e}"));

    match &ctx.cfg.params {
        ToolParams::C3dToCsv(_) => {
            let bytes = fs::read(file).map_err(|e| format!("cannot read: {e}"))?;
            let doc = read_c3d(&bytes).map_err(|e| e.to_string())?;
            let csv = c3d_to_csv(&doc);
            mkdir(&parent)?;
            put(parent.join(format!("{stem}_points.csv")), csv.points.as_bytes())?;
            if let Some(a) = csv.analog {
                put(parent.join(format!("{stem}_analog.csv")), a.as_bytes())?;
            }
            Ok(FileResult::Done)
        }
        ToolParams::CsvToC3d(p) => {
            let doc = csv_to_c3d_with_units(&read_text()?, p.rate_hz, &p.units).map_err(|e| e.to_string())?;
            let bytes = write_c3d(&doc).map_err(|e| e.to_string())?;
            mkdir(&parent)?;
            put(parent.join(format!("{stem}.c3d")), &bytes)?;
            Ok(FileResult::Done)
        }
        ToolParams::Emg(c) => {
            let channels = parse_emg_csv(&read_text()?, c.rate_hz).map_err(|e| e.to_string())?;
            let results = channels
                .iter()
                .map(|(name, s)| emg_pipeline(name, s, c).map_err(|e| format!("channel `{name}`: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            let dir = parent.join(&stem);
            mkdir(&dir)?;
            for r in &results {
                write_emg_outputs(r, &dir).map_err(|e| e.to_string())?;
            }
            put(dir.join("summary.csv"), summary_csv(&results).as_bytes())?;
            Ok(FileResult::Done)
        }
        ToolParams::Cop(p) => {
            let (cx, cy) = match ctx.selection(file).and_then(|s| s.cop.as_ref()) {
                Some(s) => (s.cx_column.as_str(), s.cy_column.as_str()),
                None => (p.cx_column.as_str(), p.cy_column.as_str()),
            };
            let trial = parse_cop_csv(&read_text()?, cx, cy, p.rate_hz, p.analysis.input_unit).map_err(|e| e.to_string())?;
            let a = analyze_cop(&key, &trial, &p.analysis).map_err(|e| e.to_string())?;
            let dir = parent.join(&stem);
            mkdir(&dir)?;
            write_cop_report(&a, &p.analysis, &dir).map_err(|e| e.to_string())?;
            Ok(FileResult::Cop(Box::new(a.metrics)))
        }
        ToolParams::ForceCube(p) => {
            let sel = match ctx.selection(file).and_then(|s| s.force.clone()) {
                Some(s) => s,
                None => match p.bw_window {
                    Some(w) => ForceSelections { bw_window: w, ..Default::default() },
                    None => return Err("no body-weight window selected for this file".into()),
                },
            };
            let column = sel.fz_column.as_deref().unwrap_or(&p.fz_column);
            let fz = parse_force_csv(&read_text()?, column, p.rate_hz).map_err(|e| e.to_string())?;
            let trials = analyze_file(&key, &fz, &sel, &p.analysis, ctx.timestamp).map_err(|e| e.to_string())?;
            let plots = trials
                .iter()
                .map(|t| plot_trial(&fz, t.row.bw_kg * G, t).map(|svg| (safe(&t.row.trial), svg)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            mkdir(&parent)?;
            for (trial, svg) in plots {
                put(parent.join(format!("{stem}_trial{trial}.svg")), svg.as_bytes())?;
            }
            Ok(FileResult::Force(trials.into_iter().map(|t| t.row).collect()))
        }
        ToolParams::Cluster(p) => {
            let set = match p.input_format {
                MarkerFormat::C3d => {
                    let bytes = fs::read(file).map_err(|e| format!("cannot read: {e}"))?;
                    read_c3d(&bytes).map_err(|e| e.to_string())?.points
                }
                MarkerFormat::Csv => {
                    let set = parse_triplet_csv(&read_text()?, p.rate_hz).map_err(|e| e.to_string())?;
                    set.scaled(p.units.factor_to(LengthUnit::M))
                }
            };
            let res = cluster_pipeline(&set, &p.clusters).map_err(|e| e.to_string())?;
            mkdir(&parent)?;
            res.write(&parent, &stem).map_err(|e| e.to_string())?;
            Ok(FileResult::Done)
        }
        ToolParams::Imu(c) => {
            let out = imu_pipeline(&read_text()?, c).map_err(|e| e.to_string())?;
            mkdir(&parent)?;
            put(parent.join(format!("{stem}_imu.csv")), out.csv.as_bytes())?;
            Ok(FileResult::Done)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emg_file(seconds: f64, rate: f64, seed: u64) -> String {
        let n = (seconds * rate) as usize;
        let mut s = String::from("time,biceps\n");
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        for k in 0..n {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let noise = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            let v = noise + 0.3 * (2.0 * std::f64::consts::PI * 80.0 * k as f64 / rate).sin();
            s.push_str(&format!("{},{v:.6}\n", k as f64 / rate));
        }
        s
    }

    #[test]
    fn partial_batch_continues() {
        let input = tempfile::tempdir().unwrap();
        let output = tempfile::tempdir().unwrap();
        for i in 0..3 {
            fs::write(input.path().join(format!("s{i}.csv")), emg_file(2.0, 1000.0, i)).unwrap();
        }
        fs::write(input.path().join("bad.csv"), "time,biceps\n0,1\n0.001,abc\n").unwrap();
        let out = run_tool(&ToolConfig::new(ToolKind::Emg, input.path(), output.path())).unwrap();
        let m = &out.manifest;
        assert_eq!(m.status, RunStatus::Partial);
        assert_eq!(out.exit_code(), 2);
        assert_eq!((m.succeeded.len(), m.failures.len()), (3, 1));
        assert_eq!(m.failures[0].input, "bad.csv");
        assert!(m.failures[0].error.contains("line 3"), "{}", m.failures[0].error);
        assert!(m.outputs.contains(&"s0/biceps_filtered.csv".to_owned()));
        assert!(m.outputs.contains(&"s2/summary.csv".to_owned()));
        assert_eq!(m.parameters["band_low_hz"], "20.0");
        assert_eq!(m.diff_outputs(&out.run_dir), (vec![], vec![]));
        let name = out.run_dir.file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("emg_") && name.len() >= "emg_20260101_000000".len());
    }

    #[test]
    fn empty_and_missing_roots() {
        let input = tempfile::tempdir().unwrap();
        let output = tempfile::tempdir().unwrap();
        let cfg = ToolConfig::new(ToolKind::Emg, input.path(), output.path());
        assert!(matches!(run_tool(&cfg), Err(BatchError::EmptyBatch { .. })));
        let cfg = ToolConfig::new(ToolKind::Emg, input.path().join("nope"), output.path());
        assert!(matches!(run_tool(&cfg), Err(BatchError::Path { .. })));
        let mut cfg = ToolConfig::new(ToolKind::Cluster, input.path(), output.path());
        cfg.jobs = Some(1);
        assert!(matches!(run_tool(&cfg), Err(BatchError::Config(_))));
    }

    #[test]
    fn rerun_is_identical_except_timestamps() {
        let input = tempfile::tempdir().unwrap();
        let output = tempfile::tempdir().unwrap();
        for i in 0..2 {
            fs::write(input.path().join(format!("t{i}.csv")), emg_file(1.5, 1000.0, 10 + i)).unwrap();
        }
        let cfg = ToolConfig { jobs: Some(2), ..ToolConfig::new(ToolKind::Emg, input.path(), output.path()) };
        let a = run_tool(&cfg).unwrap();
        let b = run_tool(&cfg).unwrap();
        assert_ne!(a.run_dir, b.run_dir);
        assert_eq!(a.manifest.outputs, b.manifest.outputs);
        for rel in &a.manifest.outputs {
            assert_eq!(fs::read(a.run_dir.join(rel)).unwrap(), fs::read(b.run_dir.join(rel)).unwrap(), "{rel}");
        }
    }

    #[test]
    fn output_inside_input_is_not_rediscovered() {
        let input = tempfile::tempdir().unwrap();
        fs::write(input.path().join("a.csv"), emg_file(1.0, 1000.0, 3)).unwrap();
        let cfg = ToolConfig::new(ToolKind::Emg, input.path(), input.path().join("out"));
        run_tool(&cfg).unwrap();
        let second = run_tool(&cfg).unwrap();
        assert_eq!(second.manifest.inputs, vec!["a.csv".to_owned()]);
    }
}
