//! `biomotion`: batch tools, DLT utilities, landmark conversions, plotting
//! and the local service.

mod dlt_cmd;
mod util;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use biomotion::batch::{parse_kv, run_tool, ToolConfig, ToolKind, ToolParams};
use biomotion::plot::{emit_plot, PlotSeries, PlotStyle};
use biomotion::tabular::{apply_sync, parse_landmarks, parse_sync_table, write_landmarks, LandmarkKind, Table};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::util::{parse_cluster, read, write, Failure};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "biomotion", version, about = "Batch analysis of motion capture, force plate, EMG, IMU and video landmark data")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert between C3D and triplet CSV.
    Convert {
        #[command(subcommand)]
        which: ConvertCmd,
    },
    /// Filter, rectify, RMS envelope, median frequency and PSD per EMG channel.
    Emg(BatchArgs),
    /// Centre-of-pressure sway, ellipse and spectral metrics.
    Cop(BatchArgs),
    /// Vertical ground reaction force metrics per trial.
    Forcecube(BatchArgs),
    /// Segment orientation from three-marker clusters.
    Cluster(ClusterArgs),
    /// Orientation from gyroscope and accelerometer samples.
    Imu(BatchArgs),
    /// Direct linear transformation calibration and reconstruction.
    Dlt {
        #[command(subcommand)]
        which: dlt_cmd::DltCmd,
    },
    /// Landmark table conversions.
    Landmarks {
        #[command(subcommand)]
        which: LandmarkCmd,
    },
    /// Plot CSV columns as an SVG line chart.
    Plot(PlotArgs),
    /// Serve a workspace to the browser companion on 127.0.0.1.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum ConvertCmd {
    /// Every `.c3d` under the input to `<stem>_points.csv` (and `<stem>_analog.csv`).
    #[command(name = "c3d2csv")]
    C3dToCsv(BatchArgs),
    /// Every triplet `.csv` under the input to `<stem>.c3d`.
    #[command(name = "csv2c3d")]
    CsvToC3d(BatchArgs),
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// Directory scanned recursively for input files.
    #[arg(long, required_unless_present = "print_config")]
    input: Option<PathBuf>,
    /// Directory receiving the `<tool>_<timestamp>` run folder.
    #[arg(long, required_unless_present = "print_config")]
    output: Option<PathBuf>,
    /// Flat `key = value` parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override one parameter, e.g. `--set band_low_hz=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective parameters and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    batch: BatchArgs,
    /// `NAME=M1,M2,M3`: origin, axis and plane markers. Repeatable.
    #[arg(long = "cluster", value_name = "NAME=M1,M2,M3")]
    clusters: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Normalized,
    Pixel,
}

impl From<KindArg> for LandmarkKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Normalized => LandmarkKind::Normalized,
            KindArg::Pixel => LandmarkKind::Pixel,
        }
    }
}

#[derive(Debug, Subcommand)]
enum LandmarkCmd {
    /// Scale a normalized landmark CSV to pixels.
    ToPixel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        width: f64,
        #[arg(long)]
        height: f64,
    },
    /// Shift and trim a landmark CSV with a sync table.
    SyncApply {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// `video_name,offset_frames,start_frame,end_frame` table.
        #[arg(long)]
        sync: PathBuf,
        /// Sync table entry; defaults to the input file stem.
        #[arg(long)]
        video: Option<String>,
        #[arg(long, value_enum, default_value = "pixel")]
        kind: KindArg,
    },
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Columns to draw, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    columns: Vec<String>,
    /// X column; `time` when present, sample index otherwise.
    #[arg(long)]
    x: Option<String>,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long, default_value = "")]
    y_label: String,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = ".")]
    workspace: PathBuf,
    #[arg(long, default_value_t = biomotion_service::DEFAULT_PORT)]
    port: u16,
    /// Built frontend served at `/ui`.
    #[arg(long)]
    ui: Option<PathBuf>,
    /// Run output directory (default `<workspace>/runs`).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn split_kv(s: &str) -> Result<(String, String), Failure> {
    let (k, v) = s.split_once('=').ok_or_else(|| Failure::usage(format!("`{s}` is not KEY=VALUE")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Defaults, then the config file, then `--set` flags.
fn effective_params(kind: ToolKind, args: &BatchArgs) -> Result<ToolParams, Failure> {
    let mut params = ToolParams::defaults(kind);
    if let Some(path) = &args.config {
        let kv = parse_kv(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        params = params.with_overrides(&kv).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    let flags: BTreeMap<String, String> = args.set.iter().map(|s| split_kv(s)).collect::<Result<_, _>>()?;
    params.with_overrides(&flags).map_err(|e| Failure::usage(e.to_string()))
}

fn run_batch(kind: ToolKind, args: &BatchArgs, params: ToolParams) -> Result<u8, Failure> {
    if args.print_config {
        for (k, v) in params.record() {
            println!("{k} = {v}");
        }
        return Ok(0);
    }
    if args.jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let (Some(input), Some(output)) = (&args.input, &args.output) else {
        return Err(Failure::usage("--input and --output are required"));
    };
    eprintln!("biomotion {VERSION}: {kind}");
    let cfg = ToolConfig { input_root: input.clone(), output_root: output.clone(), params, jobs: args.jobs };
    let out = run_tool(&cfg).map_err(|e| Failure::fatal(e.to_string()))?;
    let m = &out.manifest;
    for f in &m.failures {
        eprintln!("failed: {}: {}", f.input, f.error);
    }
    println!(
        "{}: {} succeeded, {} failed; results in {}",
        m.status.as_str(),
        m.succeeded.len(),
        m.failures.len(),
        out.run_dir.display()
    );
    Ok(out.exit_code() as u8)
}

fn cluster_params(args: &ClusterArgs) -> Result<ToolParams, Failure> {
    let mut params = effective_params(ToolKind::Cluster, &args.batch)?;
    if let ToolParams::Cluster(p) = &mut params {
        for spec in &args.clusters {
            p.clusters.push(parse_cluster(spec)?);
        }
    }
    Ok(params)
}

fn landmarks(cmd: &LandmarkCmd) -> Result<u8, Failure> {
    match cmd {
        LandmarkCmd::ToPixel { input, output, width, height } => {
            let t = parse_landmarks(&read(input)?, LandmarkKind::Normalized).map_err(|e| Failure::data(input, e))?;
            let flagged = t.out_of_range().len();
            if flagged > 0 {
                eprintln!("warning: {flagged} landmark(s) outside [0, 1] kept as is");
            }
            let px = t.norm_to_pixel(*width, *height).map_err(|e| Failure::usage(e.to_string()))?;
            write(output, write_landmarks(&px))?;
        }
        LandmarkCmd::SyncApply { input, output, sync, video, kind } => {
            let t = parse_landmarks(&read(input)?, (*kind).into()).map_err(|e| Failure::data(input, e))?;
            let table = parse_sync_table(&read(sync)?).map_err(|e| Failure::data(sync, e))?;
            let name = video.clone().unwrap_or_else(|| {
                input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let cut = apply_sync(&t, &table, &name).map_err(|e| Failure::fatal(e.to_string()))?;
            write(output, write_landmarks(&cut))?;
        }
    }
    Ok(0)
}

fn plot(args: &PlotArgs) -> Result<u8, Failure> {
    let table = Table::parse(&read(&args.input)?).map_err(|e| Failure::data(&args.input, e))?;
    let column = |name: &str| -> Result<Vec<f64>, Failure> {
        let i = table.resolve_column(name).map_err(|e| Failure::data(&args.input, e))?;
        table.numeric_column(i).map_err(|e| Failure::data(&args.input, e))
    };
    let (x, x_label) = match (&args.x, table.column_index("time")) {
        (Some(name), _) => (column(name)?, name.clone()),
        (None, Some(_)) => (column("time")?, "time (s)".to_owned()),
        (None, None) => ((0..table.rows.len()).map(|i| i as f64).collect(), "sample".to_owned()),
    };
    let series = args
        .columns
        .iter()
        .map(|c| Ok(PlotSeries::new(c.clone(), x.clone(), column(c)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let svg = emit_plot(&series, &PlotStyle::titled(&args.title, &x_label, &args.y_label))
        .map_err(|e| Failure::fatal(e.to_string()))?;
    write(&args.output, svg)?;
    Ok(0)
}

fn serve(args: &ServeArgs) -> Result<u8, Failure> {
    let cfg = biomotion_service::ServiceConfig {
        workspace: args.workspace.clone(),
        output_root: args.output.clone(),
        ui_dir: args.ui.clone(),
        port: args.port,
    };
    eprintln!("biomotion {VERSION}: serve on http://127.0.0.1:{}", args.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::fatal(e.to_string()))?;
    rt.block_on(biomotion_service::serve(cfg)).map_err(|e| Failure::fatal(e.to_string()))?;
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Convert { which: ConvertCmd::C3dToCsv(a) } => run_batch(ToolKind::C3dToCsv, a, effective_params(ToolKind::C3dToCsv, a)?),
        Command::Convert { which: ConvertCmd::CsvToC3d(a) } => run_batch(ToolKind::CsvToC3d, a, effective_params(ToolKind::CsvToC3d, a)?),
        Command::Emg(a) => run_batch(ToolKind::Emg, a, effective_params(ToolKind::Emg, a)?),
        Command::Cop(a) => run_batch(ToolKind::Cop, a, effective_params(ToolKind::Cop, a)?),
        Command::Forcecube(a) => run_batch(ToolKind::ForceCube, a, effective_params(ToolKind::ForceCube, a)?),
        Command::Imu(a) => run_batch(ToolKind::Imu, a, effective_params(ToolKind::Imu, a)?),
        Command::Cluster(a) => run_batch(ToolKind::Cluster, &a.batch, cluster_params(a)?),
        Command::Dlt { which } => {
            eprintln!("biomotion {VERSION}: dlt");
            dlt_cmd::run(which)
        }
        Command::Landmarks { which } => {
            eprintln!("biomotion {VERSION}: landmarks");
            landmarks(which)
        }
        Command::Plot(a) => plot(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(1)
        }
    }
}
