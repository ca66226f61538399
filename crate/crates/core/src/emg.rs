//! Surface EMG: band-pass filter, full-wave rectification, moving RMS
//! envelope, median-frequency trend and Welch spectrum per channel.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError, FilterKind, Spectrum, WelchParams};
use crate::model::UniformSeries;
use crate::plot::{emit_plot, PlotError, PlotSeries, PlotStyle};
use crate::tabular::{fmt_sig9, CsvWriter, SchemaError, Table};

#[derive(Debug, Error)]
pub enum EmgError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmgConfig {
    /// Required when the CSV has no `time` column; checked against it
    /// otherwise.
    pub rate_hz: Option<f64>,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: usize,
    pub rms_window_s: f64,
    pub mdf_window_s: f64,
    pub mdf_overlap: f64,
    /// `[start, end)` in seconds; the whole record when absent.
    pub analysis_window: Option<(f64, f64)>,
    pub welch: WelchParams,
}

impl Default for EmgConfig {
    fn default() -> Self {
        Self {
            rate_hz: None,
            band_low_hz: 20.0,
            band_high_hz: 450.0,
            filter_order: 4,
            rms_window_s: 0.05,
            mdf_window_s: 1.0,
            mdf_overlap: 0.5,
            analysis_window: None,
            welch: WelchParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmgResult {
    pub channel: String,
    pub filtered: UniformSeries,
    pub rectified: UniformSeries,
    pub rms_envelope: UniformSeries,
    pub mdf_track: UniformSeries,
    pub psd: Spectrum,
    pub summary: EmgSummary,
    /// Non-fatal problems (e.g. a spectrum without power).
    pub notes: Vec<String>,
}

/// Scalars over the analysis window. `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgSummary {
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub rms: f64,
    pub mean_rms_envelope: f64,
    pub peak_rms_envelope: f64,
    pub median_frequency_hz: Option<f64>,
    pub mean_frequency_hz: Option<f64>,
    pub peak_frequency_hz: Option<f64>,
    /// Least-squares slope of the median-frequency track; negative values
    /// indicate a downward shift typical of fatigue.
    pub mdf_slope_hz_per_s: Option<f64>,
}

/// Reads an EMG CSV: optional `time` column (seconds) and one column per
/// channel. Every cell must hold a finite number.
pub fn parse_emg_csv(text: &str, rate_hz: Option<f64>) -> Result<Vec<(String, UniformSeries)>, EmgError> {
    let table = Table::parse(text)?;
    if table.rows.len() < 2 {
        return Err(SchemaError::new("EMG file needs at least two samples").into());
    }
    let time_col = table.header.iter().position(|h| {
        let h = h.to_ascii_lowercase();
        h == "time" || h == "time_s" || h == "time (s)" || h == "t"
    });
    let mut columns = Vec::with_capacity(table.header.len());
    for i in 0..table.header.len() {
        let col = table.numeric_column(i)?;
        if let Some(k) = col.iter().position(|v| v.is_nan()) {
            return Err(SchemaError::at(table.rows[k].line, format!("empty cell in column `{}`", table.header[i])).into());
        }
        columns.push(col);
    }
    let (rate, t0) = match time_col {
        Some(tc) => {
            let t = &columns[tc];
            let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
            if !(dt > 0.0) {
                return Err(SchemaError::new("time column is not increasing").into());
            }
            for (k, w) in t.windows(2).enumerate() {
                if ((w[1] - w[0]) - dt).abs() > 0.01 * dt {
                    return Err(SchemaError::at(table.rows[k + 1].line, "time column is not uniformly sampled").into());
                }
            }
            let inferred = 1.0 / dt;
            if let Some(r) = rate_hz {
                if ((r - inferred) / r).abs() > 1e-3 {
                    return Err(EmgError::Config(format!("configured rate {r} Hz disagrees with time column ({inferred:.6} Hz)")));
                }
                (r, t[0])
            } else {
                (inferred, t[0])
            }
        }
        None => (rate_hz.ok_or_else(|| EmgError::Config("no time column; a sampling rate is required".into()))?, 0.0),
    };
    let mut out = Vec::new();
    for (i, col) in columns.into_iter().enumerate() {
        if Some(i) == time_col {
            continue;
        }
        let s = UniformSeries::new(col, rate, t0).map_err(|e| EmgError::Config(e.to_string()))?;
        out.push((table.header[i].clone(), s));
    }
    if out.is_empty() {
        return Err(SchemaError::at(1, "no channel columns").into());
    }
    Ok(out)
}

pub fn emg_pipeline(channel: &str, series: &UniformSeries, cfg: &EmgConfig) -> Result<EmgResult, EmgError> {
    if let Some(r) = cfg.rate_hz {
        if ((r - series.rate_hz()) / r).abs() > 1e-9 {
            return Err(EmgError::Config(format!("series rate {} Hz differs from configured {r} Hz", series.rate_hz())));
        }
    }
    let data = match cfg.analysis_window {
        Some((a, b)) => series.trim(a, b).map_err(|_| DspError::Range {
            start: a,
            end: b,
            first: series.t0_s(),
            last: series.end_s(),
        })?,
        None => series.clone(),
    };
    let coeffs = dsp::butter_design(
        FilterKind::Bandpass { low_hz: cfg.band_low_hz, high_hz: cfg.band_high_hz },
        cfg.filter_order,
        data.rate_hz(),
    )?;
    let filtered = dsp::filtfilt(&coeffs, &data)?;
    let rectified = dsp::rectify(&filtered);
    let rms_envelope = dsp::moving_rms(&filtered, cfg.rms_window_s)?;
    let mdf_track = dsp::stft_median_frequency(&filtered, cfg.mdf_window_s, cfg.mdf_overlap)?;
    let psd = dsp::welch_psd(&filtered, &cfg.welch)?;

    let mut notes = Vec::new();
    let mdf = match dsp::median_frequency(&psd) {
        Ok(m) => Some(m),
        Err(e) => {
            notes.push(format!("median frequency: {e}"));
            None
        }
    };
    let blank = mdf_track.values().iter().filter(|v| v.is_nan()).count();
    if blank > 0 {
        notes.push(format!("median-frequency track: {blank} window(s) without power"));
    }
    let (m0, m1, _) = dsp::spectral_moments(&psd);
    let n = filtered.len() as f64;
    let env = rms_envelope.values();
    let summary = EmgSummary {
        window_start_s: data.t0_s(),
        window_end_s: data.end_s(),
        rms: (filtered.values().iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        mean_rms_envelope: env.iter().sum::<f64>() / env.len() as f64,
        peak_rms_envelope: env.iter().cloned().fold(0.0, f64::max),
        median_frequency_hz: mdf,
        mean_frequency_hz: (m0 > 0.0).then(|| m1 / m0),
        peak_frequency_hz: if m0 > 0.0 { psd.peak_frequency() } else { None },
        mdf_slope_hz_per_s: slope(&mdf_track),
    };
    Ok(EmgResult { channel: channel.to_owned(), filtered, rectified, rms_envelope, mdf_track, psd, summary, notes })
}

fn slope(s: &UniformSeries) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        s.values().iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(k, &v)| (s.time_at(k), v)).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let (sty, stt) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    (stt > 0.0).then(|| sty / stt)
}

fn series_csv(s: &UniformSeries, column: &str) -> String {
    let mut w = CsvWriter::with_header(&["time", column]);
    for (k, v) in s.values().iter().enumerate() {
        w.row(&[fmt_sig9(s.time_at(k)), fmt_sig9(*v)]);
    }
    w.finish()
}

fn psd_csv(s: &Spectrum) -> String {
    let mut w = CsvWriter::with_header(&["frequency_hz", "psd"]);
    for (f, p) in s.freqs_hz.iter().zip(&s.psd) {
        w.row(&[fmt_sig9(*f), fmt_sig9(*p)]);
    }
    w.finish()
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "channel",
    "window_start_s",
    "window_end_s",
    "rms",
    "mean_rms_envelope",
    "peak_rms_envelope",
    "median_frequency_hz",
    "mean_frequency_hz",
    "peak_frequency_hz",
    "mdf_slope_hz_per_s",
];

pub fn summary_csv(results: &[EmgResult]) -> String {
    let mut w = CsvWriter::with_header(&SUMMARY_HEADER);
    let opt = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
    for r in results {
        let s = &r.summary;
        w.row(&[
            r.channel.clone(),
            fmt_sig9(s.window_start_s),
            fmt_sig9(s.window_end_s),
            fmt_sig9(s.rms),
            fmt_sig9(s.mean_rms_envelope),
            fmt_sig9(s.peak_rms_envelope),
            opt(s.median_frequency_hz),
            opt(s.mean_frequency_hz),
            opt(s.peak_frequency_hz),
            opt(s.mdf_slope_hz_per_s),
        ]);
    }
    w.finish()
}

fn safe_name(s: &str) -> String {
    let cleaned: String = s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if cleaned.is_empty() {
        "channel".into()
    } else {
        cleaned
    }
}

/// Writes the five CSV artifacts and five SVG panels for one channel into
/// `dir`, returning the paths written.
pub fn write_emg_outputs(result: &EmgResult, dir: &Path) -> Result<Vec<PathBuf>, EmgError> {
    let name = safe_name(&result.channel);
    let time = |s: &UniformSeries| s.time_axis();
    let panels: [(&str, String, PlotSeries, PlotStyle); 5] = [
        (
            "filtered",
            series_csv(&result.filtered, "filtered_mV"),
            PlotSeries::new(&result.channel, time(&result.filtered), result.filtered.values().to_vec()),
            PlotStyle::titled("Band-pass filtered EMG", "time (s)", "EMG (mV)"),
        ),
        (
            "rectified",
            series_csv(&result.rectified, "rectified_mV"),
            PlotSeries::new(&result.channel, time(&result.rectified), result.rectified.values().to_vec()),
            PlotStyle::titled("Full-wave rectified EMG", "time (s)", "EMG (mV)"),
        ),
        (
            "rms",
            series_csv(&result.rms_envelope, "rms_mV"),
            PlotSeries::new(&result.channel, time(&result.rms_envelope), result.rms_envelope.values().to_vec()),
            PlotStyle::titled("RMS envelope", "time (s)", "RMS (mV)"),
        ),
        (
            "mdf",
            series_csv(&result.mdf_track, "mdf_hz"),
            PlotSeries::new(&result.channel, time(&result.mdf_track), result.mdf_track.values().to_vec()),
            PlotStyle::titled("Median frequency", "time (s)", "frequency (Hz)"),
        ),
        (
            "psd",
            psd_csv(&result.psd),
            PlotSeries::new(&result.channel, result.psd.freqs_hz.clone(), result.psd.psd.clone()),
            PlotStyle::titled("Welch power spectral density", "frequency (Hz)", "PSD (mV²/Hz)"),
        ),
    ];
    let mut written = Vec::with_capacity(10);
    let write = |path: PathBuf, text: &str, written: &mut Vec<PathBuf>| -> Result<(), EmgError> {
        fs::write(&path, text).map_err(|source| EmgError::Io { path: path.clone(), source })?;
        written.push(path);
        Ok(())
    };
    for (suffix, csv, series, style) in panels {
        write(dir.join(format!("{name}_{suffix}.csv")), &csv, &mut written)?;
        // A track with no finite point (silent channel) still gets a CSV.
        match emit_plot(&[series], &style) {
            Ok(svg) => write(dir.join(format!("{name}_{suffix}.svg")), &svg, &mut written)?,
            Err(PlotError::Empty(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(written)
}
