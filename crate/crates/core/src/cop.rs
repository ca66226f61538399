//! Centre-of-pressure posturography: sway path, speeds, 95% ellipse and
//! band-limited spectral measures per direction.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError, FilterKind, Spectrum, WelchParams};
use crate::model::{LengthUnit, UniformSeries};
use crate::plot::{emit_plot, PlotError, PlotSeries, PlotStyle};
use crate::tabular::{fmt_sig9, CsvWriter, SchemaError, Table};

/// Chi-square quantile for 95% with two degrees of freedom.
pub const CHI2_95_2DOF: f64 = 5.991;

#[derive(Debug, Error)]
pub enum CopError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{0}")]
    Parameter(String),
    #[error("series of {got} samples is too short; at least {needed} required")]
    Length { needed: usize, got: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopConfig {
    /// Zero-phase Butterworth low-pass; `None` disables it.
    pub lowpass_hz: Option<f64>,
    pub lowpass_order: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Welch segment length in seconds (capped at the trial length). Long
    /// segments are needed to resolve the 0.15 Hz band edge.
    pub welch_segment_s: f64,
    pub welch_overlap: f64,
    /// Unit of the input columns; outputs are always centimetres.
    pub input_unit: LengthUnit,
}

impl Default for CopConfig {
    fn default() -> Self {
        Self {
            lowpass_hz: Some(10.0),
            lowpass_order: 4,
            band_low_hz: 0.15,
            band_high_hz: 5.0,
            welch_segment_s: 20.0,
            welch_overlap: 0.5,
            input_unit: LengthUnit::Cm,
        }
    }
}

/// Mediolateral (`cx`) and anteroposterior (`cy`) CoP in centimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct CopTrial {
    pub cx: UniformSeries,
    pub cy: UniformSeries,
}

impl CopTrial {
    pub fn new(cx: Vec<f64>, cy: Vec<f64>, rate_hz: f64) -> Result<Self, CopError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(CopError::Parameter(format!("sampling rate {rate_hz} Hz must be positive")));
        }
        if cx.len() != cy.len() {
            return Err(CopError::Parameter(format!("Cx has {} samples, Cy {}", cx.len(), cy.len())));
        }
        if cx.iter().chain(&cy).any(|v| !v.is_finite()) {
            return Err(CopError::Parameter("CoP contains gaps or non-finite values".into()));
        }
        let mk = |v| UniformSeries::new(v, rate_hz, 0.0).map_err(|e| CopError::Parameter(e.to_string()));
        Ok(Self { cx: mk(cx)?, cy: mk(cy)? })
    }

    pub fn rate_hz(&self) -> f64 {
        self.cx.rate_hz()
    }

    pub fn len(&self) -> usize {
        self.cx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cx.is_empty()
    }

    /// `n / rate`.
    pub fn duration_s(&self) -> f64 {
        self.cx.duration_s()
    }
}

/// Filtered, demeaned trial plus the means that were removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub trial: CopTrial,
    pub mean_ml: f64,
    pub mean_ap: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn preprocess_cop(trial: &CopTrial, cfg: &CopConfig) -> Result<Preprocessed, CopError> {
    let (cx, cy) = match cfg.lowpass_hz {
        Some(fc) => {
            let c = dsp::butter_design(FilterKind::Lowpass { cutoff_hz: fc }, cfg.lowpass_order, trial.rate_hz())?;
            (dsp::filtfilt(&c, &trial.cx)?, dsp::filtfilt(&c, &trial.cy)?)
        }
        None => (trial.cx.clone(), trial.cy.clone()),
    };
    let (mx, my) = (mean(cx.values()), mean(cy.values()));
    let cx = cx.with_values(cx.values().iter().map(|v| v - mx).collect());
    let cy = cy.with_values(cy.values().iter().map(|v| v - my).collect());
    Ok(Preprocessed { trial: CopTrial { cx, cy }, mean_ml: mx, mean_ap: my })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwayMetrics {
    pub rms_ml: f64,
    pub rms_ap: f64,
    pub amplitude_ml: f64,
    pub amplitude_ap: f64,
    pub total_path_length: f64,
    pub mean_speed: f64,
    pub mean_speed_ml: f64,
    pub mean_speed_ap: f64,
}

/// Time-domain sway. RMS is taken about the mean of each direction.
pub fn sway_metrics(trial: &CopTrial) -> Result<SwayMetrics, CopError> {
    let (x, y) = (trial.cx.values(), trial.cy.values());
    if x.len() < 2 {
        return Err(CopError::Length { needed: 2, got: x.len() });
    }
    let dur = trial.duration_s();
    let rms = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let amp = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let (mut path, mut px, mut py) = (0.0, 0.0, 0.0);
    for k in 1..x.len() {
        let (dx, dy) = (x[k] - x[k - 1], y[k] - y[k - 1]);
        path += dx.hypot(dy);
        px += dx.abs();
        py += dy.abs();
    }
    Ok(SwayMetrics {
        rms_ml: rms(x),
        rms_ap: rms(y),
        amplitude_ml: amp(x),
        amplitude_ap: amp(y),
        total_path_length: path,
        mean_speed: path / dur,
        mean_speed_ml: px / dur,
        mean_speed_ap: py / dur,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse95 {
    pub center_ml: f64,
    pub center_ap: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from the ML axis, degrees in (-90, 90].
    pub orientation_deg: f64,
    pub area: f64,
    /// Points collinear (or coincident): minor axis is zero.
    pub degenerate: bool,
}

impl Ellipse95 {
    /// True when `(x, y)` lies inside or on the ellipse.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if self.degenerate {
            return false;
        }
        let th = self.orientation_deg.to_radians();
        let (dx, dy) = (x - self.center_ml, y - self.center_ap);
        let u = dx * th.cos() + dy * th.sin();
        let v = -dx * th.sin() + dy * th.cos();
        (u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2) <= 1.0
    }

    /// Outline as `n` points.
    pub fn outline(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let th = self.orientation_deg.to_radians();
        (0..=n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let (u, v) = (self.semi_major * a.cos(), self.semi_minor * a.sin());
                (self.center_ml + u * th.cos() - v * th.sin(), self.center_ap + u * th.sin() + v * th.cos())
            })
            .unzip()
    }
}

/// Prediction ellipse from the eigen-decomposition of the 2×2 sample
/// covariance, scaled by the chi-square 95% quantile.
pub fn ellipse_95(trial: &CopTrial) -> Result<Ellipse95, CopError> {
    let (x, y) = (trial.cx.values(), trial.cy.values());
    if x.len() < 3 {
        return Err(CopError::Length { needed: 3, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let n1 = (x.len() - 1) as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (u, v) in x.iter().zip(y) {
        let (du, dv) = (u - mx, v - my);
        a += du * du;
        b += du * dv;
        c += dv * dv;
    }
    let (a, b, c) = (a / n1, b / n1, c / n1);
    let half_tr = 0.5 * (a + c);
    let disc = (0.5 * (a - c)).hypot(b);
    let l1 = half_tr + disc;
    let l2 = (half_tr - disc).max(0.0);
    let degenerate = l2 <= 1e-12 * l1.max(f64::MIN_POSITIVE);
    // Major eigenvector direction.
    let mut theta = if b == 0.0 && a >= c { 0.0 } else { 0.5 * (2.0 * b).atan2(a - c) };
    if theta <= -std::f64::consts::FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }
    let l2 = if degenerate { 0.0 } else { l2 };
    Ok(Ellipse95 {
        center_ml: mx,
        center_ap: my,
        semi_major: (CHI2_95_2DOF * l1).sqrt(),
        semi_minor: (CHI2_95_2DOF * l2).sqrt(),
        orientation_deg: theta.to_degrees(),
        area: std::f64::consts::PI * CHI2_95_2DOF * (l1 * l2).sqrt(),
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMetrics {
    pub total_power: f64,
    pub centroid_frequency_hz: f64,
    pub median_frequency_hz: f64,
    pub f95_hz: f64,
    pub frequency_dispersion: f64,
}

/// Welch spectrum of the demeaned direction signal and the moment-based
/// measures over the configured band.
pub fn cop_spectrum(series: &UniformSeries, cfg: &CopConfig) -> Result<Spectrum, CopError> {
    let m = mean(series.values());
    let centred = series.with_values(series.values().iter().map(|v| v - m).collect());
    let seg = ((cfg.welch_segment_s * series.rate_hz()).round() as usize).clamp(1, series.len());
    let params = WelchParams { segment_len: Some(seg), overlap: cfg.welch_overlap, ..WelchParams::default() };
    Ok(dsp::welch_psd(&centred, &params)?)
}

pub fn cop_frequency_metrics(spec: &Spectrum, cfg: &CopConfig) -> Result<SpectralMetrics, CopError> {
    let band = spec.band(cfg.band_low_hz, cfg.band_high_hz);
    let (m0, _, m2) = dsp::spectral_moments(&band);
    if !(m0 > 0.0) {
        return Err(DspError::Degenerate(format!("no power in {}-{} Hz", cfg.band_low_hz, cfg.band_high_hz)).into());
    }
    Ok(SpectralMetrics {
        total_power: m0,
        centroid_frequency_hz: (m2 / m0).sqrt(),
        median_frequency_hz: dsp::percentile_frequency(&band, 0.5)?,
        f95_hz: dsp::percentile_frequency(&band, 0.95)?,
        frequency_dispersion: dsp::frequency_dispersion(&band)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopMetrics {
    pub trial: String,
    pub n_samples: usize,
    pub duration_s: f64,
    pub mean_ml: f64,
    pub mean_ap: f64,
    pub sway: SwayMetrics,
    pub ellipse: Ellipse95,
    pub spectral_ml: Option<SpectralMetrics>,
    pub spectral_ap: Option<SpectralMetrics>,
    pub notes: Vec<String>,
}

pub const COP_METRICS_HEADER: [&str; 30] = [
    "trial",
    "n_samples",
    "duration_s",
    "mean_ml_cm",
    "mean_ap_cm",
    "rms_ml_cm",
    "rms_ap_cm",
    "amplitude_ml_cm",
    "amplitude_ap_cm",
    "total_path_length_cm",
    "mean_speed_cm_s",
    "mean_speed_ml_cm_s",
    "mean_speed_ap_cm_s",
    "ellipse_semi_major_cm",
    "ellipse_semi_minor_cm",
    "ellipse_orientation_deg",
    "ellipse_area_cm2",
    "ellipse_degenerate",
    "total_power_ml",
    "centroid_frequency_ml_hz",
    "median_frequency_ml_hz",
    "f95_ml_hz",
    "frequency_dispersion_ml",
    "total_power_ap",
    "centroid_frequency_ap_hz",
    "median_frequency_ap_hz",
    "f95_ap_hz",
    "frequency_dispersion_ap",
    "band_hz",
    "notes",
];

pub fn metrics_csv(rows: &[CopMetrics], cfg: &CopConfig) -> String {
    let mut w = CsvWriter::with_header(&COP_METRICS_HEADER);
    for m in rows {
        let mut cells = vec![
            m.trial.clone(),
            m.n_samples.to_string(),
            fmt_sig9(m.duration_s),
            fmt_sig9(m.mean_ml),
            fmt_sig9(m.mean_ap),
            fmt_sig9(m.sway.rms_ml),
            fmt_sig9(m.sway.rms_ap),
            fmt_sig9(m.sway.amplitude_ml),
            fmt_sig9(m.sway.amplitude_ap),
            fmt_sig9(m.sway.total_path_length),
            fmt_sig9(m.sway.mean_speed),
            fmt_sig9(m.sway.mean_speed_ml),
            fmt_sig9(m.sway.mean_speed_ap),
            fmt_sig9(m.ellipse.semi_major),
            fmt_sig9(m.ellipse.semi_minor),
            fmt_sig9(m.ellipse.orientation_deg),
            fmt_sig9(m.ellipse.area),
            m.ellipse.degenerate.to_string(),
        ];
        for s in [&m.spectral_ml, &m.spectral_ap] {
            match s {
                Some(s) => cells.extend([
                    fmt_sig9(s.total_power),
                    fmt_sig9(s.centroid_frequency_hz),
                    fmt_sig9(s.median_frequency_hz),
                    fmt_sig9(s.f95_hz),
                    fmt_sig9(s.frequency_dispersion),
                ]),
                None => cells.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        cells.push(format!("{}-{}", cfg.band_low_hz, cfg.band_high_hz));
        cells.push(m.notes.join("; "));
        w.row(&cells);
    }
    w.finish()
}

/// Everything computed for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CopAnalysis {
    pub metrics: CopMetrics,
    pub pre: Preprocessed,
    pub psd_ml: Spectrum,
    pub psd_ap: Spectrum,
}

pub fn analyze_cop(name: &str, trial: &CopTrial, cfg: &CopConfig) -> Result<CopAnalysis, CopError> {
    let pre = preprocess_cop(trial, cfg)?;
    let sway = sway_metrics(&pre.trial)?;
    let ellipse = ellipse_95(&pre.trial)?;
    let psd_ml = cop_spectrum(&pre.trial.cx, cfg)?;
    let psd_ap = cop_spectrum(&pre.trial.cy, cfg)?;
    let mut notes = Vec::new();
    if ellipse.degenerate {
        notes.push("ellipse degenerate (collinear or stationary CoP)".to_owned());
    }
    let mut spectral = |spec: &Spectrum, dir: &str| match cop_frequency_metrics(spec, cfg) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("{dir} spectrum: {e}"));
            None
        }
    };
    let spectral_ml = spectral(&psd_ml, "ML");
    let spectral_ap = spectral(&psd_ap, "AP");
    let metrics = CopMetrics {
        trial: name.to_owned(),
        n_samples: trial.len(),
        duration_s: trial.duration_s(),
        mean_ml: pre.mean_ml,
        mean_ap: pre.mean_ap,
        sway,
        ellipse,
        spectral_ml,
        spectral_ap,
        notes,
    };
    Ok(CopAnalysis { metrics, pre, psd_ml, psd_ap })
}

/// Names of the five per-trial artifacts.
pub const COP_ARTIFACTS: [&str; 5] = ["overview.svg", "final_figure.svg", "metrics.csv", "psd.svg", "stabilogram.svg"];

fn overview_svg(m: &CopMetrics) -> String {
    let f = |v: f64| fmt_sig9((v * 1e4).round() / 1e4);
    let opt = |s: &Option<SpectralMetrics>, g: fn(&SpectralMetrics) -> f64| s.as_ref().map(|s| f(g(s))).unwrap_or_else(|| "n/a".into());
    let lines = [
        format!("Trial: {}", m.trial),
        format!("Duration: {} s ({} samples)", f(m.duration_s), m.n_samples),
        format!("Total path length: {} cm", f(m.sway.total_path_length)),
        format!("Mean speed: {} cm/s (ML {}, AP {})", f(m.sway.mean_speed), f(m.sway.mean_speed_ml), f(m.sway.mean_speed_ap)),
        format!("RMS: ML {} cm, AP {} cm", f(m.sway.rms_ml), f(m.sway.rms_ap)),
        format!("Amplitude: ML {} cm, AP {} cm", f(m.sway.amplitude_ml), f(m.sway.amplitude_ap)),
        format!("95% ellipse area: {} cm²", f(m.ellipse.area)),
        format!("Median frequency: ML {} Hz, AP {} Hz", opt(&m.spectral_ml, |s| s.median_frequency_hz), opt(&m.spectral_ap, |s| s.median_frequency_hz)),
        format!("Frequency dispersion: ML {}, AP {}", opt(&m.spectral_ml, |s| s.frequency_dispersion), opt(&m.spectral_ap, |s| s.frequency_dispersion)),
    ];
    let h = 40 + 22 * lines.len();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"{h}\" viewBox=\"0 0 640 {h}\" font-family=\"sans-serif\" font-size=\"14\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, l) in lines.iter().enumerate() {
        let l = l.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(svg, "<text x=\"20\" y=\"{}\">{l}</text>", 30 + 22 * i);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the five artifacts into `dir`.
pub fn write_cop_report(a: &CopAnalysis, cfg: &CopConfig, dir: &Path) -> Result<Vec<PathBuf>, CopError> {
    let t = &a.pre.trial;
    let time = t.cx.time_axis();
    let stabilogram = emit_plot(
        &[
            PlotSeries::new("ML (Cx)", time.clone(), t.cx.values().to_vec()),
            PlotSeries::new("AP (Cy)", time, t.cy.values().to_vec()),
        ],
        &PlotStyle::titled("Stabilogram", "time (s)", "displacement (cm)"),
    )?;
    let psd = emit_plot(
        &[
            PlotSeries::new("ML", a.psd_ml.freqs_hz.clone(), a.psd_ml.psd.clone()),
            PlotSeries::new("AP", a.psd_ap.freqs_hz.clone(), a.psd_ap.psd.clone()),
        ],
        &PlotStyle::titled("CoP power spectral density", "frequency (Hz)", "PSD (cm²/Hz)"),
    )?;
    let (ex, ey) = a.metrics.ellipse.outline(128);
    let final_fig = emit_plot(
        &[
            PlotSeries::new("CoP path", t.cx.values().to_vec(), t.cy.values().to_vec()),
            PlotSeries::new("95% ellipse", ex, ey),
        ],
        &PlotStyle {
            equal_aspect: true,
            height: 600,
            ..PlotStyle::titled("CoP path with 95% ellipse", "ML (cm)", "AP (cm)")
        },
    )?;
    let files = [
        ("overview.svg", overview_svg(&a.metrics)),
        ("final_figure.svg", final_fig),
        ("metrics.csv", metrics_csv(std::slice::from_ref(&a.metrics), cfg)),
        ("psd.svg", psd),
        ("stabilogram.svg", stabilogram),
    ];
    let mut out = Vec::with_capacity(5);
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|source| CopError::Io { path: p.clone(), source })?;
        out.push(p);
    }
    Ok(out)
}

/// Reads the chosen Cx/Cy columns (name or 0-based index) and converts
/// them to centimetres. The rate comes from `time` when not given.
pub fn parse_cop_csv(text: &str, cx: &str, cy: &str, rate_hz: Option<f64>, unit: LengthUnit) -> Result<CopTrial, CopError> {
    let table = Table::parse(text)?;
    let (ix, iy) = (table.resolve_column(cx)?, table.resolve_column(cy)?);
    let k = unit.factor_to(LengthUnit::Cm);
    let x: Vec<f64> = table.numeric_column(ix)?.into_iter().map(|v| v * k).collect();
    let y: Vec<f64> = table.numeric_column(iy)?.into_iter().map(|v| v * k).collect();
    let rate = match rate_hz {
        Some(r) => r,
        None => {
            let tc = table
                .column_index("time")
                .or_else(|| table.column_index("time_s"))
                .ok_or_else(|| SchemaError::at(1, "no `time` column and no sampling rate given"))?;
            let t = table.numeric_column(tc)?;
            if t.len() < 2 {
                return Err(CopError::Length { needed: 2, got: t.len() });
            }
            1.0 / ((t[t.len() - 1] - t[0]) / (t.len() - 1) as f64)
        }
    };
    CopTrial::new(x, y, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn trial(x: Vec<f64>, y: Vec<f64>) -> CopTrial {
        CopTrial::new(x, y, 100.0).unwrap()
    }

    #[test]
    fn demeaned_input_keeps_zero_means() {
        let x: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.05).sin()).collect();
        let m = mean(&x);
        let x: Vec<f64> = x.iter().map(|v| v - m).collect();
        let p = preprocess_cop(&trial(x.clone(), x), &CopConfig::default()).unwrap();
        assert!(p.mean_ml.abs() < 1e-3 && p.mean_ap.abs() < 1e-3);
    }

    #[test]
    fn dither_removed_by_lowpass() {
        let dither: Vec<f64> = (0..2000).map(|k| 0.3 * (2.0 * PI * 25.0 * k as f64 / 100.0 + 0.3).sin()).collect();
        let x: Vec<f64> = dither.iter().map(|d| 5.0 + d).collect();
        let p = preprocess_cop(&trial(x.clone(), x), &CopConfig::default()).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        let residual = rms(&p.trial.cx.values()[100..1900]);
        assert!(residual < 0.05 * rms(&dither), "{residual}");
    }

    #[test]
    fn zero_rate_rejected() {
        assert!(matches!(CopTrial::new(vec![0.0; 3], vec![0.0; 3], 0.0), Err(CopError::Parameter(_))));
    }

    #[test]
    fn sway_examples() {
        let s = sway_metrics(&trial(vec![1.0; 10], vec![2.0; 10])).unwrap();
        assert_eq!((s.total_path_length, s.mean_speed, s.mean_speed_ml), (0.0, 0.0, 0.0));
        let s = sway_metrics(&trial(vec![0.0, 3.0], vec![0.0, 4.0])).unwrap();
        assert_eq!(s.total_path_length, 5.0);
        let n = 1000;
        let (x, y): (Vec<f64>, Vec<f64>) = (0..=n).map(|k| (2.0 * PI * k as f64 / n as f64).sin_cos()).unzip();
        let s = sway_metrics(&trial(x, y)).unwrap();
        assert!((s.total_path_length / (2.0 * PI) - 1.0).abs() < 1e-3);
        assert!(matches!(sway_metrics(&trial(vec![1.0], vec![1.0])), Err(CopError::Length { .. })));
    }

    #[test]
    fn gaussian_ellipse_area_and_containment() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = ellipse_95(&trial(x.clone(), y.clone())).unwrap();
        assert!((e.area / 18.82 - 1.0).abs() < 0.02, "{}", e.area);
        let inside = x.iter().zip(&y).filter(|(a, b)| e.contains(**a, **b)).count() as f64 / n as f64;
        assert!((inside - 0.95).abs() < 0.005, "{inside}");
    }

    #[test]
    fn collinear_is_degenerate() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let e = ellipse_95(&trial(x.clone(), x.iter().map(|v| 2.0 * v).collect())).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.semi_minor, 0.0);
        assert!((e.orientation_deg - 2f64.atan().to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn tone_spectrum() {
        let x: Vec<f64> = (0..6000).map(|k| (2.0 * PI * 1.0 * k as f64 / 100.0).sin()).collect();
        let cfg = CopConfig::default();
        let s = cop_frequency_metrics(&cop_spectrum(&trial(x.clone(), x).cx, &cfg).unwrap(), &cfg).unwrap();
        assert!(s.frequency_dispersion < 0.1, "{s:?}");
        assert!((s.centroid_frequency_hz - 1.0).abs() < 0.05);
        assert!((s.median_frequency_hz - 1.0).abs() < 0.05);
        let z = trial(vec![0.0; 3000], vec![0.0; 3000]);
        assert!(cop_frequency_metrics(&cop_spectrum(&z.cx, &cfg).unwrap(), &cfg).is_err());
    }

    #[test]
    fn white_noise_full_band_dispersion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..60_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let cfg = CopConfig { band_low_hz: 0.0, band_high_hz: 50.0, welch_segment_s: 5.0, ..CopConfig::default() };
        let s = cop_frequency_metrics(&cop_spectrum(&trial(x.clone(), x).cx, &cfg).unwrap(), &cfg).unwrap();
        assert!((s.frequency_dispersion / 0.5 - 1.0).abs() < 0.02, "{}", s.frequency_dispersion);
    }

    #[test]
    fn report_writes_five_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let x: Vec<f64> = (0..3000).map(|k| (k as f64 * 0.01).sin()).collect();
        let y: Vec<f64> = (0..3000).map(|k| (k as f64 * 0.013).cos()).collect();
        let cfg = CopConfig::default();
        let a = analyze_cop("t1", &trial(x, y), &cfg).unwrap();
        let files = write_cop_report(&a, &cfg, dir.path()).unwrap();
        let mut names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_owned()).collect();
        names.sort();
        let mut expect = COP_ARTIFACTS.to_vec();
        expect.sort();
        assert_eq!(names, expect);
        let stationary = analyze_cop("s", &trial(vec![1.0; 500], vec![1.0; 500]), &cfg).unwrap();
        assert_eq!(stationary.metrics.sway.total_path_length, 0.0);
        let csv = metrics_csv(&[stationary.metrics], &cfg);
        assert!(csv.lines().nth(1).unwrap().split(',').nth(9) == Some("0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rigid_motion_invariance(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..200),
            ang in -PI..PI, tx in -50.0f64..50.0, ty in -50.0f64..50.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
            let (s, c) = ang.sin_cos();
            let xr: Vec<f64> = pts.iter().map(|(a, b)| c * a - s * b + tx).collect();
            let yr: Vec<f64> = pts.iter().map(|(a, b)| s * a + c * b + ty).collect();
            let (t0, t1) = (trial(x, y), trial(xr, yr));
            let (a, b) = (sway_metrics(&t0).unwrap(), sway_metrics(&t1).unwrap());
            prop_assert!((a.total_path_length - b.total_path_length).abs() <= 1e-9 * a.total_path_length.max(1.0));
            prop_assert!((a.mean_speed * t0.duration_s() - a.total_path_length).abs() <= 1e-12 * a.total_path_length.max(1.0));
            let (e0, e1) = (ellipse_95(&t0).unwrap(), ellipse_95(&t1).unwrap());
            prop_assert!((e0.area - e1.area).abs() <= 1e-9 * e0.area.max(1e-6));
        }

        #[test]
        fn axis_swap_keeps_semi_axes(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..100)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
            let (e0, e1) = (ellipse_95(&trial(x.clone(), y.clone())).unwrap(), ellipse_95(&trial(y, x)).unwrap());
            prop_assert!((e0.semi_major - e1.semi_major).abs() <= 1e-9 * e0.semi_major.max(1.0));
            prop_assert!((e0.semi_minor - e1.semi_minor).abs() <= 1e-9 * e0.semi_major.max(1.0));
        }

        #[test]
        fn offset_changes_only_means(off in -100.0f64..100.0) {
            let x: Vec<f64> = (0..1500).map(|k| (k as f64 * 0.02).sin() + 0.3 * (k as f64 * 0.11).cos()).collect();
            let y: Vec<f64> = (0..1500).map(|k| (k as f64 * 0.017).cos()).collect();
            let cfg = CopConfig::default();
            let a = analyze_cop("a", &trial(x.clone(), y.clone()), &cfg).unwrap().metrics;
            let b = analyze_cop("a", &trial(x.iter().map(|v| v + off).collect(), y), &cfg).unwrap().metrics;
            prop_assert!((b.mean_ml - a.mean_ml - off).abs() < 1e-9 * (1.0 + off.abs()));
            let (sa, sb) = (a.spectral_ml.unwrap(), b.spectral_ml.unwrap());
            prop_assert!((sa.total_power - sb.total_power).abs() <= 1e-6 * sa.total_power);
            prop_assert!((a.sway.total_path_length - b.sway.total_path_length).abs() <= 1e-9 * a.sway.total_path_length);
            prop_assert!((a.ellipse.area - b.ellipse.area).abs() <= 1e-6 * a.ellipse.area);
        }
    }
}
