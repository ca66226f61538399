//! Vertical ground reaction force (Fz) trials: body-weight normalisation,
//! contact detection, force landmarks, impulses, rates of force
//! development, loading rate and two-segment stiffness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, trapz_slice, DspError, FilterKind};
use crate::model::UniformSeries;
use crate::plot::{emit_plot, PlotError, PlotSeries, PlotStyle};
use crate::tabular::{fmt_sig9, CsvWriter, SchemaError, Table};

pub const G: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("body-weight window [{start}, {end}] s: {reason}")]
    BodyWeight { start: f64, end: f64, reason: String },
    #[error("no contact: {0}")]
    NoContact(String),
    #[error("invalid selection: {0}")]
    Selection(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceConfig {
    pub threshold_n: f64,
    pub hold_ms: f64,
    /// Minimum peak prominence, in body weights, for VIP and impact
    /// transient candidates.
    pub prominence_bw: f64,
    /// VIP must fall in this leading fraction of the contact.
    pub vip_fraction: f64,
    /// Impact transient must fall within this time of onset.
    pub itransient_ms: f64,
    /// Zero-phase low-pass applied to Fz before analysis; off by default.
    pub lowpass_hz: Option<f64>,
    pub lowpass_order: usize,
}

impl Default for ForceConfig {
    fn default() -> Self {
        Self {
            threshold_n: 20.0,
            hold_ms: 10.0,
            prominence_bw: 0.1,
            vip_fraction: 0.3,
            itransient_ms: 50.0,
            lowpass_hz: None,
            lowpass_order: 4,
        }
    }
}

/// Manually picked landmark indices (absolute sample indices). Each one
/// present replaces the automatic choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PickedPeaks {
    pub itransient: Option<usize>,
    pub vip: Option<usize>,
    pub max: Option<usize>,
}

/// Per-file choices made in the UI or written by hand.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceSelections {
    /// Fz column, by header name or 0-based index.
    #[serde(default)]
    pub fz_column: Option<String>,
    pub bw_window: (f64, f64),
    /// One trial per window; the whole record when empty.
    #[serde(default)]
    pub analysis_windows: Vec<(f64, f64)>,
    /// Parallel to `analysis_windows`.
    #[serde(default)]
    pub picked_peaks: Vec<PickedPeaks>,
    #[serde(default)]
    pub side_foot: String,
    #[serde(default)]
    pub dominance: String,
    /// 0..=10.
    #[serde(default)]
    pub quality: Option<u8>,
    #[serde(default)]
    pub trial: Option<String>,
}

impl ForceSelections {
    /// Field errors against a recording of the given extent.
    pub fn validate(&self, t0_s: f64, end_s: f64) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        let tol = 1e-9;
        let inside = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a >= t0_s - tol && b <= end_s + tol && a < b;
        if !inside(self.bw_window) {
            errs.push(("bw_window".into(), format!("must lie inside [{t0_s}, {end_s}] s with start < end")));
        } else if self.bw_window.1 - self.bw_window.0 < 0.2 - tol {
            errs.push(("bw_window".into(), "must span at least 0.2 s".into()));
        }
        for (i, w) in self.analysis_windows.iter().enumerate() {
            if !inside(*w) {
                errs.push((format!("analysis_windows[{i}]"), format!("must lie inside [{t0_s}, {end_s}] s with start < end")));
            }
        }
        if self.picked_peaks.len() > self.analysis_windows.len().max(1) {
            errs.push(("picked_peaks".into(), "more entries than analysis windows".into()));
        }
        if let Some(q) = self.quality {
            if q > 10 {
                errs.push(("quality".into(), "must be within 0..=10".into()));
            }
        }
        for (name, v) in [("side_foot", &self.side_foot), ("dominance", &self.dominance)] {
            if !matches!(v.as_str(), "" | "R" | "L" | "r" | "l") {
                errs.push((name.into(), "must be R or L".into()));
            }
        }
        errs
    }
}

/// Mean Fz over the window, in newtons and kilograms.
pub fn body_weight(fz: &UniformSeries, window: (f64, f64)) -> Result<(f64, f64), ForceError> {
    let err = |reason: String| ForceError::BodyWeight { start: window.0, end: window.1, reason };
    if window.1 - window.0 < 0.2 - 1e-9 {
        return Err(err("shorter than 0.2 s".into()));
    }
    let w = fz.trim(window.0, window.1).map_err(|e| err(e.to_string()))?;
    let v = w.values();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(err("contains gaps".into()));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(mean > 0.0) {
        return Err(err(format!("mean force {mean} N is not positive")));
    }
    if sd > 0.05 * mean {
        return Err(err(format!("unstable: standard deviation {sd:.3} N exceeds 5% of mean {mean:.3} N")));
    }
    Ok((mean, mean / G))
}

/// Sample indices of contact onset and toe-off. Toe-off is the first
/// sample of the sustained unloaded run, so the contact spans
/// `onset..toeoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub onset: usize,
    pub toeoff: usize,
}

pub fn hold_samples(cfg: &ForceConfig, rate_hz: f64) -> usize {
    ((cfg.hold_ms / 1000.0 * rate_hz).round() as usize).max(1)
}

/// Threshold crossing with hold-time debouncing, searched within the sample
/// range `[from, to)`.
pub fn detect_contact(fz: &UniformSeries, cfg: &ForceConfig, from: usize, to: usize) -> Result<Contact, ForceError> {
    let v = fz.values();
    let to = to.min(v.len());
    let h = hold_samples(cfg, fz.rate_hz());
    let find = |start: usize, above: bool| -> Option<usize> {
        let mut run = 0;
        for i in start..to {
            let ok = if above { v[i] > cfg.threshold_n } else { v[i] < cfg.threshold_n };
            run = if ok { run + 1 } else { 0 };
            if run == h {
                return Some(i + 1 - h);
            }
        }
        None
    };
    let onset = find(from, true)
        .ok_or_else(|| ForceError::NoContact(format!("Fz never exceeds {} N for {} ms", cfg.threshold_n, cfg.hold_ms)))?;
    let toeoff = find(onset + 1, false)
        .ok_or_else(|| ForceError::NoContact(format!("Fz never returns below {} N after onset", cfg.threshold_n)))?;
    Ok(Contact { onset, toeoff })
}

/// Topographic prominence of the peak at `i`, looking no further than the
/// contact interval.
fn prominence(v: &[f64], i: usize, lo: usize, hi: usize) -> f64 {
    let side = |range: &mut dyn Iterator<Item = usize>| {
        let mut base = v[i];
        for j in range {
            if v[j] > v[i] {
                break;
            }
            base = base.min(v[j]);
        }
        base
    };
    let left = side(&mut (lo..i).rev());
    let right = side(&mut (i + 1..hi));
    v[i] - left.max(right)
}

/// Local maxima inside `(lo, hi)`; plateaus report their first sample.
fn local_maxima(v: &[f64], lo: usize, hi: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = lo + 1;
    while i + 1 < hi {
        if v[i] > v[i - 1] {
            let mut j = i;
            while j + 1 < hi && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < hi && v[j + 1] < v[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForceLandmarks {
    pub itransient: usize,
    pub vip: usize,
    pub max: usize,
    /// False when the impact transient fell back to VIP.
    pub itransient_found: bool,
    /// False when VIP fell back to the maximum.
    pub vip_found: bool,
}

pub fn detect_force_landmarks(
    fz: &UniformSeries,
    bw_n: f64,
    contact: Contact,
    cfg: &ForceConfig,
    picked: Option<&PickedPeaks>,
) -> Result<ForceLandmarks, ForceError> {
    let v = fz.values();
    let (lo, hi) = (contact.onset, contact.toeoff);
    if let Some(p) = picked {
        for (name, idx) in [("itransient", p.itransient), ("vip", p.vip), ("max", p.max)] {
            if let Some(i) = idx {
                if i < lo || i >= hi {
                    return Err(ForceError::Selection(format!("picked {name} index {i} outside contact [{lo}, {hi})")));
                }
            }
        }
    }
    let max = match picked.and_then(|p| p.max) {
        Some(i) => i,
        None => (lo..hi).fold(lo, |best, i| if v[i] > v[best] { i } else { best }),
    };
    let min_prom = cfg.prominence_bw * bw_n;
    let candidates: Vec<usize> =
        local_maxima(v, lo, hi).into_iter().filter(|&i| prominence(v, i, lo, hi) >= min_prom).collect();
    let vip_limit = lo as f64 + cfg.vip_fraction * (hi - lo) as f64;
    let auto_vip = candidates.iter().copied().find(|&i| (i as f64) < vip_limit);
    let (vip, vip_found) = match (picked.and_then(|p| p.vip), auto_vip) {
        (Some(i), _) => (i, true),
        (None, Some(i)) => (i, true),
        (None, None) => (max, false),
    };
    let it_limit = lo + (cfg.itransient_ms / 1000.0 * fz.rate_hz()).round() as usize;
    let auto_it = candidates.iter().copied().find(|&i| i <= it_limit);
    let (itransient, itransient_found) = match (picked.and_then(|p| p.itransient), auto_it) {
        (Some(i), _) => (i, true),
        (None, Some(i)) => (i, true),
        (None, None) => (vip, false),
    };
    Ok(ForceLandmarks { itransient, vip, max, itransient_found, vip_found })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stiffness {
    /// N/m.
    pub simple: f64,
    pub low: f64,
    pub high: f64,
    /// Seconds from onset to the first sample of the second segment.
    pub transition_time_s: f64,
    pub breakpoint: usize,
}

/// Least-squares slope and residual sum of squares of `y` on `x`.
fn linfit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return (f64::NAN, syy);
    }
    (sxy / sxx, (syy - sxy * sxy / sxx).max(0.0))
}

/// Vertical centre-of-mass displacement from onset by double trapezoidal
/// integration of `Fz/m - g`, starting at rest.
pub fn com_displacement(fz: &[f64], bw_n: f64, rate_hz: f64) -> Vec<f64> {
    let m = bw_n / G;
    let dt = 1.0 / rate_hz;
    let mut d = vec![0.0; fz.len()];
    let mut vel = 0.0;
    for k in 1..fz.len() {
        let (a0, a1) = (fz[k - 1] / m - G, fz[k] / m - G);
        let v_next = vel + 0.5 * dt * (a0 + a1);
        d[k] = d[k - 1] + 0.5 * dt * (vel + v_next);
        vel = v_next;
    }
    d
}

/// Force-displacement stiffness over the loading phase `onset..=max_idx`.
/// The two-segment model is fit by exhaustive search over breakpoints,
/// each side an independent least-squares line of at least 3 samples.
pub fn two_segment_stiffness(fz: &UniformSeries, bw_n: f64, onset: usize, max_idx: usize) -> Result<Stiffness, ForceError> {
    const MIN_LOADING: usize = 10;
    const MIN_SEGMENT: usize = 3;
    if max_idx < onset || max_idx - onset + 1 < MIN_LOADING {
        return Err(ForceError::Insufficient(format!(
            "loading phase has {} sample(s); at least {MIN_LOADING} required",
            max_idx.saturating_sub(onset) + 1
        )));
    }
    let f = &fz.values()[onset..=max_idx];
    let d = com_displacement(f, bw_n, fz.rate_hz());
    let (simple, _) = linfit(&d, f);
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for b in MIN_SEGMENT..=f.len() - MIN_SEGMENT {
        let (k1, e1) = linfit(&d[..b], &f[..b]);
        let (k2, e2) = linfit(&d[b..], &f[b..]);
        if !(k1.is_finite() && k2.is_finite()) {
            continue;
        }
        let sse = e1 + e2;
        if best.is_none_or(|(s, ..)| sse < s) {
            best = Some((sse, b, k1, k2));
        }
    }
    let (_, b, k1, k2) =
        best.ok_or_else(|| ForceError::Insufficient("displacement is constant over the loading phase".into()))?;
    Ok(Stiffness {
        simple,
        low: k1.min(k2),
        high: k1.max(k2),
        transition_time_s: b as f64 / fz.rate_hz(),
        breakpoint: onset + b,
    })
}

/// The results ledger, column for column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceCubeRow {
    pub file_name: String,
    pub timestamp: String,
    pub trial: String,
    pub bw_kg: f64,
    pub side_foot: String,
    pub dominance: String,
    pub quality: Option<u8>,
    pub num_samples: usize,
    pub index_40ms: Option<usize>,
    pub index_100ms: Option<usize>,
    pub index_itransient: Option<usize>,
    pub index_vip: Option<usize>,
    pub index_max: Option<usize>,
    pub test_duration_s: f64,
    pub cumsum_times_s: Option<f64>,
    pub contact_time_s: Option<f64>,
    pub time_40ms_s: Option<f64>,
    pub time_100ms_s: Option<f64>,
    pub time_itransient_s: Option<f64>,
    pub time_vip_s: Option<f64>,
    pub time_peak_vmax_s: Option<f64>,
    pub vpeak_40ms_bw: Option<f64>,
    pub vpeak_100ms_bw: Option<f64>,
    pub peak_vitransient_bw: Option<f64>,
    pub peak_vip_bw: Option<f64>,
    pub peak_vmax_bw: Option<f64>,
    pub total_imp_bw_s: Option<f64>,
    pub imp_40ms_bw_s: Option<f64>,
    pub imp_100ms_bw_s: Option<f64>,
    pub imp_itransient_bw_s: Option<f64>,
    pub imp_brake_vmax_bw_s: Option<f64>,
    pub imp_propulsion_bw_s: Option<f64>,
    pub rfd_40ms: Option<f64>,
    pub rfd_100ms: Option<f64>,
    pub rfd_itransient: Option<f64>,
    pub rfd_brake_vmax: Option<f64>,
    pub rfd_propulsion: Option<f64>,
    pub simple_stiffness_constant: Option<f64>,
    pub high_stiffness: Option<f64>,
    pub low_stiffness: Option<f64>,
    pub transition_time: Option<f64>,
    pub average_loading_rate: Option<f64>,
    /// `(column, reason)` for every empty metric cell.
    pub invalid: Vec<(String, String)>,
}

pub const FORCECUBE_HEADER: [&str; 42] = [
    "FileName",
    "TimeStamp",
    "Trial",
    "BW_kg",
    "SideFoot_RL",
    "Dominance_RL",
    "Quality",
    "Num_Samples",
    "Index_40ms",
    "Index_100ms",
    "Index_ITransient",
    "Index_VIP",
    "Index_Max",
    "Test_Duration_s",
    "CumSum_Times_s",
    "Contact_Time_s",
    "Time_40ms_s",
    "Time_100ms_s",
    "Time_ITransient_s",
    "Time_VIP_s",
    "Time_Peak_VMax_s",
    "VPeak_40ms_BW",
    "VPeak_100ms_BW",
    "Peak_VITransient_BW",
    "Peak_VIP_BW",
    "Peak_VMax_BW",
    "Total_Imp_BW.s",
    "Imp_40ms_BW.s",
    "Imp_100ms_BW.s",
    "Imp_ITransient_BW.s",
    "Imp_Brake_VMax_BW.s",
    "Imp_Propulsion_BW.s",
    "RFD_40ms_BW.s⁻¹",
    "RFD_100ms_BW.s⁻¹",
    "RFD_ITransient_BW.s⁻¹",
    "RFD_Brake_VMax_BW.s⁻¹",
    "RFD_Propulsion_BW.s⁻¹",
    "Simple_stiffness_constant",
    "High_stiffness",
    "Low_stiffness",
    "Transition_time",
    "Average_loading_rate",
];

impl ForceCubeRow {
    pub fn cells(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
        let i = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.file_name.clone(),
            self.timestamp.clone(),
            self.trial.clone(),
            fmt_sig9(self.bw_kg),
            self.side_foot.clone(),
            self.dominance.clone(),
            self.quality.map(|q| q.to_string()).unwrap_or_default(),
            self.num_samples.to_string(),
            i(self.index_40ms),
            i(self.index_100ms),
            i(self.index_itransient),
            i(self.index_vip),
            i(self.index_max),
            fmt_sig9(self.test_duration_s),
            f(self.cumsum_times_s),
            f(self.contact_time_s),
            f(self.time_40ms_s),
            f(self.time_100ms_s),
            f(self.time_itransient_s),
            f(self.time_vip_s),
            f(self.time_peak_vmax_s),
            f(self.vpeak_40ms_bw),
            f(self.vpeak_100ms_bw),
            f(self.peak_vitransient_bw),
            f(self.peak_vip_bw),
            f(self.peak_vmax_bw),
            f(self.total_imp_bw_s),
            f(self.imp_40ms_bw_s),
            f(self.imp_100ms_bw_s),
            f(self.imp_itransient_bw_s),
            f(self.imp_brake_vmax_bw_s),
            f(self.imp_propulsion_bw_s),
            f(self.rfd_40ms),
            f(self.rfd_100ms),
            f(self.rfd_itransient),
            f(self.rfd_brake_vmax),
            f(self.rfd_propulsion),
            f(self.simple_stiffness_constant),
            f(self.high_stiffness),
            f(self.low_stiffness),
            f(self.transition_time),
            f(self.average_loading_rate),
        ]
    }
}

pub fn rows_to_csv(rows: &[ForceCubeRow]) -> String {
    let mut w = CsvWriter::with_header(&FORCECUBE_HEADER);
    for r in rows {
        w.row(&r.cells());
    }
    w.finish()
}

/// `FileName,Trial,Field,Reason` for every empty metric cell.
pub fn invalid_fields_csv(rows: &[ForceCubeRow]) -> String {
    let mut w = CsvWriter::with_header(&["FileName", "Trial", "Field", "Reason"]);
    for r in rows {
        for (field, reason) in &r.invalid {
            w.row(&[r.file_name.as_str(), r.trial.as_str(), field.as_str(), reason.as_str()]);
        }
    }
    w.finish()
}

/// Running total of contact times in row order (rows without a contact
/// time contribute nothing and get an empty cell).
pub fn fill_cumsum(rows: &mut [ForceCubeRow]) {
    let mut acc = 0.0;
    for r in rows {
        r.cumsum_times_s = r.contact_time_s.map(|c| {
            acc += c;
            acc
        });
    }
}

/// Everything about one trial beyond the row itself, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialAnalysis {
    pub row: ForceCubeRow,
    pub contact: Option<Contact>,
    pub landmarks: Option<ForceLandmarks>,
    pub window: (usize, usize),
}

/// Metric context for one trial.
pub struct TrialInput<'a> {
    pub file_name: &'a str,
    pub timestamp: &'a str,
    pub trial: String,
    pub bw_n: f64,
    pub side_foot: &'a str,
    pub dominance: &'a str,
    pub quality: Option<u8>,
    /// Sample range `[first, last)` of the analysis window.
    pub window: (usize, usize),
    pub picked: Option<&'a PickedPeaks>,
}

/// Computes one ledger row. Contact or landmark failures leave the
/// dependent fields empty with a reason rather than failing the row;
/// invalid picked peaks are an error.
pub fn compute_metrics(fz: &UniformSeries, input: &TrialInput<'_>, cfg: &ForceConfig) -> Result<TrialAnalysis, ForceError> {
    let rate = fz.rate_hz();
    let v = fz.values();
    let bw = input.bw_n;
    let (w0, w1) = input.window;
    let mut row = ForceCubeRow {
        file_name: input.file_name.to_owned(),
        timestamp: input.timestamp.to_owned(),
        trial: input.trial.clone(),
        bw_kg: bw / G,
        side_foot: input.side_foot.to_owned(),
        dominance: input.dominance.to_owned(),
        quality: input.quality,
        num_samples: w1 - w0,
        test_duration_s: (w1 - w0) as f64 / rate,
        ..ForceCubeRow::default()
    };
    let contact = match detect_contact(fz, cfg, w0, w1) {
        Ok(c) => c,
        Err(e) => {
            for name in &FORCECUBE_HEADER[8..] {
                if *name != "Test_Duration_s" && *name != "CumSum_Times_s" {
                    row.invalid.push(((*name).to_owned(), e.to_string()));
                }
            }
            return Ok(TrialAnalysis { row, contact: None, landmarks: None, window: input.window });
        }
    };
    let lm = detect_force_landmarks(fz, bw, contact, cfg, input.picked)?;
    let on = contact.onset;
    let t_rel = |i: usize| (i - on) as f64 / rate;
    let at = |i: usize| v.get(i).map(|x| x / bw);
    let mut invalid = Vec::new();
    let mut need = |name: &str, val: Option<f64>, why: &str| -> Option<f64> {
        if val.is_none() {
            invalid.push((name.to_owned(), why.to_owned()));
        }
        val
    };
    // Last loaded sample; impulses and RFDs "to toe-off" end here.
    let last = contact.toeoff - 1;
    let i40 = on + (0.040 * rate).round() as usize;
    let i100 = on + (0.100 * rate).round() as usize;
    let within = |i: usize| i < v.len() && i <= last;
    let impulse = |a: usize, b: usize| -> Option<f64> {
        (b < v.len() && b > a).then(|| v[a..=b].iter().map(|x| x / bw).collect::<Vec<_>>()).map(|y| trapz_slice(&y, 1.0 / rate))
    };
    let rfd = |a: usize, b: usize| -> Option<f64> { (b < v.len() && b > a).then(|| (v[b] - v[a]) / ((b - a) as f64 / rate * bw)) };

    row.index_40ms = Some(i40);
    row.index_100ms = Some(i100);
    row.index_itransient = Some(lm.itransient);
    row.index_vip = Some(lm.vip);
    row.index_max = Some(lm.max);
    row.contact_time_s = Some((contact.toeoff - on) as f64 / rate);
    row.time_40ms_s = Some(t_rel(i40));
    row.time_100ms_s = Some(t_rel(i100));
    row.time_itransient_s = Some(t_rel(lm.itransient));
    row.time_vip_s = Some(t_rel(lm.vip));
    row.time_peak_vmax_s = Some(t_rel(lm.max));
    let beyond = "index beyond end of contact";
    row.vpeak_40ms_bw = need("VPeak_40ms_BW", at(i40).filter(|_| within(i40)), beyond);
    row.vpeak_100ms_bw = need("VPeak_100ms_BW", at(i100).filter(|_| within(i100)), beyond);
    row.peak_vitransient_bw = at(lm.itransient);
    row.peak_vip_bw = at(lm.vip);
    row.peak_vmax_bw = at(lm.max);
    let empty = "empty interval";
    row.total_imp_bw_s = need("Total_Imp_BW.s", impulse(on, last), empty);
    row.imp_40ms_bw_s = need("Imp_40ms_BW.s", impulse(on, i40).filter(|_| within(i40)), beyond);
    row.imp_100ms_bw_s = need("Imp_100ms_BW.s", impulse(on, i100).filter(|_| within(i100)), beyond);
    row.imp_itransient_bw_s = need("Imp_ITransient_BW.s", impulse(on, lm.itransient), empty);
    row.imp_brake_vmax_bw_s = need("Imp_Brake_VMax_BW.s", impulse(on, lm.max), empty);
    row.imp_propulsion_bw_s = need("Imp_Propulsion_BW.s", impulse(lm.max, last), empty);
    row.rfd_40ms = need("RFD_40ms_BW.s⁻¹", rfd(on, i40).filter(|_| within(i40)), beyond);
    row.rfd_100ms = need("RFD_100ms_BW.s⁻¹", rfd(on, i100).filter(|_| within(i100)), beyond);
    row.rfd_itransient = need("RFD_ITransient_BW.s⁻¹", rfd(on, lm.itransient), empty);
    row.rfd_brake_vmax = need("RFD_Brake_VMax_BW.s⁻¹", rfd(on, lm.max), empty);
    row.rfd_propulsion = need("RFD_Propulsion_BW.s⁻¹", rfd(lm.max, last), empty);

    match two_segment_stiffness(fz, bw, on, lm.max) {
        Ok(s) => {
            row.simple_stiffness_constant = Some(s.simple);
            row.high_stiffness = Some(s.high);
            row.low_stiffness = Some(s.low);
            row.transition_time = Some(s.transition_time_s);
        }
        Err(e) => {
            for name in ["Simple_stiffness_constant", "High_stiffness", "Low_stiffness", "Transition_time"] {
                invalid.push((name.to_owned(), e.to_string()));
            }
        }
    }
    let alr = average_loading_rate(v, bw, on, lm.vip, rate);
    row.average_loading_rate = alr.as_ref().ok().copied();
    if let Err(why) = alr {
        invalid.push(("Average_loading_rate".to_owned(), why));
    }
    row.invalid = invalid;
    Ok(TrialAnalysis { row, contact: Some(contact), landmarks: Some(lm), window: input.window })
}

/// Least-squares slope of `Fz/BW` (BW/s) between the first samples reaching
/// 20% and 80% of the VIP force on the rising limb.
pub fn average_loading_rate(v: &[f64], bw: f64, onset: usize, vip: usize, rate: f64) -> Result<f64, String> {
    let peak = v[vip];
    let first = |frac: f64| (onset..=vip).find(|&i| v[i] >= frac * peak);
    let (Some(a), Some(b)) = (first(0.2), first(0.8)) else {
        return Err("rising limb does not reach 20-80% of VIP".into());
    };
    if b <= a {
        return Err("fewer than two samples between 20% and 80% of VIP".into());
    }
    let t: Vec<f64> = (a..=b).map(|i| i as f64 / rate).collect();
    let y: Vec<f64> = v[a..=b].iter().map(|x| x / bw).collect();
    Ok(linfit(&t, &y).0)
}

/// Reads `time` plus the chosen Fz column (name or 0-based index).
pub fn parse_force_csv(text: &str, fz_column: &str, rate_hz: Option<f64>) -> Result<UniformSeries, ForceError> {
    let table = Table::parse(text)?;
    let col = table.resolve_column(fz_column)?;
    let fz = table.numeric_column(col)?;
    if fz.len() < 2 {
        return Err(SchemaError::new("force file needs at least two samples").into());
    }
    let time = table.column_index("time").or_else(|| table.column_index("time_s"));
    let (rate, t0) = match (time, rate_hz) {
        (_, Some(r)) => (r, time.map(|c| table.numeric_column(c)).transpose()?.map(|t| t[0]).unwrap_or(0.0)),
        (Some(c), None) => {
            let t = table.numeric_column(c)?;
            let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
            if !(dt > 0.0) {
                return Err(SchemaError::new("time column is not increasing").into());
            }
            (1.0 / dt, t[0])
        }
        (None, None) => return Err(SchemaError::at(1, "no `time` column and no sampling rate given").into()),
    };
    if !(rate.is_finite() && rate > 0.0) {
        return Err(SchemaError::new(format!("invalid sampling rate {rate}")).into());
    }
    UniformSeries::new(fz, rate, t0).map_err(|e| SchemaError::new(e.to_string()).into())
}

/// Applies the optional low-pass, then analyses every window of the
/// selections as one trial row.
pub fn analyze_file(
    file_name: &str,
    fz: &UniformSeries,
    sel: &ForceSelections,
    cfg: &ForceConfig,
    timestamp: &str,
) -> Result<Vec<TrialAnalysis>, ForceError> {
    let errs = sel.validate(fz.t0_s(), fz.end_s());
    if let Some((field, msg)) = errs.first() {
        return Err(ForceError::Selection(format!("{field}: {msg}")));
    }
    let fz = match cfg.lowpass_hz {
        Some(fc) => {
            let c = dsp::butter_design(FilterKind::Lowpass { cutoff_hz: fc }, cfg.lowpass_order, fz.rate_hz())?;
            dsp::filtfilt(&c, fz)?
        }
        None => fz.clone(),
    };
    let (bw_n, _) = body_weight(&fz, sel.bw_window)?;
    let windows = if sel.analysis_windows.is_empty() { vec![(fz.t0_s(), fz.end_s())] } else { sel.analysis_windows.clone() };
    let mut out = Vec::with_capacity(windows.len());
    for (k, &(a, b)) in windows.iter().enumerate() {
        let range = fz.index_window(a, b).map_err(|e| ForceError::Selection(e.to_string()))?;
        let trial = match (&sel.trial, windows.len()) {
            (Some(t), 1) => t.clone(),
            (Some(t), _) => format!("{t}.{}", k + 1),
            (None, _) => (k + 1).to_string(),
        };
        let input = TrialInput {
            file_name,
            timestamp,
            trial,
            bw_n,
            side_foot: &sel.side_foot,
            dominance: &sel.dominance,
            quality: sel.quality,
            window: range,
            picked: sel.picked_peaks.get(k),
        };
        out.push(compute_metrics(&fz, &input, cfg)?);
    }
    Ok(out)
}

/// Force-time curve of one trial in body weights with landmark markers.
pub fn plot_trial(fz: &UniformSeries, bw_n: f64, t: &TrialAnalysis) -> Result<String, PlotError> {
    let (a, b) = t.window;
    let x: Vec<f64> = (a..b).map(|i| fz.time_at(i)).collect();
    let y: Vec<f64> = fz.values()[a..b].iter().map(|v| v / bw_n).collect();
    let mut series = vec![PlotSeries::new("Fz", x, y)];
    if let Some(lm) = t.landmarks {
        let idx = [lm.itransient, lm.vip, lm.max];
        series.push(PlotSeries::markers(
            "ITransient / VIP / Max",
            idx.iter().map(|&i| fz.time_at(i)).collect(),
            idx.iter().map(|&i| fz.values()[i] / bw_n).collect(),
        ));
    }
    if let Some(c) = t.contact {
        let idx = [c.onset, c.toeoff.min(fz.len() - 1)];
        series.push(PlotSeries::markers(
            "contact",
            idx.iter().map(|&i| fz.time_at(i)).collect(),
            idx.iter().map(|&i| fz.values()[i] / bw_n).collect(),
        ));
    }
    let title = format!("{} trial {}", t.row.file_name, t.row.trial);
    emit_plot(&series, &PlotStyle::titled(&title, "time (s)", "Fz (BW)"))
}
