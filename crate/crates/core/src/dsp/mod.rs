//! Filtering and spectral estimation shared by the EMG, posturography and
//! force analyses.

mod butter;
mod filter;
mod spectrum;

pub use butter::{butter_design, FilterKind, IirCoefficients};
pub use filter::{filtfilt, filtfilt_padlen, filtfilt_slice, moving_rms, rectify, window_samples};
pub use spectrum::{
    frequency_dispersion, median_frequency, percentile_frequency, spectral_moments, stft_median_frequency, welch_psd,
    Detrend, Spectrum, WelchParams, WindowKind,
};

use thiserror::Error;

use crate::model::UniformSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("filter design: {0}")]
    Design(String),
    #[error("series of {got} samples is too short; at least {needed} required")]
    Length { needed: usize, got: usize },
    #[error("{0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("window [{start}, {end}] s lies outside the series [{first}, {last}] s")]
    Range { start: f64, end: f64, first: f64, last: f64 },
}

/// Trapezoidal integral over the samples whose times fall in `[a_s, b_s]`
/// (bounds snapped to the nearest sample, both inclusive).
pub fn trapz(series: &UniformSeries, a_s: f64, b_s: f64) -> Result<f64, DspError> {
    let range = || DspError::Range { start: a_s, end: b_s, first: series.t0_s(), last: series.end_s() };
    let fs = series.rate_hz();
    let (ia, ib) = ((a_s - series.t0_s()) * fs, (b_s - series.t0_s()) * fs);
    let last = series.len() as f64 - 1.0;
    const SLACK: f64 = 1e-6;
    if !(ia.is_finite() && ib.is_finite()) || ia < -SLACK || ib > last + SLACK || ia > ib {
        return Err(range());
    }
    let (i, j) = (ia.round() as usize, (ib.round() as usize).min(series.len() - 1));
    Ok(trapz_slice(&series.values()[i..=j], series.dt()))
}

pub fn trapz_slice(y: &[f64], dt: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    dt * (inner + 0.5 * (y[0] + y[y.len() - 1]))
}
