use super::{DspError, IirCoefficients};
use crate::model::UniformSeries;

/// Number of samples reflected onto each end before filtering.
pub fn filtfilt_padlen(coeffs: &IirCoefficients) -> usize {
    3 * (coeffs.filter_order() + 1)
}

/// Zero-phase forward-backward filtering.
///
/// Each end is extended by odd reflection about the end sample, and each
/// pass starts from the steady-state section states scaled by its first
/// input sample. The forward-then-backward and backward-then-forward
/// results are averaged, which makes the operation commute exactly with
/// time reversal; in the interior the two orders agree anyway.
pub fn filtfilt(coeffs: &IirCoefficients, series: &UniformSeries) -> Result<UniformSeries, DspError> {
    series.ensure_no_gaps().map_err(|e| DspError::Parameter(e.to_string()))?;
    let out = filtfilt_slice(coeffs, series.values())?;
    Ok(series.with_values(out))
}

pub fn filtfilt_slice(coeffs: &IirCoefficients, x: &[f64]) -> Result<Vec<f64>, DspError> {
    let pad = filtfilt_padlen(coeffs);
    let n = x.len();
    if n <= pad {
        return Err(DspError::Length { needed: pad + 1, got: n });
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = steady_state(coeffs);
    let fb = forward_backward(&coeffs.sos, &zi, ext.clone());
    ext.reverse();
    let mut bf = forward_backward(&coeffs.sos, &zi, ext);
    bf.reverse();
    Ok(fb[pad..pad + n].iter().zip(&bf[pad..pad + n]).map(|(a, b)| 0.5 * (a + b)).collect())
}

fn forward_backward(sos: &[[f64; 6]], zi: &[[f64; 2]], mut y: Vec<f64>) -> Vec<f64> {
    sosfilt(sos, zi, &mut y);
    y.reverse();
    sosfilt(sos, zi, &mut y);
    y.reverse();
    y
}

/// Per-section steady-state states for a unit step, each scaled by the DC
/// gain of the sections before it.
fn steady_state(coeffs: &IirCoefficients) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    coeffs
        .sos
        .iter()
        .map(|s| {
            let dc = (s[0] + s[1] + s[2]) / (s[3] + s[4] + s[5]);
            let z2 = s[2] - s[5] * dc;
            let z1 = dc - s[0];
            let out = [scale * z1, scale * z2];
            scale *= dc;
            out
        })
        .collect()
}

/// Transposed direct form II, in place, states initialised to `zi * x[0]`.
fn sosfilt(sos: &[[f64; 6]], zi: &[[f64; 2]], x: &mut [f64]) {
    let Some(&x0) = x.first() else { return };
    for (s, z) in sos.iter().zip(zi) {
        let (mut z1, mut z2) = (z[0] * x0, z[1] * x0);
        for v in x.iter_mut() {
            let xin = *v;
            let y = s[0] * xin + z1;
            z1 = s[1] * xin - s[4] * y + z2;
            z2 = s[2] * xin - s[5] * y;
            *v = y;
        }
    }
}

pub fn rectify(series: &UniformSeries) -> UniformSeries {
    series.with_values(series.values().iter().map(|v| v.abs()).collect())
}

/// Window length in samples for a duration, `round(window_s * rate)`.
pub fn window_samples(window_s: f64, rate_hz: f64) -> usize {
    let w = (window_s * rate_hz).round();
    if w.is_finite() && w > 0.0 {
        w as usize
    } else {
        0
    }
}

/// Centered moving RMS. The window spans `w = round(window_s * rate)`
/// samples (`w/2` before, the rest after); near the ends it shrinks to the
/// largest symmetric window that fits.
pub fn moving_rms(series: &UniformSeries, window_s: f64) -> Result<UniformSeries, DspError> {
    let w = window_samples(window_s, series.rate_hz());
    if w < 2 {
        return Err(DspError::Parameter(format!(
            "RMS window {window_s} s is {w} sample(s) at {} Hz; at least 2 required",
            series.rate_hz()
        )));
    }
    let x = series.values();
    let n = x.len();
    let left = w / 2;
    let right = w - left - 1;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let out = (0..n)
        .map(|k| {
            let (lo, hi) = if k >= left && k + right < n {
                (k - left, k + right)
            } else {
                let m = k.min(n - 1 - k).min(left.max(right));
                (k - m, k + m)
            };
            let ms = x[lo..=hi].iter().map(|v| v * v).sum::<f64>() / (hi - lo + 1) as f64;
            // The mean of squares never exceeds the peak square; clamping only
            // removes summation rounding.
            ms.sqrt().min(peak)
        })
        .collect();
    Ok(series.with_values(out))
}
