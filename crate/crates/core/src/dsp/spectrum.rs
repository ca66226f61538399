use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::model::UniformSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    None,
    Constant,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WelchParams {
    /// Samples per segment; `None` means `min(256, N)`.
    pub segment_len: Option<usize>,
    pub overlap: f64,
    pub window: WindowKind,
    pub detrend: Detrend,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self { segment_len: None, overlap: 0.5, window: WindowKind::Hann, detrend: Detrend::Linear }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    /// units²/Hz.
    pub psd: Vec<f64>,
    pub df: f64,
    pub segment_len: usize,
    pub overlap_samples: usize,
    pub segments: usize,
    pub window: WindowKind,
}

impl Spectrum {
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df
    }

    pub fn peak_frequency(&self) -> Option<f64> {
        let (i, _) = self.psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        Some(self.freqs_hz[i])
    }

    /// Restriction to bins with `lo <= f <= hi`.
    pub fn band(&self, lo: f64, hi: f64) -> Spectrum {
        let keep: Vec<usize> = (0..self.freqs_hz.len()).filter(|&i| self.freqs_hz[i] >= lo && self.freqs_hz[i] <= hi).collect();
        Spectrum {
            freqs_hz: keep.iter().map(|&i| self.freqs_hz[i]).collect(),
            psd: keep.iter().map(|&i| self.psd[i]).collect(),
            ..self.clone()
        }
    }
}

fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    match kind {
        WindowKind::Rectangular => vec![1.0; n],
        // Periodic Hann, as used for spectral estimation.
        WindowKind::Hann => (0..n).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect(),
    }
}

fn detrend(seg: &mut [f64], how: Detrend) {
    let n = seg.len() as f64;
    match how {
        Detrend::None => {}
        Detrend::Constant => {
            let m = seg.iter().sum::<f64>() / n;
            seg.iter_mut().for_each(|v| *v -= m);
        }
        Detrend::Linear => {
            let tm = (n - 1.0) / 2.0;
            let ym = seg.iter().sum::<f64>() / n;
            let (mut sty, mut stt) = (0.0, 0.0);
            for (k, v) in seg.iter().enumerate() {
                let t = k as f64 - tm;
                sty += t * (v - ym);
                stt += t * t;
            }
            let slope = if stt > 0.0 { sty / stt } else { 0.0 };
            for (k, v) in seg.iter_mut().enumerate() {
                *v -= ym + slope * (k as f64 - tm);
            }
        }
    }
}

/// Reusable periodogram machinery for one segment length.
struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    win: Vec<f64>,
    scale: f64,
    detrend: Detrend,
    buf: Vec<Complex64>,
    seg: Vec<f64>,
}

impl Periodogram {
    fn new(len: usize, fs: f64, kind: WindowKind, detrend: Detrend) -> Self {
        let win = window(kind, len);
        let scale = 1.0 / (fs * win.iter().map(|w| w * w).sum::<f64>());
        Self {
            fft: FftPlanner::new().plan_fft_forward(len),
            win,
            scale,
            detrend,
            buf: vec![Complex64::default(); len],
            seg: vec![0.0; len],
        }
    }

    fn bins(&self) -> usize {
        self.win.len() / 2 + 1
    }

    /// Adds the one-sided periodogram of `x` into `acc`.
    fn accumulate(&mut self, x: &[f64], acc: &mut [f64]) {
        let n = self.win.len();
        self.seg.copy_from_slice(x);
        detrend(&mut self.seg, self.detrend);
        for (b, (s, w)) in self.buf.iter_mut().zip(self.seg.iter().zip(&self.win)) {
            *b = Complex64::new(s * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        for (i, a) in acc.iter_mut().enumerate() {
            let mut p = self.buf[i].norm_sqr() * self.scale;
            if i != 0 && !(n % 2 == 0 && i == n / 2) {
                p *= 2.0;
            }
            *a += p;
        }
    }
}

/// Welch's averaged periodogram with density scaling, so that the summed
/// spectrum times `df` approximates the variance of a stationary input.
pub fn welch_psd(series: &UniformSeries, params: &WelchParams) -> Result<Spectrum, DspError> {
    series.ensure_no_gaps().map_err(|e| DspError::Parameter(e.to_string()))?;
    let x = series.values();
    let n = x.len();
    let seg = params.segment_len.unwrap_or(n.min(256));
    if seg == 0 || seg > n {
        return Err(DspError::Parameter(format!("segment length {seg} invalid for a {n}-sample series")));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(DspError::Parameter(format!("overlap {} outside [0, 1)", params.overlap)));
    }
    let noverlap = ((params.overlap * seg as f64).floor() as usize).min(seg - 1);
    let step = seg - noverlap;
    let fs = series.rate_hz();
    let mut pg = Periodogram::new(seg, fs, params.window, params.detrend);
    let mut acc = vec![0.0; pg.bins()];
    let count = (n - seg) / step + 1;
    for s in 0..count {
        pg.accumulate(&x[s * step..s * step + seg], &mut acc);
    }
    let df = fs / seg as f64;
    Ok(Spectrum {
        freqs_hz: (0..acc.len()).map(|i| i as f64 * df).collect(),
        psd: acc.into_iter().map(|p| p / count as f64).collect(),
        df,
        segment_len: seg,
        overlap_samples: noverlap,
        segments: count,
        window: params.window,
    })
}

/// Frequency below which `fraction` of the total power lies, interpolated
/// linearly inside the bin where the cumulative sum crosses it.
pub fn percentile_frequency(spec: &Spectrum, fraction: f64) -> Result<f64, DspError> {
    let total: f64 = spec.psd.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(DspError::Degenerate("spectrum has no power".into()));
    }
    let target = fraction * total;
    let mut cum = 0.0;
    for (i, &p) in spec.psd.iter().enumerate() {
        let next = cum + p;
        if next >= target && p > 0.0 {
            if i == 0 {
                return Ok(spec.freqs_hz[0]);
            }
            return Ok(spec.freqs_hz[i - 1] + (target - cum) / p * (spec.freqs_hz[i] - spec.freqs_hz[i - 1]));
        }
        cum = next;
    }
    Ok(*spec.freqs_hz.last().expect("non-empty spectrum"))
}

pub fn median_frequency(spec: &Spectrum) -> Result<f64, DspError> {
    percentile_frequency(spec, 0.5)
}

/// Median frequency per sliding window (Hann, linear detrend), stamped at
/// window centres. Windows without power yield NaN.
pub fn stft_median_frequency(series: &UniformSeries, win_s: f64, overlap: f64) -> Result<UniformSeries, DspError> {
    series.ensure_no_gaps().map_err(|e| DspError::Parameter(e.to_string()))?;
    let fs = series.rate_hz();
    let w = super::window_samples(win_s, fs);
    if w < 4 {
        return Err(DspError::Parameter(format!("window {win_s} s is shorter than 4 samples")));
    }
    let x = series.values();
    if w > x.len() {
        return Err(DspError::Parameter(format!("window of {w} samples exceeds the {}-sample series", x.len())));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(DspError::Parameter(format!("overlap {overlap} outside [0, 1)")));
    }
    let step = (w - ((overlap * w as f64).round() as usize).min(w - 1)).max(1);
    let mut pg = Periodogram::new(w, fs, WindowKind::Hann, Detrend::Linear);
    let df = fs / w as f64;
    let freqs: Vec<f64> = (0..pg.bins()).map(|i| i as f64 * df).collect();
    let count = (x.len() - w) / step + 1;
    let mut out = Vec::with_capacity(count);
    let mut acc = vec![0.0; pg.bins()];
    for s in 0..count {
        acc.iter_mut().for_each(|a| *a = 0.0);
        pg.accumulate(&x[s * step..s * step + w], &mut acc);
        let spec = Spectrum {
            freqs_hz: freqs.clone(),
            psd: acc.clone(),
            df,
            segment_len: w,
            overlap_samples: 0,
            segments: 1,
            window: WindowKind::Hann,
        };
        out.push(median_frequency(&spec).unwrap_or(f64::NAN));
    }
    let t0 = series.t0_s() + (w as f64 - 1.0) / (2.0 * fs);
    UniformSeries::new(out, fs / step as f64, t0).map_err(|e| DspError::Parameter(e.to_string()))
}

/// `(μ0, μ1, μ2)` with `μn = Σ fⁿ·psd·df` over the given spectrum.
pub fn spectral_moments(spec: &Spectrum) -> (f64, f64, f64) {
    spec.freqs_hz.iter().zip(&spec.psd).fold((0.0, 0.0, 0.0), |(m0, m1, m2), (&f, &p)| {
        let e = p * spec.df;
        (m0 + e, m1 + f * e, m2 + f * f * e)
    })
}

/// `sqrt(1 - μ1² / (μ0 μ2))`; 0 for a pure tone.
pub fn frequency_dispersion(spec: &Spectrum) -> Result<f64, DspError> {
    let (m0, m1, m2) = spectral_moments(spec);
    if !(m0 > 0.0 && m2 > 0.0) {
        return Err(DspError::Degenerate("spectral moments vanish".into()));
    }
    Ok((1.0 - m1 * m1 / (m0 * m2)).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, n: usize) -> UniformSeries {
        UniformSeries::new((0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect(), fs, 0.0).unwrap()
    }

    #[test]
    fn zero_input_zero_spectrum() {
        let z = UniformSeries::new(vec![0.0; 1000], 100.0, 0.0).unwrap();
        let s = welch_psd(&z, &WelchParams::default()).unwrap();
        assert!(s.psd.iter().all(|&p| p == 0.0));
        assert!(matches!(median_frequency(&s), Err(DspError::Degenerate(_))));
        assert_eq!(spectral_moments(&s), (0.0, 0.0, 0.0));
    }

    #[test]
    fn white_noise_parseval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..6000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = welch_psd(&UniformSeries::new(x, 100.0, 0.0).unwrap(), &WelchParams::default()).unwrap();
        assert_eq!(s.segment_len, 256);
        let p = s.total_power();
        assert!((0.9..=1.1).contains(&p), "{p}");
    }

    #[test]
    fn tone_peak_and_median() {
        let s = welch_psd(&tone(10.0, 100.0, 2000), &WelchParams::default()).unwrap();
        assert!((s.peak_frequency().unwrap() - 10.0).abs() <= s.df);
        let s = welch_psd(&tone(100.0, 1000.0, 5000), &WelchParams::default()).unwrap();
        assert!((median_frequency(&s).unwrap() - 100.0).abs() <= s.df);
    }

    #[test]
    fn two_tones_bracket_median() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..5000).map(|k| {
            let t = k as f64 / fs;
            (2.0 * PI * 50.0 * t).sin() + (2.0 * PI * 150.0 * t).sin()
        }).collect();
        let s = welch_psd(&UniformSeries::new(x, fs, 0.0).unwrap(), &WelchParams::default()).unwrap();
        let m = median_frequency(&s).unwrap();
        assert!((50.0..=150.0).contains(&m), "{m}");
    }

    #[test]
    fn segment_longer_than_series_rejected() {
        let p = WelchParams { segment_len: Some(300), ..WelchParams::default() };
        assert!(matches!(welch_psd(&tone(1.0, 100.0, 200), &p), Err(DspError::Parameter(_))));
    }

    #[test]
    fn stft_tracks() {
        let fs = 1000.0;
        let flat = stft_median_frequency(&tone(100.0, fs, 10_000), 0.5, 0.5).unwrap();
        assert!((flat.rate_hz() - 4.0).abs() < 1e-12);
        assert!((flat.t0_s() - 0.2495).abs() < 1e-12);
        assert!(flat.values().iter().all(|m| (m - 100.0).abs() <= 2.0));

        // Linear chirp 50 -> 150 Hz over 20 s.
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|k| {
            let t = k as f64 / fs;
            (2.0 * PI * (50.0 * t + 2.5 * t * t)).sin()
        }).collect();
        let track = stft_median_frequency(&UniformSeries::new(x, fs, 0.0).unwrap(), 1.0, 0.5).unwrap();
        assert!(track.values().windows(2).all(|w| w[1] > w[0]));

        assert!(stft_median_frequency(&tone(1.0, 100.0, 50), 1.0, 0.5).is_err());
    }

    #[test]
    fn flat_spectrum_moments() {
        let (p, df, bins) = (2.0, 0.01, 1000);
        let s = Spectrum {
            freqs_hz: (0..bins).map(|i| (i as f64 + 0.5) * df).collect(),
            psd: vec![p; bins],
            df,
            segment_len: 0,
            overlap_samples: 0,
            segments: 1,
            window: WindowKind::Rectangular,
        };
        let b = bins as f64 * df;
        let (m0, m1, m2) = spectral_moments(&s);
        assert!((m0 - p * b).abs() < 1e-9);
        assert!((m1 / (p * b * b / 2.0) - 1.0).abs() < 1e-9);
        assert!((m2 / (p * b.powi(3) / 3.0) - 1.0).abs() < 1e-4);
        assert!((frequency_dispersion(&s).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn single_tone_has_near_zero_dispersion() {
        let s = welch_psd(&tone(10.0, 100.0, 6000), &WelchParams { segment_len: Some(6000), ..Default::default() }).unwrap();
        assert!(frequency_dispersion(&s).unwrap() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn linear_detrend_ignores_offset(x in prop::collection::vec(-10.0f64..10.0, 64..400), c in -1e3f64..1e3) {
            let a = UniformSeries::new(x.clone(), 50.0, 0.0).unwrap();
            let b = a.with_values(x.iter().map(|v| v + c).collect());
            let p = WelchParams { segment_len: Some(64), ..Default::default() };
            let (sa, sb) = (welch_psd(&a, &p).unwrap(), welch_psd(&b, &p).unwrap());
            let scale = sa.psd.iter().cloned().fold(1e-12, f64::max);
            for (u, v) in sa.psd.iter().zip(&sb.psd) {
                prop_assert!((u - v).abs() <= 1e-9 * scale.max(c * c));
            }
        }

        #[test]
        fn psd_non_negative(x in prop::collection::vec(-10.0f64..10.0, 16..300)) {
            let s = welch_psd(&UniformSeries::new(x, 10.0, 0.0).unwrap(), &WelchParams::default()).unwrap();
            prop_assert!(s.psd.iter().all(|&p| p >= 0.0));
        }
    }
}
