use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass { cutoff_hz: f64 },
    Highpass { cutoff_hz: f64 },
    Bandpass { low_hz: f64, high_hz: f64 },
}

impl FilterKind {
    pub fn cutoffs(&self) -> Vec<f64> {
        match *self {
            FilterKind::Lowpass { cutoff_hz } | FilterKind::Highpass { cutoff_hz } => vec![cutoff_hz],
            FilterKind::Bandpass { low_hz, high_hz } => vec![low_hz, high_hz],
        }
    }
}

/// A digital IIR filter as transfer-function polynomials (in powers of
/// `z^-1`, `a[0] = 1`) and as the equivalent cascade of biquads used for
/// actual filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct IirCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    /// `[b0, b1, b2, 1, a1, a2]` per section.
    pub sos: Vec<[f64; 6]>,
    pub poles: Vec<Complex64>,
    pub kind: FilterKind,
    /// Prototype order; a bandpass has twice as many poles.
    pub order: usize,
    pub fs_hz: f64,
}

impl IirCoefficients {
    /// Polynomial order of the digital filter (`a.len() - 1`).
    pub fn filter_order(&self) -> usize {
        self.a.len() - 1
    }

    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.norm() < 1.0)
    }

    /// Complex response at `f_hz`, evaluated from the section cascade.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.fs_hz;
        let zi = Complex64::from_polar(1.0, -w);
        let zi2 = zi * zi;
        self.sos.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            acc * (s[0] + s[1] * zi + s[2] * zi2) / (s[3] + s[4] * zi + s[5] * zi2)
        })
    }
}

/// Butterworth design by the bilinear transform of the analog prototype
/// with prewarped cutoffs.
pub fn butter_design(kind: FilterKind, order: usize, fs_hz: f64) -> Result<IirCoefficients, DspError> {
    if !(1..=8).contains(&order) {
        return Err(DspError::Design(format!("order {order} outside 1..=8")));
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(DspError::Design(format!("sampling rate {fs_hz} Hz must be positive")));
    }
    let nyq = fs_hz / 2.0;
    for c in kind.cutoffs() {
        if !(c.is_finite() && c > 0.0 && c < nyq) {
            return Err(DspError::Design(format!("cutoff {c} Hz must lie in (0, {nyq}) Hz")));
        }
    }
    if let FilterKind::Bandpass { low_hz, high_hz } = kind {
        if low_hz >= high_hz {
            return Err(DspError::Design(format!("band edges {low_hz} >= {high_hz} Hz")));
        }
    }

    let n = order as f64;
    let proto: Vec<Complex64> = (0..order)
        .map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
        .collect();
    let fs2 = 2.0 * fs_hz;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs_hz).tan();

    // Analog zeros (all at the origin or none), poles and gain.
    let (zeros_at_origin, poles, gain): (usize, Vec<Complex64>, f64) = match kind {
        FilterKind::Lowpass { cutoff_hz } => {
            let wo = warp(cutoff_hz);
            (0, proto.iter().map(|p| p * wo).collect(), wo.powi(order as i32))
        }
        FilterKind::Highpass { cutoff_hz } => {
            let wo = warp(cutoff_hz);
            let prod: Complex64 = proto.iter().map(|p| -p).product();
            (order, proto.iter().map(|p| wo / p).collect(), (Complex64::new(1.0, 0.0) / prod).re)
        }
        FilterKind::Bandpass { low_hz, high_hz } => {
            let (w1, w2) = (warp(low_hz), warp(high_hz));
            let bw = w2 - w1;
            let wo2 = w1 * w2;
            let mut poles = Vec::with_capacity(2 * order);
            for p in &proto {
                let pl = p * (bw / 2.0);
                let root = (pl * pl - wo2).sqrt();
                poles.push(pl + root);
                poles.push(pl - root);
            }
            (order, poles, bw.powi(order as i32))
        }
    };

    // Bilinear transform. Finite analog zeros map to +1, the zeros at
    // infinity to -1.
    let degree = poles.len();
    let zd: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let num: Complex64 = std::iter::repeat_n(Complex64::new(fs2, 0.0), zeros_at_origin).product();
    let den: Complex64 = poles.iter().map(|p| fs2 - p).product();
    let k = gain * (num / den).re;
    let mut zeros = Vec::with_capacity(degree);
    let infinite = degree - zeros_at_origin;
    // Interleave so each biquad gets one zero of each kind where possible.
    let (mut plus, mut minus) = (zeros_at_origin, infinite);
    while plus + minus > 0 {
        if plus > 0 {
            zeros.push(1.0);
            plus -= 1;
        }
        if minus > 0 {
            zeros.push(-1.0);
            minus -= 1;
        }
    }

    let b: Vec<f64> = poly_real(&zeros).into_iter().map(|c| c * k).collect();
    let a: Vec<f64> = poly(&zd).into_iter().map(|c| c.re).collect();
    let sos = to_sos(&zeros, &zd, k);
    let out = IirCoefficients { b, a, sos, poles: zd, kind, order, fs_hz };
    if !out.is_stable() {
        return Err(DspError::Design("designed filter is unstable".into()));
    }
    Ok(out)
}

fn poly(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        c.push(Complex64::new(0.0, 0.0));
        for i in (1..c.len()).rev() {
            let prev = c[i - 1];
            c[i] -= r * prev;
        }
    }
    c
}

fn poly_real(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        c.push(0.0);
        for i in (1..c.len()).rev() {
            c[i] -= r * c[i - 1];
        }
    }
    c
}

/// Groups poles into conjugate pairs (real poles two at a time) and hands
/// each group the next zeros in order. The gain goes to the first section.
fn to_sos(zeros: &[f64], poles: &[Complex64], k: f64) -> Vec<[f64; 6]> {
    const IMAG_EPS: f64 = 1e-12;
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for p in poles {
        if p.im > IMAG_EPS {
            groups.push(vec![*p, p.conj()]);
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    for pair in reals.chunks(2) {
        groups.push(pair.iter().map(|&r| Complex64::new(r, 0.0)).collect());
    }
    let mut zi = zeros.iter();
    let mut sos = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let zs: Vec<f64> = zi.by_ref().take(g.len()).copied().collect();
        let mut bz = poly_real(&zs);
        bz.resize(3, 0.0);
        let mut ap: Vec<f64> = poly(g).into_iter().map(|c| c.re).collect();
        ap.resize(3, 0.0);
        let gain = if i == 0 { k } else { 1.0 };
        sos.push([bz[0] * gain, bz[1] * gain, bz[2] * gain, ap[0], ap[1], ap[2]]);
    }
    sos
}
