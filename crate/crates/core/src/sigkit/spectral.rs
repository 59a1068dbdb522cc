use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{BandSpec, SigError, TimeSeries};

/// Welch segment length in seconds (256 samples at 128 Hz).
pub const WELCH_SEGMENT_S: f64 = 2.0;

/// One-sided Welch power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct WelchDensity {
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
}

impl WelchDensity {
    /// Integral of the piecewise-linear density over `[lo, hi]` Hz.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let (f, p) = (&self.freqs, &self.density);
        let mut total = 0.0;
        for k in 0..f.len().saturating_sub(1) {
            let (f0, f1) = (f[k], f[k + 1]);
            let a = lo.max(f0);
            let b = hi.min(f1);
            if b <= a {
                continue;
            }
            let interp = |x: f64| p[k] + (p[k + 1] - p[k]) * (x - f0) / (f1 - f0);
            total += 0.5 * (interp(a) + interp(b)) * (b - a);
        }
        total
    }
}

fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with 2 s periodic Hann segments, 50 % overlap, per-segment
/// mean removal and density scaling.
pub fn welch_density(x: &TimeSeries) -> Result<WelchDensity, SigError> {
    let fs = x.fs();
    let nseg = (WELCH_SEGMENT_S * fs).round() as usize;
    if nseg < 2 {
        return Err(SigError::InvalidParameter(format!("fs = {fs} too low for Welch")));
    }
    if x.len() < nseg {
        return Err(SigError::InsufficientData {
            needed: nseg,
            got: x.len(),
        });
    }
    let step = nseg - nseg / 2;
    let count = (x.len() - nseg) / step + 1;
    let window = periodic_hann(nseg);
    let scale = 1.0 / (fs * window.iter().map(|w| w * w).sum::<f64>());
    let fft = FftPlanner::new().plan_fft_forward(nseg);
    let nbins = nseg / 2 + 1;
    let mut acc = vec![0.0; nbins];
    let mut buf = vec![Complex::new(0.0, 0.0); nseg];

    for s in 0..count {
        let seg = &x.samples()[s * step..s * step + nseg];
        let mean = seg.iter().sum::<f64>() / nseg as f64;
        for ((b, v), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let nyquist_bin = if nseg % 2 == 0 { Some(nseg / 2) } else { None };
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
            one_sided * scale * v / count as f64
        })
        .collect();
    let freqs = (0..nbins).map(|k| k as f64 * fs / nseg as f64).collect();
    Ok(WelchDensity { freqs, density })
}

/// Welch band power for each of `bands`, in input order.
pub fn welch_psd(x: &TimeSeries, bands: &[BandSpec]) -> Result<Vec<f64>, SigError> {
    for b in bands {
        b.validate(x.fs())?;
    }
    let d = welch_density(x)?;
    Ok(bands.iter().map(|b| d.band_power(b.lo_hz, b.hi_hz)).collect())
}
