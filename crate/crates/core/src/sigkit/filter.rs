use std::f64::consts::{PI, SQRT_2};

use super::{SigError, TimeSeries};

/// Quality factor of the power-line notch.
pub const NOTCH_Q: f64 = 30.0;

/// Sampling rate after decimation.
pub const TARGET_FS: f64 = 128.0;

const HIGHPASS_ORDER: usize = 4;
const LOWPASS_ORDER: usize = 8;
const BAND_ORDER: usize = 4;

/// Second-order IIR section, normalised so that `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalised(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    /// Notch at `f0` Hz with quality factor `q`.
    pub fn notch(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (cw, alpha) = (w0.cos(), w0.sin() / (2.0 * q));
        Self::normalised([1.0, -2.0 * cw, 1.0], 1.0 + alpha, -2.0 * cw, 1.0 - alpha)
    }

    pub fn lowpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (cw, alpha) = (w0.cos(), w0.sin() / (2.0 * q));
        let b1 = 1.0 - cw;
        Self::normalised([b1 / 2.0, b1, b1 / 2.0], 1.0 + alpha, -2.0 * cw, 1.0 - alpha)
    }

    pub fn highpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (cw, alpha) = (w0.cos(), w0.sin() / (2.0 * q));
        let b1 = 1.0 + cw;
        Self::normalised([b1 / 2.0, -b1, b1 / 2.0], 1.0 + alpha, -2.0 * cw, 1.0 - alpha)
    }

    /// Direct form II transposed, zero initial state.
    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Magnitude response at `f` Hz.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let eval = |c0: f64, c1: f64, c2: f64| {
            let re = c0 + c1 * w.cos() + c2 * (2.0 * w).cos();
            let im = -(c1 * w.sin() + c2 * (2.0 * w).sin());
            re.hypot(im)
        };
        eval(self.b[0], self.b[1], self.b[2]) / eval(1.0, self.a[0], self.a[1])
    }
}

/// Series connection of biquads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cascade {
    pub sections: Vec<Biquad>,
}

impl Cascade {
    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            y = s.process(&y);
        }
        y
    }

    /// Forward-backward (zero-phase) filtering with odd reflection padding of
    /// `padlen` samples at each end.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut y = self.process(&ext);
        y.reverse();
        let mut y = self.process(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }

    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        self.sections.iter().map(|s| s.magnitude(f, fs)).product()
    }

    pub fn chain(mut self, other: Cascade) -> Cascade {
        self.sections.extend(other.sections);
        self
    }
}

fn butterworth_qs(order: usize) -> impl Iterator<Item = f64> {
    debug_assert!(order >= 2 && order % 2 == 0);
    (1..=order / 2).map(move |k| 1.0 / (2.0 * (PI * (2 * k - 1) as f64 / (2 * order) as f64).cos()))
}

/// Digital Butterworth lowpass of even `order`, -3 dB at `fc`.
pub fn butterworth_lowpass(order: usize, fc: f64, fs: f64) -> Cascade {
    Cascade {
        sections: butterworth_qs(order).map(|q| Biquad::lowpass(fc, fs, q)).collect(),
    }
}

/// Digital Butterworth highpass of even `order`, -3 dB at `fc`.
pub fn butterworth_highpass(order: usize, fc: f64, fs: f64) -> Cascade {
    Cascade {
        sections: butterworth_qs(order).map(|q| Biquad::highpass(fc, fs, q)).collect(),
    }
}

fn warp(f: f64, fs: f64) -> f64 {
    (PI * f / fs).tan()
}

fn unwarp(w: f64, fs: f64) -> f64 {
    w.atan() * fs / PI
}

/// Single-pass corner that puts the forward-backward response of an
/// order-`order` Butterworth at -3 dB exactly on `edge`.
fn zero_phase_corner(edge: f64, fs: f64, order: usize, highpass: bool) -> f64 {
    // per pass |H|^2 = 1/sqrt(2) at the edge, i.e. (w/wc)^(2N) = sqrt(2) - 1
    let ratio = (SQRT_2 - 1.0).powf(1.0 / (2 * order) as f64);
    let we = warp(edge, fs);
    unwarp(if highpass { we * ratio } else { we / ratio }, fs)
}

fn zero_phase_band(
    x: &TimeSeries,
    lo: f64,
    hi: f64,
    hp_order: usize,
    lp_order: usize,
) -> Result<TimeSeries, SigError> {
    let fs = x.fs();
    if !(0.0 < lo && lo < hi && hi < fs / 2.0) {
        return Err(SigError::InvalidParameter(format!(
            "band [{lo}, {hi}] Hz invalid at fs = {fs}"
        )));
    }
    let f_hp = zero_phase_corner(lo, fs, hp_order, true);
    let f_lp = zero_phase_corner(hi, fs, lp_order, false);
    if f_lp >= fs / 2.0 {
        return Err(SigError::InvalidParameter(format!(
            "upper edge {hi} Hz too close to Nyquist at fs = {fs}"
        )));
    }
    let cascade = butterworth_highpass(hp_order, f_hp, fs).chain(butterworth_lowpass(lp_order, f_lp, fs));
    let padlen = (3.0 * fs / lo).ceil() as usize;
    Ok(x.with_samples(cascade.filtfilt(x.samples(), padlen)))
}

/// Removes a narrow band around `f0` with a causal Q=30 biquad notch.
pub fn notch_filter(x: &TimeSeries, f0: f64) -> Result<TimeSeries, SigError> {
    let fs = x.fs();
    if !(f0 > 0.0 && f0 < fs / 2.0) {
        return Err(SigError::InvalidParameter(format!(
            "notch frequency {f0} Hz must lie in (0, {}) Hz",
            fs / 2.0
        )));
    }
    Ok(x.with_samples(Biquad::notch(f0, fs, NOTCH_Q).process(x.samples())))
}

/// Zero-phase 4–45 Hz Butterworth bandpass (order-4 highpass side,
/// order-8 lowpass side), -3 dB at both edges.
pub fn bandpass_4_45(x: &TimeSeries) -> Result<TimeSeries, SigError> {
    if x.fs() < 100.0 {
        return Err(SigError::InvalidParameter(format!(
            "bandpass needs fs >= 100 Hz, got {}",
            x.fs()
        )));
    }
    zero_phase_band(x, 4.0, 45.0, HIGHPASS_ORDER, LOWPASS_ORDER)
}

/// Zero-phase order-4 Butterworth band isolation used for per-band DE.
pub fn band_filter(x: &TimeSeries, lo: f64, hi: f64) -> Result<TimeSeries, SigError> {
    zero_phase_band(x, lo, hi, BAND_ORDER, BAND_ORDER)
}

/// Integer-ratio decimation to 128 Hz. The input must already be
/// bandlimited below 64 Hz.
pub fn downsample_128(x: &TimeSeries) -> Result<TimeSeries, SigError> {
    let ratio = x.fs() / TARGET_FS;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 {
        return Err(SigError::InvalidParameter(format!(
            "fs = {} Hz is not an integer multiple of 128 Hz",
            x.fs()
        )));
    }
    let k = k as usize;
    if k == 1 {
        return Ok(x.clone());
    }
    let n_out = x.len() / k;
    let samples = x.samples().iter().step_by(k).take(n_out).copied().collect();
    TimeSeries::new(samples, TARGET_FS, x.channel_id())
}
