//! Waveform synthesis for the synthetic modalities.
//!
//! Class 1 carries stronger EEG alpha and a faster pulse; class 0 carries
//! stronger EEG beta and more frequent skin-conductance responses. Every
//! class effect is multiplied by `class_sep`, so `class_sep = 0` yields
//! label-free data. RESP and TEMP never depend on the label.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::ModalityKind;
use crate::seed::Rng;

const LINE_NOISE_AMP: f64 = 0.3;

pub(crate) struct Context {
    pub fs: f64,
    pub n: usize,
    pub line_hz: f64,
    pub class_sep: f64,
    pub label: usize,
}

impl Context {
    fn t(&self, i: usize) -> f64 {
        i as f64 / self.fs
    }

    fn is_class1(&self) -> f64 {
        if self.label == 1 {
            1.0
        } else {
            0.0
        }
    }

    fn is_class0(&self) -> f64 {
        1.0 - self.is_class1()
    }
}

fn gauss(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn white(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * gauss(rng)).collect()
}

/// Unit-RMS noise with a 1/f power spectrum.
pub(crate) fn pink_noise(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(gauss(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k);
        *b = if f == 0 {
            Complex::new(0.0, 0.0)
        } else {
            *b / (f as f64).sqrt()
        };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    out.into_iter().map(|v| v / rms.max(1e-300)).collect()
}

fn add_line_noise(ctx: &Context, rng: &mut Rng, x: &mut [f64]) {
    let phase = rng.random_range(0.0..2.0 * PI);
    for (i, v) in x.iter_mut().enumerate() {
        *v += LINE_NOISE_AMP * (2.0 * PI * ctx.line_hz * ctx.t(i) + phase).sin();
    }
}

fn add_oscillation(ctx: &Context, rng: &mut Rng, x: &mut [f64], freq: f64, amp: f64) {
    let phase = rng.random_range(0.0..2.0 * PI);
    let mod_phase = rng.random_range(0.0..2.0 * PI);
    let mod_freq = rng.random_range(0.1..0.4);
    for (i, v) in x.iter_mut().enumerate() {
        let t = ctx.t(i);
        let envelope = 1.0 + 0.3 * (2.0 * PI * mod_freq * t + mod_phase).sin();
        *v += amp * envelope * (2.0 * PI * freq * t + phase).sin();
    }
}

fn eeg(ctx: &Context, rng: &mut Rng, channels: usize) -> Vec<Vec<f64>> {
    let c = ctx.class_sep;
    let alpha_gain = 0.35 * c * ctx.is_class1() + 0.3 * gauss(rng);
    let beta_gain = 0.35 * c * ctx.is_class0() + 0.3 * gauss(rng);
    let alpha_freq = rng.random_range(8.5..10.5);
    let beta_freq = rng.random_range(16.0..26.0);
    (0..channels)
        .map(|_| {
            let mut x = pink_noise(rng, ctx.n);
            let ga = alpha_gain + 0.1 * gauss(rng);
            let gb = beta_gain + 0.1 * gauss(rng);
            add_oscillation(ctx, rng, &mut x, alpha_freq, 1.0 * ga.exp());
            add_oscillation(ctx, rng, &mut x, beta_freq, 0.7 * gb.exp());
            add_line_noise(ctx, rng, &mut x);
            x.iter_mut().zip(white(rng, ctx.n, 0.2)).for_each(|(v, w)| *v += w);
            x
        })
        .collect()
}

fn ppg(ctx: &Context, rng: &mut Rng) -> Vec<f64> {
    let bpm = (65.0 + 10.0 * ctx.class_sep * ctx.is_class1() + 5.0 * gauss(rng)).clamp(40.0, 160.0);
    let period = 60.0 / bpm;
    let gain = (0.05 * gauss(rng)).exp();
    let duration = ctx.n as f64 / ctx.fs;
    let mut beats = Vec::new();
    let mut t = rng.random_range(0.0..period);
    while t < duration + period {
        beats.push(t);
        t += period * (1.0 + 0.03 * gauss(rng));
    }
    let (w_sys, w_dic) = (0.05, 0.08);
    let wander_phase = rng.random_range(0.0..2.0 * PI);
    let mut x: Vec<f64> = (0..ctx.n)
        .map(|i| {
            let t = ctx.t(i);
            let pulse: f64 = beats
                .iter()
                .filter(|&&b| (t - b).abs() < 1.0)
                .map(|&b| {
                    let d1 = (t - b) / w_sys;
                    let d2 = (t - b - 0.3 * period) / w_dic;
                    (-0.5 * d1 * d1).exp() + 0.4 * (-0.5 * d2 * d2).exp()
                })
                .sum();
            gain * pulse + 0.3 * (2.0 * PI * 0.2 * t + wander_phase).sin()
        })
        .collect();
    add_line_noise(ctx, rng, &mut x);
    x.iter_mut().zip(white(rng, ctx.n, 0.05)).for_each(|(v, w)| *v += w);
    x
}

fn gsr(ctx: &Context, rng: &mut Rng) -> Vec<f64> {
    let duration = ctx.n as f64 / ctx.fs;
    let rate = 0.3 + 0.35 * ctx.class_sep * ctx.is_class0();
    let count = Poisson::new(rate * duration).map_or(0.0, |p| p.sample(rng)) as usize;
    let events: Vec<(f64, f64)> = (0..count)
        .map(|_| (rng.random_range(0.0..duration), rng.random_range(0.5..1.5)))
        .collect();
    let tonic = rng.random_range(2.0..6.0);
    let drift = Normal::new(0.0, 0.05).expect("valid sd").sample(rng);
    let (rise, decay) = (0.05, 1.0);
    let mut x: Vec<f64> = (0..ctx.n)
        .map(|i| {
            let t = ctx.t(i);
            let phasic: f64 = events
                .iter()
                .filter(|(onset, _)| t >= *onset)
                .map(|(onset, amp)| {
                    let d = t - onset;
                    amp * (1.0 - (-d / rise).exp()) * (-d / decay).exp()
                })
                .sum();
            tonic + drift * t + phasic
        })
        .collect();
    add_line_noise(ctx, rng, &mut x);
    x.iter_mut().zip(white(rng, ctx.n, 0.02)).for_each(|(v, w)| *v += w);
    x
}

fn resp(ctx: &Context, rng: &mut Rng) -> Vec<f64> {
    let freq = rng.random_range(0.2..0.35);
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut x: Vec<f64> = (0..ctx.n)
        .map(|i| {
            let p = 2.0 * PI * freq * ctx.t(i) + phase;
            p.sin() + 0.25 * (2.0 * p).sin()
        })
        .collect();
    add_line_noise(ctx, rng, &mut x);
    x.iter_mut().zip(white(rng, ctx.n, 0.05)).for_each(|(v, w)| *v += w);
    x
}

fn temp(ctx: &Context, rng: &mut Rng) -> Vec<f64> {
    let base = rng.random_range(32.0..35.0);
    let slope = 0.01 * gauss(rng);
    let mut x: Vec<f64> = (0..ctx.n).map(|i| base + slope * ctx.t(i)).collect();
    add_line_noise(ctx, rng, &mut x);
    x.iter_mut().zip(white(rng, ctx.n, 0.01)).for_each(|(v, w)| *v += w);
    x
}

pub(crate) fn synthesize(kind: ModalityKind, channels: usize, ctx: &Context, rng: &mut Rng) -> Vec<Vec<f64>> {
    match kind {
        ModalityKind::Eeg => eeg(ctx, rng, channels),
        ModalityKind::Ppg => (0..channels).map(|_| ppg(ctx, rng)).collect(),
        ModalityKind::Gsr => (0..channels).map(|_| gsr(ctx, rng)).collect(),
        ModalityKind::Resp => (0..channels).map(|_| resp(ctx, rng)).collect(),
        ModalityKind::Temp => (0..channels).map(|_| temp(ctx, rng)).collect(),
    }
}

/// Tukey-tapered white-noise burst with peak envelope `amp`.
pub(crate) fn burst(rng: &mut Rng, len: usize, amp: f64) -> Vec<f64> {
    let taper = (len / 8).max(1);
    (0..len)
        .map(|i| {
            let edge = i.min(len - 1 - i);
            let env = if edge >= taper {
                1.0
            } else {
                0.5 - 0.5 * (PI * edge as f64 / taper as f64).cos()
            };
            amp * env * gauss(rng)
        })
        .collect()
}
