#![allow(dead_code)]

use mmq_core::objective::CmiEstimator;
use mmq_core::seed;
use mmq_core::tensor_ad::Tensor;
use mmq_core::trainer::AdamConfig;
use rand::Rng as _;
use rand_distr::StandardNormal;

pub const CMI_WIDTH: usize = 4;
pub const CMI_SAMPLES: usize = 10_000;

/// Synthetic joints with known conditional MI between `y` and `F^I`
/// given `F^C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Joint {
    /// `F^I` is noise independent of `(y, F^C)`; CMI = 0.
    IndependentNoise,
    /// `F^I` encodes `y` exactly, `F^C` is noise; CMI = ln 2.
    LabelCode,
    /// `F^I` copies an informative `F^C`; CMI = 0.
    Copy,
}

impl Joint {
    pub fn truth(self) -> f64 {
        match self {
            Joint::LabelCode => std::f64::consts::LN_2,
            _ => 0.0,
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Joint::LabelCode => 0.05,
            _ => 0.02,
        }
    }

    pub fn sample(self, seed_value: u64, n: usize) -> (Tensor, Tensor, Vec<usize>) {
        let mut rng = seed::rng(seed_value, "joint", self as u64);
        let d = CMI_WIDTH;
        let (mut fc, mut fi, mut y) = (Vec::with_capacity(n * d), Vec::with_capacity(n * d), Vec::with_capacity(n));
        for _ in 0..n {
            let label = rng.random_range(0..2usize);
            let sign = 2.0 * label as f64 - 1.0;
            let mut noise = || rng.sample::<f64, _>(StandardNormal);
            let c: Vec<f64> = match self {
                Joint::LabelCode => (0..d).map(|_| noise()).collect(),
                _ => (0..d).map(|j| noise() + if j == 0 { sign } else { 0.0 }).collect(),
            };
            let i: Vec<f64> = match self {
                Joint::IndependentNoise => (0..d).map(|_| noise()).collect(),
                Joint::LabelCode => (0..d).map(|j| if j == 0 { sign } else { 0.0 }).collect(),
                Joint::Copy => c.clone(),
            };
            fc.extend(c);
            fi.extend(i);
            y.push(label);
        }
        (
            Tensor::new(vec![n, d], fc).unwrap(),
            Tensor::new(vec![n, d], fi).unwrap(),
            y,
        )
    }
}

/// Trains the estimator full-batch on one draw and returns its estimate on
/// a fresh draw from the same joint.
pub fn calibrate(joint: Joint, seed_value: u64, steps: usize) -> f64 {
    let (fc, fi, y) = joint.sample(seed::derive(seed_value, "fit", 0), CMI_SAMPLES);
    let adam = AdamConfig { lr: 1e-2, ..AdamConfig::default() };
    let mut est = CmiEstimator::for_width(CMI_WIDTH, adam, seed_value);
    est.train(&fc, &fi, &y, steps).unwrap();
    let (fc, fi, y) = joint.sample(seed::derive(seed_value, "fresh", 0), CMI_SAMPLES);
    est.estimate_value(&fc, &fi, &y).unwrap()
}
