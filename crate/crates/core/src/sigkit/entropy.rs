use std::f64::consts::{E, PI};

use super::{SigError, TimeSeries};

/// Standard deviations below this are clamped before taking the log.
pub const DE_SIGMA_FLOOR: f64 = 1e-8;

/// Differential entropy of a Gaussian with standard deviation `sigma`, in nats.
pub fn gaussian_de(sigma: f64) -> f64 {
    0.5 * (2.0 * PI * E * sigma * sigma).ln()
}

/// Per-window DE values plus how many windows hit the variance floor.
#[derive(Debug, Clone, PartialEq)]
pub struct DeWindows {
    pub values: Vec<f64>,
    pub clamped: usize,
}

impl DeWindows {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Gaussian DE of each non-overlapping `window_s` window.
pub fn diff_entropy(x: &TimeSeries, window_s: f64) -> Result<DeWindows, SigError> {
    if !(window_s > 0.0) {
        return Err(SigError::InvalidParameter(format!("window {window_s} s")));
    }
    let w = (window_s * x.fs()).round() as usize;
    if w < 2 || x.len() < w {
        return Err(SigError::InsufficientData {
            needed: w.max(2),
            got: x.len(),
        });
    }
    let mut clamped = 0;
    let values = x
        .samples()
        .chunks_exact(w)
        .map(|win| {
            let mean = win.iter().sum::<f64>() / w as f64;
            let var = win.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let mut sigma = var.sqrt();
            if sigma < DE_SIGMA_FLOOR {
                clamped += 1;
                sigma = DE_SIGMA_FLOOR;
            }
            gaussian_de(sigma)
        })
        .collect();
    if clamped > 0 {
        log::warn!(
            "channel {}: {clamped} zero-variance DE window(s) clamped to sigma = {DE_SIGMA_FLOOR:e}",
            x.channel_id()
        );
    }
    Ok(DeWindows { values, clamped })
}
