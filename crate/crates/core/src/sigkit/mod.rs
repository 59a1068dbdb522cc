//! Deterministic 64-bit signal processing: line-noise notch, zero-phase
//! Butterworth band filtering, integer decimation, Welch band power and
//! Gaussian differential entropy.
//!
//! Every function here is pure; the same input always produces bit-identical
//! output.

mod entropy;
mod features;
mod filter;
mod spectral;

pub use entropy::{diff_entropy, gaussian_de, DeWindows, DE_SIGMA_FLOOR};
pub use features::{channel_features, extract_modality_features, preprocess, FEATURES_PER_CHANNEL};
pub use filter::{
    band_filter, bandpass_4_45, butterworth_highpass, butterworth_lowpass, downsample_128, notch_filter,
    Biquad, Cascade, NOTCH_Q, TARGET_FS,
};
pub use spectral::{welch_density, welch_psd, WelchDensity, WELCH_SEGMENT_S};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: need {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// One channel of uniformly sampled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    fs: f64,
    channel_id: String,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, fs: f64, channel_id: impl Into<String>) -> Result<Self, SigError> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(SigError::InvalidParameter(format!("sampling rate {fs} must be positive")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SigError::InvalidParameter(format!("non-finite sample at index {i}")));
        }
        Ok(TimeSeries {
            samples,
            fs,
            channel_id: channel_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same metadata, new samples (assumed finite).
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> TimeSeries {
        TimeSeries {
            samples,
            fs: self.fs,
            channel_id: self.channel_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Theta,
    Alpha,
    SlowAlpha,
    Beta,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub band: Band,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandSpec {
    pub const fn new(band: Band, lo_hz: f64, hi_hz: f64) -> Self {
        BandSpec { band, lo_hz, hi_hz }
    }

    /// θ 4–7, α 8–10, slow α 8–13, β 14–29, γ 30–45 Hz.
    pub const CANONICAL: [BandSpec; 5] = [
        BandSpec::new(Band::Theta, 4.0, 7.0),
        BandSpec::new(Band::Alpha, 8.0, 10.0),
        BandSpec::new(Band::SlowAlpha, 8.0, 13.0),
        BandSpec::new(Band::Beta, 14.0, 29.0),
        BandSpec::new(Band::Gamma, 30.0, 45.0),
    ];

    pub fn validate(&self, fs: f64) -> Result<(), SigError> {
        if 0.0 < self.lo_hz && self.lo_hz < self.hi_hz && self.hi_hz < fs / 2.0 {
            Ok(())
        } else {
            Err(SigError::InvalidParameter(format!(
                "band {:?} [{}, {}] Hz invalid at fs = {fs}",
                self.band, self.lo_hz, self.hi_hz
            )))
        }
    }
}

/// Per-channel band features: mean DE and Welch power for each band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFeatures {
    pub de: [f64; 5],
    pub psd: [f64; 5],
}

impl BandFeatures {
    /// `[DE_θ..DE_γ, PSD_θ..PSD_γ]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.de.iter().chain(&self.psd).copied().collect()
    }
}
