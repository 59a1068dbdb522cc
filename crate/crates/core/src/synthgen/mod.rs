//! Seeded synthetic multi-modal recordings with controllable class
//! separation, modality dropout and label-independent burst artifacts.
//!
//! Every record is generated from its own counter-based seed stream, so
//! records can be produced in any order (or in parallel) with identical
//! results.

mod io;
mod scaler;
mod signals;

pub use io::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use scaler::FeatureScaler;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};
use crate::seed;
use crate::sigkit::{extract_modality_features, preprocess, SigError, TimeSeries, FEATURES_PER_CHANNEL, TARGET_FS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed dataset: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Eeg,
    Gsr,
    Ppg,
    Resp,
    Temp,
}

impl ModalityKind {
    pub fn name(self) -> &'static str {
        match self {
            ModalityKind::Eeg => "EEG",
            ModalityKind::Gsr => "GSR",
            ModalityKind::Ppg => "PPG",
            ModalityKind::Resp => "RESP",
            ModalityKind::Temp => "TEMP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub kind: ModalityKind,
    pub channels: usize,
}

impl ModalitySpec {
    pub fn feature_len(&self) -> usize {
        self.channels * FEATURES_PER_CHANNEL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_samples: usize,
    pub modalities: Vec<ModalitySpec>,
    pub duration_s: f64,
    pub fs_raw: f64,
    pub missing_rate: f64,
    pub artifact_prob: f64,
    /// Burst amplitude as a multiple of the channel RMS.
    pub artifact_amp: f64,
    pub class_sep: f64,
    pub line_hz: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        let single = |kind| ModalitySpec { kind, channels: 1 };
        GenConfig {
            n_samples: 2000,
            modalities: vec![
                ModalitySpec {
                    kind: ModalityKind::Eeg,
                    channels: 4,
                },
                single(ModalityKind::Gsr),
                single(ModalityKind::Ppg),
                single(ModalityKind::Resp),
                single(ModalityKind::Temp),
            ],
            duration_s: 8.0,
            fs_raw: 512.0,
            missing_rate: 0.0,
            artifact_prob: 0.0,
            artifact_amp: 5.0,
            class_sep: 1.5,
            line_hz: 50.0,
            seed: 0,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), GenError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(GenError::InvalidParameter(format!("{name} = {v} must lie in [0, 1]")))
    }
}

impl GenConfig {
    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn samples_per_channel(&self) -> usize {
        (self.duration_s * self.fs_raw).round() as usize
    }

    /// Feature vector length of each modality.
    pub fn feature_lens(&self) -> Vec<usize> {
        self.modalities.iter().map(ModalitySpec::feature_len).collect()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::InvalidParameter(msg));
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required".into());
        }
        if let Some(m) = self.modalities.iter().find(|m| m.channels == 0) {
            return bad(format!("modality {} has no channels", m.kind.name()));
        }
        if !(self.duration_s.is_finite() && self.duration_s * TARGET_FS >= 256.0) {
            return bad(format!("duration_s = {} gives fewer than 256 samples at 128 Hz", self.duration_s));
        }
        let ratio = self.fs_raw / TARGET_FS;
        if !(ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return bad(format!("fs_raw = {} must be an integer multiple of 128 Hz", self.fs_raw));
        }
        if !(self.line_hz > 0.0 && self.line_hz < self.fs_raw / 2.0) {
            return bad(format!("line_hz = {} must lie below Nyquist", self.line_hz));
        }
        check_unit("missing_rate", self.missing_rate)?;
        check_unit("artifact_prob", self.artifact_prob)?;
        if !(self.artifact_amp > 0.0 && self.artifact_amp.is_finite()) {
            return bad(format!("artifact_amp = {} must be positive", self.artifact_amp));
        }
        if !(self.class_sep >= 0.0 && self.class_sep.is_finite()) {
            return bad(format!("class_sep = {} must be non-negative", self.class_sep));
        }
        Ok(())
    }
}

/// Location of an injected burst artifact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub modality: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    /// One list of channels per modality.
    pub x: Vec<Vec<TimeSeries>>,
    pub a: Vec<bool>,
    /// Class index in `{0, 1}`.
    pub y: usize,
    pub burst: Option<Burst>,
}

impl SignalRecord {
    pub fn one_hot(&self) -> [f64; 2] {
        let mut v = [0.0; 2];
        v[self.y] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenConfig,
    pub records: Vec<SignalRecord>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        split_indices(&self.splits, split)
    }
}

pub fn split_indices(splits: &[Split], which: Split) -> Vec<usize> {
    (0..splits.len()).filter(|&i| splits[i] == which).collect()
}

/// Per-record modality features plus availability and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub a: Vec<bool>,
    pub y: usize,
}

impl FeatureSet {
    /// Copy with availability `a`; dropped slots become zero vectors.
    pub fn with_mask(&self, a: &[bool]) -> FeatureSet {
        let features = self
            .features
            .iter()
            .zip(a)
            .map(|(f, &keep)| if keep { f.clone() } else { vec![0.0; f.len()] })
            .collect();
        FeatureSet {
            features,
            a: a.to_vec(),
            y: self.y,
        }
    }
}

/// Bernoulli(`rate`) drop per modality; an all-missing draw keeps one
/// uniformly chosen modality.
pub fn draw_availability(rng: &mut seed::Rng, m: usize, rate: f64) -> Vec<bool> {
    let mut a: Vec<bool> = (0..m).map(|_| rng.random::<f64>() >= rate).collect();
    if !a.iter().any(|&b| b) {
        a[rng.random_range(0..m)] = true;
    }
    a
}

/// Availability vector of record `index` for a mask stream.
pub fn record_mask(seed_value: u64, index: usize, m: usize, rate: f64) -> Vec<bool> {
    draw_availability(&mut seed::rng(seed_value, seed::MASK, index as u64), m, rate)
}

fn synthesize_record(cfg: &GenConfig, index: usize) -> Result<SignalRecord, GenError> {
    let mut rng = seed::rng(cfg.seed, seed::GEN, index as u64);
    let y = index % 2;
    let ctx = signals::Context {
        fs: cfg.fs_raw,
        n: cfg.samples_per_channel(),
        line_hz: cfg.line_hz,
        class_sep: cfg.class_sep,
        label: y,
    };
    let mut x = Vec::with_capacity(cfg.modalities.len());
    for spec in &cfg.modalities {
        let chans = signals::synthesize(spec.kind, spec.channels, &ctx, &mut rng);
        let series = chans
            .into_iter()
            .enumerate()
            .map(|(c, s)| TimeSeries::new(s, cfg.fs_raw, format!("{}{c}", spec.kind.name())))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GenError::InvalidParameter(e.to_string()))?;
        x.push(series);
    }
    Ok(SignalRecord {
        x,
        a: vec![true; cfg.modalities.len()],
        y,
        burst: None,
    })
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn interfere_record(record: &mut SignalRecord, index: usize, prob: f64, amp_factor: f64, seed_value: u64) {
    let mut rng = seed::rng(seed_value, seed::ARTIFACT, index as u64);
    if rng.random::<f64>() >= prob {
        return;
    }
    let available: Vec<usize> = (0..record.a.len()).filter(|&m| record.a[m]).collect();
    let Some(&modality) = available.get(rng.random_range(0..available.len().max(1))) else {
        return;
    };
    let channels = &mut record.x[modality];
    let (fs, n) = (channels[0].fs(), channels[0].len());
    let len = ((rng.random_range(0.5..=1.5) * fs).round() as usize).min(n);
    let start = rng.random_range(0..=n - len);
    for ch in channels.iter_mut() {
        let amp = amp_factor * rms(ch.samples());
        let noise = signals::burst(&mut rng, len, amp);
        let mut samples = ch.samples().to_vec();
        samples[start..start + len].iter_mut().zip(noise).for_each(|(s, b)| *s += b);
        *ch = ch.with_samples(samples);
    }
    record.burst = Some(Burst { modality, start, len });
}

/// Full record `index` of the dataset described by `cfg`: signals, the
/// `missing_rate` mask and any burst artifact.
pub fn generate_record(cfg: &GenConfig, index: usize) -> Result<SignalRecord, GenError> {
    let mut record = synthesize_record(cfg, index)?;
    record.a = record_mask(cfg.seed, index, cfg.modalities.len(), cfg.missing_rate);
    if cfg.artifact_prob > 0.0 {
        interfere_record(&mut record, index, cfg.artifact_prob, cfg.artifact_amp, cfg.seed);
    }
    Ok(record)
}

/// Stratified 70/15/15 train/val/test split over labels.
pub fn stratified_splits(labels: &[usize], seed_value: u64) -> Vec<Split> {
    use rand::seq::SliceRandom;
    let mut splits = vec![Split::Train; labels.len()];
    for class in 0..2 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut seed::rng(seed_value, seed::SPLIT, class as u64));
        let n = idx.len();
        let n_train = (0.7 * n as f64).round() as usize;
        let n_val = (0.15 * n as f64).round() as usize;
        for (rank, &i) in idx.iter().enumerate() {
            splits[i] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    splits
}

pub fn generate_dataset_with(cfg: &GenConfig, exec: Exec) -> Result<Dataset, GenError> {
    cfg.validate()?;
    let records = par::try_map_range(exec, cfg.n_samples, |i| generate_record(cfg, i))?;
    let labels: Vec<usize> = records.iter().map(|r| r.y).collect();
    Ok(Dataset {
        config: cfg.clone(),
        splits: stratified_splits(&labels, cfg.seed),
        records,
    })
}

pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset, GenError> {
    generate_dataset_with(cfg, Exec::default())
}

/// Replaces every availability vector with a fresh draw at `rate`.
pub fn apply_missingness(mut ds: Dataset, rate: f64, seed_value: u64) -> Result<Dataset, GenError> {
    check_unit("rate", rate)?;
    let m = ds.config.num_modalities();
    for (i, r) in ds.records.iter_mut().enumerate() {
        r.a = record_mask(seed_value, i, m, rate);
    }
    Ok(ds)
}

/// Adds a burst to a random available modality of each record with
/// probability `prob`.
pub fn inject_interference(mut ds: Dataset, prob: f64, amp_factor: f64, seed_value: u64) -> Result<Dataset, GenError> {
    check_unit("prob", prob)?;
    if !(amp_factor > 0.0 && amp_factor.is_finite()) {
        return Err(GenError::InvalidParameter(format!("amp_factor = {amp_factor} must be positive")));
    }
    for (i, r) in ds.records.iter_mut().enumerate() {
        interfere_record(r, i, prob, amp_factor, seed_value);
    }
    Ok(ds)
}

/// Features of one record; missing modalities are zero placeholders and are
/// never processed.
pub fn record_features(record: &SignalRecord, line_hz: f64) -> Result<FeatureSet, SigError> {
    let features = record
        .x
        .iter()
        .zip(&record.a)
        .map(|(chans, &avail)| {
            if !avail {
                return Ok(vec![0.0; chans.len() * FEATURES_PER_CHANNEL]);
            }
            let pre = chans.iter().map(|c| preprocess(c, line_hz)).collect::<Result<Vec<_>, _>>()?;
            extract_modality_features(&pre)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureSet {
        features,
        a: record.a.clone(),
        y: record.y,
    })
}

pub fn featurize_with(ds: &Dataset, exec: Exec) -> Result<Vec<FeatureSet>, SigError> {
    par::try_map_range(exec, ds.len(), |i| record_features(&ds.records[i], ds.config.line_hz))
}

pub fn featurize(ds: &Dataset) -> Result<Vec<FeatureSet>, SigError> {
    featurize_with(ds, Exec::default())
}

/// Features of every record under full availability, generated and
/// featurized one record at a time so raw signals are never all resident.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    pub config: GenConfig,
    pub full: Vec<FeatureSet>,
    pub splits: Vec<Split>,
}

impl FeatureBank {
    pub fn generate(cfg: &GenConfig, exec: Exec) -> crate::Result<FeatureBank> {
        cfg.validate()?;
        let full = par::try_map_range(exec, cfg.n_samples, |i| -> crate::Result<FeatureSet> {
            let mut record = generate_record(cfg, i)?;
            record.a.fill(true);
            Ok(record_features(&record, cfg.line_hz)?)
        })?;
        let labels: Vec<usize> = full.iter().map(|f| f.y).collect();
        Ok(FeatureBank {
            config: cfg.clone(),
            splits: stratified_splits(&labels, cfg.seed),
            full,
        })
    }

    pub fn from_features(config: GenConfig, full: Vec<FeatureSet>, splits: Vec<Split>) -> FeatureBank {
        FeatureBank { config, full, splits }
    }

    pub fn len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        split_indices(&self.splits, split)
    }

    /// Feature sets for `indices` under masks drawn at `rate` from stream
    /// `(seed_value, mask, index)`.
    pub fn masked(&self, indices: &[usize], rate: f64, seed_value: u64) -> Vec<FeatureSet> {
        let m = self.config.num_modalities();
        indices
            .iter()
            .map(|&i| self.full[i].with_mask(&record_mask(seed_value, i, m, rate)))
            .collect()
    }
}

#[cfg(test)]
mod tests;
