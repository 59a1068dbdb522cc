//! Missing-rate sweeps, ablations, a mean-imputation baseline and result
//! tables.

mod probe;
mod tables;

pub use probe::linear_probe_accuracy;
pub use tables::{emit_tables, render_svg, MetricsRow, MetricsTable, RESULTS_CSV, RESULTS_JSON, RESULTS_SVG};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::mmqnet::{Model, ModelConfig};
use crate::par::{self, Exec};
use crate::seed;
use crate::synthgen::{FeatureBank, FeatureScaler, FeatureSet, GenConfig, Split};
use crate::trainer::{evaluate, train, TrainConfig, TrainOutput};
use crate::{Error, Result};

/// Fraction of positions where `predictions` equals `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Usage(format!(
            "accuracy needs equal nonempty inputs, got {} predictions and {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "no_LR", alias = "no-lr")]
    NoLr,
    #[serde(rename = "no_LI", alias = "no-li")]
    NoLi,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoLr => "no_LR",
            Ablation::NoLi => "no_LI",
        }
    }

    /// Training configuration with the ablated term switched off.
    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut out = cfg.clone();
        match self {
            Ablation::Full => {}
            Ablation::NoLr => out.weights.lambda1 = 0.0,
            Ablation::NoLi => out.weights.lambda3 = 0.0,
        }
        out
    }
}

pub const BASELINE_NAME: &str = "mean_impute";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub missing_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub ablations: Vec<Ablation>,
    /// Also train the mean-imputation baseline.
    pub baseline: bool,
    pub train_missing_rate: f64,
    /// Train a separate model per test rate, at that rate.
    pub per_rate_training: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            missing_rates: vec![0.0, 0.1, 0.3, 0.5, 0.7],
            seeds: vec![0, 1, 2, 3, 4],
            ablations: vec![Ablation::Full],
            baseline: false,
            train_missing_rate: 0.3,
            per_rate_training: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.missing_rates.is_empty() || self.seeds.is_empty() {
            return bad("sweep needs at least one rate and one seed".into());
        }
        if self.ablations.is_empty() && !self.baseline {
            return bad("sweep needs at least one configuration".into());
        }
        if self.missing_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad(format!("rates {:?} must lie in [0, 1]", self.missing_rates));
        }
        if self.missing_rates.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("rates {:?} must be strictly ascending", self.missing_rates));
        }
        if !(0.0..=1.0).contains(&self.train_missing_rate) {
            return bad(format!("train_missing_rate {} must lie in [0, 1]", self.train_missing_rate));
        }
        Ok(())
    }
}

/// Mask stream for training and validation sets.
pub fn train_mask_seed(run_seed: u64, rate: f64) -> u64 {
    seed::derive(run_seed, seed::MASK, rate.to_bits())
}

/// Mask stream for the test set at `rate`, disjoint from training masks
/// and from every other rate.
pub fn test_mask_seed(run_seed: u64, rate: f64) -> u64 {
    seed::derive(run_seed, seed::EVAL, rate.to_bits())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mmq(Ablation),
    MeanImpute,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mmq(a) => a.name(),
            Method::MeanImpute => BASELINE_NAME,
        }
    }
}

/// Per-modality means of raw features over available entries.
pub fn modality_means(sets: &[FeatureSet]) -> Vec<Vec<f64>> {
    let Some(first) = sets.first() else {
        return Vec::new();
    };
    (0..first.features.len())
        .map(|m| {
            let rows: Vec<&Vec<f64>> = sets.iter().filter(|s| s.a[m]).map(|s| &s.features[m]).collect();
            let len = first.features[m].len();
            (0..len)
                .map(|j| {
                    if rows.is_empty() {
                        0.0
                    } else {
                        rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Fills missing modalities with `means` and marks every modality available.
pub fn impute(sets: &[FeatureSet], means: &[Vec<f64>]) -> Vec<FeatureSet> {
    sets.iter()
        .map(|s| FeatureSet {
            features: s
                .features
                .iter()
                .zip(&s.a)
                .zip(means)
                .map(|((f, &avail), mu)| if avail { f.clone() } else { mu.clone() })
                .collect(),
            a: vec![true; s.a.len()],
            y: s.y,
        })
        .collect()
}

/// Train/val/test inputs for one method, already scaled.
pub struct Prepared {
    pub train: Vec<FeatureSet>,
    pub val: Vec<FeatureSet>,
    pub scaler: FeatureScaler,
    means: Option<Vec<Vec<f64>>>,
}

impl Prepared {
    pub fn new(method: Method, train: Vec<FeatureSet>, val: Vec<FeatureSet>) -> Prepared {
        let means = matches!(method, Method::MeanImpute).then(|| modality_means(&train));
        let fix = |sets: Vec<FeatureSet>| match &means {
            Some(mu) => impute(&sets, mu),
            None => sets,
        };
        let (train, val) = (fix(train), fix(val));
        let scaler = FeatureScaler::fit(&train);
        Prepared {
            train: scaler.transform_all(&train),
            val: scaler.transform_all(&val),
            scaler,
            means,
        }
    }

    /// Applies the same imputation and scaling to evaluation sets.
    pub fn transform(&self, sets: &[FeatureSet]) -> Vec<FeatureSet> {
        match &self.means {
            Some(mu) => self.scaler.transform_all(&impute(sets, mu)),
            None => self.scaler.transform_all(sets),
        }
    }
}

/// Output location and execution policy of a sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub exec: Exec,
    pub out_dir: Option<PathBuf>,
    /// Record wall-clock seconds in `runtime_s`; otherwise 0 so tables stay
    /// byte-reproducible.
    pub timing: bool,
}

struct Cell {
    method: Method,
    seed: u64,
    /// `None`: one model for all test rates.
    train_rate: Option<f64>,
}

fn cell_dir(root: &Path, cell: &Cell) -> PathBuf {
    let mut dir = root.join("cells").join(cell.method.name()).join(format!("seed_{}", cell.seed));
    if let Some(r) = cell.train_rate {
        dir = dir.join(format!("rate_{r}"));
    }
    dir
}

fn run_cell(
    cell: &Cell,
    bank: &FeatureBank,
    spec: &SweepSpec,
    train_cfg: &TrainConfig,
    opts: &SweepOptions,
) -> Result<Vec<MetricsRow>> {
    let started = Instant::now();
    let train_rate = cell.train_rate.unwrap_or(spec.train_missing_rate);
    let mask_seed = train_mask_seed(cell.seed, train_rate);
    let train_sets = bank.masked(&bank.indices(Split::Train), train_rate, mask_seed);
    let val_sets = bank.masked(&bank.indices(Split::Val), train_rate, mask_seed);
    let prepared = Prepared::new(cell.method, train_sets, val_sets);

    let mut cfg = match cell.method {
        Method::Mmq(a) => a.apply(train_cfg),
        Method::MeanImpute => train_cfg.clone(),
    };
    cfg.seed = cell.seed;
    let mut model = Model::init(ModelConfig::new(bank.config.feature_lens()), cell.seed)?;
    let out = TrainOutput {
        dir: opts.out_dir.as_ref().map(|root| cell_dir(root, cell)),
    };
    let history = train(&mut model, &prepared.train, &prepared.val, &cfg, &out)?;
    let lr_final = history.last().map_or(0.0, |r| r.l_r);

    let test_idx = bank.indices(Split::Test);
    let rates: Vec<f64> = match cell.train_rate {
        Some(r) => vec![r],
        None => spec.missing_rates.clone(),
    };
    let mut rows = Vec::with_capacity(rates.len());
    for rate in rates {
        let test = prepared.transform(&bank.masked(&test_idx, rate, test_mask_seed(cell.seed, rate)));
        rows.push(MetricsRow {
            config: cell.method.name().to_string(),
            rate,
            seed: cell.seed,
            accuracy: evaluate(&model, &test)?,
            lr_final,
            runtime_s: 0.0,
        });
    }
    if opts.timing {
        let secs = started.elapsed().as_secs_f64();
        rows.iter_mut().for_each(|r| r.runtime_s = secs);
    }
    log::info!(
        "{} seed {}: {}",
        cell.method.name(),
        cell.seed,
        rows.iter().map(|r| format!("{}→{:.3}", r.rate, r.accuracy)).collect::<Vec<_>>().join(" ")
    );
    Ok(rows)
}

/// Generates one feature bank per seed (records in parallel).
pub fn generate_banks(gen_cfg: &GenConfig, seeds: &[u64], exec: Exec) -> Result<Vec<FeatureBank>> {
    seeds
        .iter()
        .map(|&s| FeatureBank::generate(&GenConfig { seed: s, ..gen_cfg.clone() }, exec))
        .collect()
}

/// Runs every (method, seed) cell; cells run in parallel. `banks[i]` must
/// belong to `spec.seeds[i]`.
pub fn run_sweep_on(
    spec: &SweepSpec,
    banks: &[FeatureBank],
    train_cfg: &TrainConfig,
    opts: &SweepOptions,
) -> Result<MetricsTable> {
    spec.validate()?;
    train_cfg.validate()?;
    if banks.len() != spec.seeds.len() {
        return Err(Error::Usage(format!("{} banks for {} seeds", banks.len(), spec.seeds.len())));
    }
    let methods: Vec<Method> = spec
        .ablations
        .iter()
        .map(|&a| Method::Mmq(a))
        .chain(spec.baseline.then_some(Method::MeanImpute))
        .collect();
    let mut cells = Vec::new();
    for &method in &methods {
        for (k, &s) in spec.seeds.iter().enumerate() {
            if spec.per_rate_training {
                for &r in &spec.missing_rates {
                    cells.push((k, Cell { method, seed: s, train_rate: Some(r) }));
                }
            } else {
                cells.push((k, Cell { method, seed: s, train_rate: None }));
            }
        }
    }
    let results = par::map_range(opts.exec, cells.len(), |i| {
        let (k, cell) = &cells[i];
        run_cell(cell, &banks[*k], spec, train_cfg, opts)
    });

    let mut table = MetricsTable::default();
    let mut failure = None;
    for r in results {
        match r {
            Ok(rows) => table.rows.extend(rows),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    table.sort(&methods.iter().map(|m| m.name()).collect::<Vec<_>>());
    if let Some(e) = failure {
        if let (Some(dir), false) = (&opts.out_dir, table.rows.is_empty()) {
            emit_tables(&table, dir)?;
        }
        return Err(e);
    }
    Ok(table)
}

/// Full sweep: generation, training and evaluation.
pub fn run_sweep(
    spec: &SweepSpec,
    gen_cfg: &GenConfig,
    train_cfg: &TrainConfig,
    opts: &SweepOptions,
) -> Result<MetricsTable> {
    spec.validate()?;
    let banks = generate_banks(gen_cfg, &spec.seeds, opts.exec)?;
    run_sweep_on(spec, &banks, train_cfg, opts)
}

/// Mean-imputation baseline rows only.
pub fn mean_impute_baseline(
    spec: &SweepSpec,
    banks: &[FeatureBank],
    train_cfg: &TrainConfig,
    opts: &SweepOptions,
) -> Result<MetricsTable> {
    let only = SweepSpec {
        ablations: Vec::new(),
        baseline: true,
        ..spec.clone()
    };
    run_sweep_on(&only, banks, train_cfg, opts)
}

#[cfg(test)]
mod tests;
