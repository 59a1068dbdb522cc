use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use mmq_core::evalharness::{Ablation, SweepSpec};
use mmq_core::synthgen::GenConfig;
use mmq_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const RUN_FILE: &str = "run.json";

/// Everything a subcommand needs, after merging defaults, the config file
/// and command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("mmq_out"),
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationArg {
    Full,
    NoLr,
    NoLi,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Ablation {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoLr => Ablation::NoLr,
            AblationArg::NoLi => Ablation::NoLi,
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with optional `out`, `[gen]`, `[train]` and `[sweep]` tables
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed for generation, initialisation and shuffling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of generated records
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Missingness at generation; for sweeps, the training missing rate
    #[arg(long, global = true)]
    pub missing_rate: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    #[arg(long, global = true)]
    pub lambda3: Option<f64>,
    /// Loss term to switch off; repeat or comma-separate for sweeps
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub ablation: Vec<AblationArg>,
    /// Test missing rates for sweeps, e.g. 0,0.1,0.3
    #[arg(long, global = true, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
}

fn load_file(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())).into())
}

impl Overrides {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(s) = self.seed {
            cfg.gen.seed = s;
            cfg.train.seed = s;
        }
        if let Some(n) = self.n {
            cfg.gen.n_samples = n;
        }
        if let Some(r) = self.missing_rate {
            cfg.gen.missing_rate = r;
            cfg.sweep.train_missing_rate = r;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        let w = &mut cfg.train.weights;
        for (slot, flag) in [(&mut w.lambda1, self.lambda1), (&mut w.lambda2, self.lambda2), (&mut w.lambda3, self.lambda3)] {
            if let Some(v) = flag {
                *slot = v;
            }
        }
        if !self.ablation.is_empty() {
            cfg.sweep.ablations = self.ablation.iter().map(|&a| a.into()).collect();
        }
        if let Some(rates) = &self.rates {
            cfg.sweep.missing_rates = rates.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        self.gen.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        self.sweep.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(())
    }

    /// Writes the resolved configuration to `<out>/run.json`.
    pub fn echo(&self, command: &str) -> anyhow::Result<()> {
        #[derive(Serialize)]
        struct Echo<'a> {
            command: &'a str,
            config: &'a RunConfig,
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(RUN_FILE);
        let text = serde_json::to_string_pretty(&Echo { command, config: self })?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
