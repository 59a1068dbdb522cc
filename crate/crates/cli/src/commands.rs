use std::fs;
use std::path::Path;

use anyhow::Context;
use mmq_core::evalharness::{emit_tables, run_sweep, Ablation, Method, Prepared, SweepOptions};
use mmq_core::mmqnet::{Model, ModelConfig};
use mmq_core::objective::composite_suites;
use mmq_core::synthgen::{featurize, generate_dataset, read_dataset, write_dataset, Dataset, FeatureSet, Split};
use mmq_core::tensor_ad::{op_suites, SuiteResult};
use mmq_core::trainer::{evaluate, load_model, save_model, train, TrainOutput};
use serde::Serialize;

use crate::config::{Overrides, RunConfig};
use crate::{Command, Failure};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

pub fn run(command: Command, ov: &Overrides) -> anyhow::Result<()> {
    let mut cfg = ov.resolve()?;
    match command {
        Command::Generate => generate(&cfg),
        Command::Train { data } => {
            let data = data.ok_or_else(|| Failure::Usage("train needs --data <DIR> (a directory written by `mmq generate`)".into()))?;
            match ov.ablation[..] {
                [] => {}
                [a] => cfg.train = Ablation::from(a).apply(&cfg.train),
                _ => return Err(Failure::Usage("train takes a single --ablation".into()).into()),
            }
            train_cmd(&cfg, &data)
        }
        Command::Eval { model, data, split } => eval(&cfg, &model, &data, split.into()),
        Command::Sweep {
            seeds,
            baseline,
            per_rate,
            timing,
        } => {
            if let Some(s) = seeds {
                cfg.sweep.seeds = s;
            }
            cfg.sweep.baseline |= baseline;
            cfg.sweep.per_rate_training |= per_rate;
            cfg.validate()?;
            sweep(&cfg, timing)
        }
        Command::Gradcheck { eps } => gradcheck(&cfg, eps),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn generate(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.echo("generate")?;
    let ds = generate_dataset(&cfg.gen)?;
    let dir = cfg.out.join("dataset");
    write_dataset(&ds, &dir)?;
    log::info!("wrote {} records to {}", ds.records.len(), dir.display());
    Ok(())
}

fn split_sets(ds: &Dataset, features: &[FeatureSet], split: Split) -> Vec<FeatureSet> {
    ds.indices(split).into_iter().map(|i| features[i].clone()).collect()
}

fn load_features(data: &Path) -> anyhow::Result<(Dataset, Vec<FeatureSet>)> {
    let ds = read_dataset(data)?;
    let features = featurize(&ds)?;
    Ok((ds, features))
}

#[derive(Serialize)]
struct TrainReport {
    epochs: usize,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
}

fn train_cmd(cfg: &RunConfig, data: &Path) -> anyhow::Result<()> {
    cfg.echo("train")?;
    let (ds, features) = load_features(data)?;
    let prepared = Prepared::new(
        Method::Mmq(Ablation::Full),
        split_sets(&ds, &features, Split::Train),
        split_sets(&ds, &features, Split::Val),
    );
    let test = prepared.transform(&split_sets(&ds, &features, Split::Test));
    let mut model = Model::init(ModelConfig::new(ds.config.feature_lens()), cfg.train.seed)?;
    let out = TrainOutput { dir: Some(cfg.out.clone()) };
    let history = train(&mut model, &prepared.train, &prepared.val, &cfg.train, &out)?;
    save_model(&cfg.out, &model, &prepared.scaler)?;
    let report = TrainReport {
        epochs: history.records.len(),
        train_acc: evaluate(&model, &prepared.train)?,
        val_acc: if prepared.val.is_empty() { f64::NAN } else { evaluate(&model, &prepared.val)? },
        test_acc: if test.is_empty() { f64::NAN } else { evaluate(&model, &test)? },
    };
    log::info!(
        "trained {} epochs: train {:.3} val {:.3} test {:.3}",
        report.epochs,
        report.train_acc,
        report.val_acc,
        report.test_acc
    );
    write_json(&cfg.out.join("train_metrics.json"), &report)
}

#[derive(Serialize)]
struct EvalReport {
    split: String,
    n: usize,
    accuracy: f64,
}

fn eval(cfg: &RunConfig, model_dir: &Path, data: &Path, split: Split) -> anyhow::Result<()> {
    cfg.echo("eval")?;
    let (model, scaler) = load_model(model_dir)?;
    let (ds, features) = load_features(data)?;
    if ds.config.feature_lens() != model.config.feature_lens {
        return Err(Failure::Usage(format!(
            "dataset feature lengths {:?} do not match the model's {:?}",
            ds.config.feature_lens(),
            model.config.feature_lens
        ))
        .into());
    }
    let sets = scaler.transform_all(&split_sets(&ds, &features, split));
    let report = EvalReport {
        split: format!("{split:?}").to_lowercase(),
        n: sets.len(),
        accuracy: evaluate(&model, &sets)?,
    };
    println!("{} accuracy {:.4} (n = {})", report.split, report.accuracy, report.n);
    write_json(&cfg.out.join("eval.json"), &report)
}

fn sweep(cfg: &RunConfig, timing: bool) -> anyhow::Result<()> {
    cfg.echo("sweep")?;
    let opts = SweepOptions {
        out_dir: Some(cfg.out.clone()),
        timing,
        ..SweepOptions::default()
    };
    let table = run_sweep(&cfg.sweep, &cfg.gen, &cfg.train, &opts)?;
    emit_tables(&table, &cfg.out)?;
    for c in table.configs() {
        let medians: Vec<String> = table
            .rates(&c)
            .into_iter()
            .map(|r| format!("{r}: {:.3}", table.median(&c, r).unwrap_or(f64::NAN)))
            .collect();
        println!("{c}  {}", medians.join("  "));
    }
    Ok(())
}

#[derive(Serialize)]
struct GradcheckReport<'a> {
    eps: f64,
    tolerance: f64,
    passed: bool,
    suites: &'a [SuiteResult],
}

fn gradcheck(cfg: &RunConfig, eps: f64) -> anyhow::Result<()> {
    cfg.echo("gradcheck")?;
    if !(eps > 0.0 && eps < 1e-2) {
        return Err(Failure::Usage(format!("--eps {eps} must lie in (0, 0.01)")).into());
    }
    let mut suites = op_suites(cfg.gen.seed, eps)?;
    suites.extend(composite_suites(
        &ModelConfig::new(cfg.gen.feature_lens()),
        &cfg.train.weights,
        cfg.gen.seed,
        eps,
    )?);
    let failed: Vec<&SuiteResult> = suites.iter().filter(|s| !(s.max_rel_error < GRADCHECK_TOLERANCE)).collect();
    for s in &suites {
        let verdict = if s.max_rel_error < GRADCHECK_TOLERANCE { "ok" } else { "FAIL" };
        println!("{verdict:4} {:.3e}  {}", s.max_rel_error, s.name);
    }
    write_json(
        &cfg.out.join("gradcheck.json"),
        &GradcheckReport {
            eps,
            tolerance: GRADCHECK_TOLERANCE,
            passed: failed.is_empty(),
            suites: &suites,
        },
    )?;
    if failed.is_empty() {
        println!("all {} suites below {GRADCHECK_TOLERANCE:e}", suites.len());
        Ok(())
    } else {
        Err(Failure::Verification(format!("{} of {} gradient suites exceed {GRADCHECK_TOLERANCE:e}", failed.len(), suites.len())).into())
    }
}
