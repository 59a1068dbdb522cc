use super::*;
use crate::synthgen::FeatureBank;

#[test]
fn accuracy_examples() {
    assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
    assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
    assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
    assert!(matches!(accuracy(&[], &[]), Err(Error::Usage(_))));
    assert!(accuracy(&[0], &[0, 1]).is_err());
}

fn tiny_gen() -> GenConfig {
    GenConfig {
        n_samples: 40,
        duration_s: 2.0,
        fs_raw: 256.0,
        ..GenConfig::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn single_cell_sweep_has_one_row() {
    let spec = SweepSpec {
        missing_rates: vec![0.0],
        seeds: vec![3],
        ..SweepSpec::default()
    };
    let table = run_sweep(&spec, &tiny_gen(), &tiny_train(), &SweepOptions::default()).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!((row.config.as_str(), row.rate, row.seed, row.runtime_s), ("full", 0.0, 3, 0.0));
    assert!((0.0..=1.0).contains(&row.accuracy));
}

#[test]
fn sweep_is_complete_ordered_and_exec_independent() {
    let spec = SweepSpec {
        missing_rates: vec![0.0, 0.5],
        seeds: vec![1, 2],
        ablations: vec![Ablation::Full, Ablation::NoLr],
        baseline: true,
        ..SweepSpec::default()
    };
    let banks = generate_banks(&tiny_gen(), &spec.seeds, Exec::Parallel).unwrap();
    let seq = SweepOptions {
        exec: Exec::Sequential,
        ..SweepOptions::default()
    };
    let a = run_sweep_on(&spec, &banks, &tiny_train(), &seq).unwrap();
    let b = run_sweep_on(&spec, &banks, &tiny_train(), &SweepOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 3 * 2 * 2);
    assert_eq!(a.configs(), vec!["full", "no_LR", BASELINE_NAME]);
    let keys: Vec<(String, f64, u64)> = a.rows.iter().map(|r| (r.config.clone(), r.rate, r.seed)).collect();
    assert_eq!(keys[0], ("full".into(), 0.0, 1));
    assert_eq!(keys[1], ("full".into(), 0.0, 2));
    assert_eq!(keys[2], ("full".into(), 0.5, 1));
    assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    let no_lr: Vec<f64> = a.rows.iter().filter(|r| r.config == "no_LR").map(|r| r.lr_final).collect();
    assert!(no_lr.iter().all(|v| v.is_finite()));

    let baseline = mean_impute_baseline(&spec, &banks, &tiny_train(), &seq).unwrap();
    assert_eq!(baseline.rows, a.rows.iter().filter(|r| r.config == BASELINE_NAME).cloned().collect::<Vec<_>>());
}

#[test]
fn per_rate_training_trains_one_model_per_rate() {
    let spec = SweepSpec {
        missing_rates: vec![0.0, 0.7],
        seeds: vec![0],
        per_rate_training: true,
        ..SweepSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions {
        out_dir: Some(dir.path().into()),
        ..SweepOptions::default()
    };
    let table = run_sweep(&spec, &tiny_gen(), &tiny_train(), &opts).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_ne!(table.rows[0].lr_final, table.rows[1].lr_final);
    for r in ["rate_0", "rate_0.7"] {
        assert!(dir.path().join("cells/full/seed_0").join(r).join("history.csv").exists());
    }
}

#[test]
fn spec_validation() {
    let ok = SweepSpec::default();
    ok.validate().unwrap();
    for bad in [
        SweepSpec { missing_rates: vec![0.3, 0.1], ..ok.clone() },
        SweepSpec { missing_rates: vec![1.2], ..ok.clone() },
        SweepSpec { seeds: vec![], ..ok.clone() },
        SweepSpec { ablations: vec![], ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn baseline_sees_identical_inputs_without_missingness() {
    let bank = FeatureBank::generate(&tiny_gen(), Exec::Parallel).unwrap();
    let tr = bank.masked(&bank.indices(Split::Train), 0.0, 1);
    let va = bank.masked(&bank.indices(Split::Val), 0.0, 1);
    let mmq = Prepared::new(Method::Mmq(Ablation::Full), tr.clone(), va.clone());
    let base = Prepared::new(Method::MeanImpute, tr, va);
    assert_eq!(mmq.train, base.train);
    assert_eq!(mmq.val, base.val);
}

#[test]
fn imputation_uses_training_means() {
    let set = |f: f64, a: bool, y| FeatureSet {
        features: vec![vec![f, 2.0 * f], vec![f]],
        a: vec![a, true],
        y,
    };
    let train = vec![set(1.0, true, 0), set(3.0, true, 1), set(100.0, false, 0)];
    let means = modality_means(&train);
    assert_eq!(means, vec![vec![2.0, 4.0], vec![104.0 / 3.0]]);
    let filled = impute(&[set(-5.0, false, 1)], &means);
    assert_eq!(filled[0].features[0], vec![2.0, 4.0]);
    assert_eq!(filled[0].a, vec![true, true]);
}

fn sample_table() -> MetricsTable {
    let mut t = MetricsTable::default();
    for (config, rate, seed, acc) in [("full", 0.0, 1, 0.9), ("full", 0.0, 0, 0.7), ("full", 0.5, 0, 0.6), ("no_LR", 0.0, 0, 0.5)] {
        t.rows.push(MetricsRow {
            config: config.into(),
            rate,
            seed,
            accuracy: acc,
            lr_final: 0.125,
            runtime_s: 0.0,
        });
    }
    t
}

#[test]
fn medians_and_sorting() {
    let mut t = sample_table();
    assert_eq!(t.median("full", 0.0), Some(0.8));
    assert_eq!(t.median("full", 0.3), None);
    t.sort(&["no_LR", "full"]);
    assert_eq!(t.rows[0].config, "no_LR");
    assert_eq!((t.rows[1].seed, t.rows[2].seed), (0, 1));
}

#[test]
fn one_row_table_emits_one_line() {
    let mut t = sample_table();
    t.rows.truncate(1);
    let dir = tempfile::tempdir().unwrap();
    emit_tables(&t, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines, vec!["config,rate,seed,accuracy,lr_final,runtime_s", "full,0.0,1,0.9,0.125,0.0"]);
    assert!(emit_tables(&MetricsTable::default(), dir.path()).is_err());
}

#[test]
fn csv_and_json_agree_and_reemission_is_identical() {
    let t = sample_table();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    emit_tables(&t, d1.path()).unwrap();
    emit_tables(&t, d2.path()).unwrap();
    for f in [RESULTS_CSV, RESULTS_JSON, RESULTS_SVG] {
        assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
    }
    let csv = MetricsTable::from_csv_str(&std::fs::read_to_string(d1.path().join(RESULTS_CSV)).unwrap()).unwrap();
    assert_eq!(csv, t);
    let nested: tables::Nested = serde_json::from_str(&std::fs::read_to_string(d1.path().join(RESULTS_JSON)).unwrap()).unwrap();
    let mut from_json = Vec::new();
    for (config, rates) in &nested {
        for (rate, cell) in rates {
            for run in &cell.runs {
                from_json.push((config.clone(), rate.parse::<f64>().unwrap(), run.seed, run.accuracy, run.lr_final));
            }
        }
    }
    let mut from_csv: Vec<_> = csv.rows.iter().map(|r| (r.config.clone(), r.rate, r.seed, r.accuracy, r.lr_final)).collect();
    let key = |a: &(String, f64, u64, f64, f64)| (a.0.clone(), a.1.to_bits(), a.2);
    from_json.sort_by_key(key);
    from_csv.sort_by_key(key);
    assert_eq!(from_json, from_csv);
    assert_eq!(nested["full"]["0"].median_accuracy, 0.8);
    let svg = std::fs::read_to_string(d1.path().join(RESULTS_SVG)).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn probe_separates_linear_classes() {
    let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 2) as f64 * 2.0 - 1.0 + 0.1 * ((i * 7) % 5) as f64, 0.3]).collect();
    let ys: Vec<usize> = (0..200).map(|i| i % 2).collect();
    assert_eq!(linear_probe_accuracy(&xs, &ys, &xs, &ys).unwrap(), 1.0);
    assert!(linear_probe_accuracy(&[], &[], &xs, &ys).is_err());
}
