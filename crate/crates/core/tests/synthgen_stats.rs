use mmq_core::evalharness::linear_probe_accuracy;
use mmq_core::par::Exec;
use mmq_core::synthgen::{FeatureBank, FeatureScaler, FeatureSet, GenConfig, Split};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const LEVELS: [f64; 3] = [0.0, 0.6, 1.5];

fn flat(sets: &[FeatureSet]) -> (Vec<Vec<f64>>, Vec<usize>) {
    (sets.iter().map(|s| s.features.concat()).collect(), sets.iter().map(|s| s.y).collect())
}

fn clean_probe(class_sep: f64, seed: u64) -> f64 {
    let cfg = GenConfig {
        n_samples: 600,
        duration_s: 4.0,
        class_sep,
        seed,
        ..GenConfig::default()
    };
    let bank = FeatureBank::generate(&cfg, Exec::Parallel).unwrap();
    let train = bank.masked(&bank.indices(Split::Train), 0.0, 0);
    let mut held = bank.indices(Split::Val);
    held.extend(bank.indices(Split::Test));
    let held = bank.masked(&held, 0.0, 0);
    let scaler = FeatureScaler::fit(&train);
    let (tx, ty) = flat(&scaler.transform_all(&train));
    let (hx, hy) = flat(&scaler.transform_all(&held));
    linear_probe_accuracy(&tx, &ty, &hx, &hy).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn probe_accuracy_rises_with_class_separation() {
    let medians: Vec<f64> = LEVELS
        .iter()
        .map(|&c| {
            let accs: Vec<f64> = SEEDS.iter().map(|&s| clean_probe(c, s)).collect();
            eprintln!("class_sep {c}: {accs:?}");
            median(accs)
        })
        .collect();
    assert!((medians[0] - 0.5).abs() < 0.1, "no separation should sit at chance: {medians:?}");
    assert!(medians.windows(2).all(|w| w[0] < w[1]), "{medians:?}");
}
