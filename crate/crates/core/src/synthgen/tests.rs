use super::*;
use crate::par::Exec;

fn small(n: usize) -> GenConfig {
    GenConfig {
        n_samples: n,
        duration_s: 2.0,
        fs_raw: 256.0,
        ..GenConfig::default()
    }
}

fn cheap(n: usize) -> GenConfig {
    GenConfig {
        fs_raw: 128.0,
        ..small(n)
    }
}

#[test]
fn generation_is_deterministic_across_exec_modes() {
    let cfg = GenConfig {
        artifact_prob: 0.5,
        missing_rate: 0.3,
        ..small(8)
    };
    let a = generate_dataset_with(&cfg, Exec::Sequential).unwrap();
    let b = generate_dataset_with(&cfg, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    let other = generate_dataset(&GenConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.records[0].x, other.records[0].x);
}

#[test]
fn labels_are_exactly_balanced_and_splits_stratified() {
    let ds = generate_dataset(&cheap(2000)).unwrap();
    let ones = ds.records.iter().filter(|r| r.y == 1).count();
    assert_eq!(ones, 1000);
    for split in [Split::Train, Split::Val, Split::Test] {
        let idx = ds.indices(split);
        let pos = idx.iter().filter(|&&i| ds.records[i].y == 1).count();
        assert_eq!(2 * pos, idx.len(), "{split:?}");
    }
    assert_eq!(ds.indices(Split::Train).len(), 1400);
    assert_eq!(ds.indices(Split::Val).len(), 300);
    assert_eq!(ds.indices(Split::Test).len(), 300);
    assert!(ds.records.iter().all(|r| r.one_hot().iter().sum::<f64>() == 1.0));
}

#[test]
fn missingness_extremes_and_drop_fraction() {
    let ds = generate_dataset(&cheap(5000)).unwrap();
    let none = apply_missingness(ds.clone(), 0.0, 3).unwrap();
    assert!(none.records.iter().all(|r| r.a.iter().all(|&b| b)));
    let all = apply_missingness(ds.clone(), 1.0, 3).unwrap();
    assert!(all.records.iter().all(|r| r.a.iter().filter(|&&b| b).count() == 1));
    assert_eq!(all.records[7].x, ds.records[7].x);

    let part = apply_missingness(ds, 0.3, 3).unwrap();
    let dropped = part.records.iter().flat_map(|r| &r.a).filter(|&&b| !b).count();
    let frac = dropped as f64 / (5000.0 * 5.0);
    assert!((frac - 0.3).abs() < 0.02, "{frac}");
}

#[test]
fn masks_carry_no_label_information() {
    let n = 10_000;
    let m = 5;
    let mut joint = std::collections::HashMap::<(usize, usize), f64>::new();
    for i in 0..n {
        let a = record_mask(11, i, m, 0.3);
        let code = a.iter().enumerate().map(|(j, &b)| usize::from(b) << j).sum();
        *joint.entry((code, i % 2)).or_default() += 1.0 / n as f64;
    }
    let mut pa = std::collections::HashMap::<usize, f64>::new();
    for (&(code, _), &p) in &joint {
        *pa.entry(code).or_default() += p;
    }
    let mi: f64 = joint.iter().map(|(&(code, _), &p)| p * (p / (pa[&code] * 0.5)).ln()).sum();
    assert!(mi <= 0.01, "{mi}");
}

#[test]
fn missingness_rejects_bad_rate() {
    let ds = generate_dataset(&cheap(2)).unwrap();
    assert!(apply_missingness(ds, 1.5, 0).is_err());
}

#[test]
fn zero_probability_interference_is_identity() {
    let ds = generate_dataset(&small(6)).unwrap();
    let same = inject_interference(ds.clone(), 0.0, 5.0, 9).unwrap();
    assert_eq!(ds, same);
    assert!(inject_interference(ds, 0.5, 0.0, 9).is_err());
}

fn max_windowed_rms(x: &[f64], w: usize) -> f64 {
    x.chunks(w).map(rms).fold(0.0, f64::max)
}

#[test]
fn bursts_dominate_windowed_rms() {
    let ds = generate_dataset(&small(20)).unwrap();
    let hit = inject_interference(ds.clone(), 1.0, 5.0, 4).unwrap();
    let w = (0.25 * ds.config.fs_raw) as usize;
    for (clean, dirty) in ds.records.iter().zip(&hit.records) {
        let b = dirty.burst.expect("every record gets a burst");
        assert!(clean.a[b.modality]);
        let secs = b.len as f64 / ds.config.fs_raw;
        assert!((0.5..=1.5).contains(&secs), "{secs}");
        for (c, d) in clean.x[b.modality].iter().zip(&dirty.x[b.modality]) {
            let ratio = max_windowed_rms(d.samples(), w) / rms(c.samples());
            assert!(ratio >= 3.0, "{ratio}");
        }
        for m in (0..5).filter(|&m| m != b.modality) {
            assert_eq!(clean.x[m], dirty.x[m]);
        }
    }
}

#[test]
fn bursts_only_land_on_available_modalities() {
    let cfg = GenConfig {
        missing_rate: 0.7,
        artifact_prob: 1.0,
        ..cheap(200)
    };
    let ds = generate_dataset(&cfg).unwrap();
    assert!(ds.records.iter().all(|r| r.a[r.burst.unwrap().modality]));
}

#[test]
fn artifacts_are_uncorrelated_with_labels() {
    let ds = generate_dataset(&GenConfig {
        duration_s: 2.0,
        ..cheap(10_000)
    })
    .unwrap();
    let hit = inject_interference(ds, 0.5, 5.0, 21).unwrap();
    let a: Vec<f64> = hit.records.iter().map(|r| f64::from(u8::from(r.burst.is_some()))).collect();
    let y: Vec<f64> = hit.records.iter().map(|r| r.y as f64).collect();
    let n = a.len() as f64;
    let (ma, my) = (a.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&y).map(|(p, q)| (p - ma) * (q - my)).sum::<f64>() / n;
    let sa = (a.iter().map(|p| (p - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (y.iter().map(|q| (q - my).powi(2)).sum::<f64>() / n).sqrt();
    let r = cov / (sa * sy);
    assert!(r.abs() <= 0.03, "{r}");
}

#[test]
fn feature_layout_and_placeholders() {
    let cfg = small(3);
    assert_eq!(cfg.feature_lens(), vec![40, 10, 10, 10, 10]);
    let mut ds = generate_dataset(&cfg).unwrap();
    ds.records[1].a = vec![true, false, true, true, true];
    let feats = featurize(&ds).unwrap();
    for f in &feats {
        let lens: Vec<usize> = f.features.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![40, 10, 10, 10, 10]);
    }
    assert!(feats[1].features[1].iter().all(|&v| v == 0.0));
    assert!(feats[0].features[1].iter().any(|&v| v != 0.0));
    assert!(feats.iter().flat_map(|f| f.features.concat()).all(f64::is_finite));

    let twin = SignalRecord {
        y: 1 - ds.records[0].y,
        ..ds.records[0].clone()
    };
    let f_twin = record_features(&twin, cfg.line_hz).unwrap();
    assert_eq!(f_twin.features, feats[0].features);
}

#[test]
fn feature_bank_matches_featurize() {
    let cfg = GenConfig {
        missing_rate: 0.4,
        ..small(4)
    };
    let bank = FeatureBank::generate(&cfg, Exec::Parallel).unwrap();
    let mut ds = generate_dataset(&cfg).unwrap();
    for r in &mut ds.records {
        r.a.fill(true);
    }
    assert_eq!(bank.full, featurize(&ds).unwrap());
    let masked = bank.masked(&[0, 1, 2, 3], 0.4, cfg.seed);
    let direct = featurize(&apply_missingness(ds, 0.4, cfg.seed).unwrap()).unwrap();
    assert_eq!(masked, direct);
}

#[test]
fn scaler_standardises_available_entries() {
    let bank = FeatureBank::generate(&small(40), Exec::Parallel).unwrap();
    let sets = bank.masked(&(0..40).collect::<Vec<_>>(), 0.3, 5);
    let scaler = FeatureScaler::fit(&sets);
    let z = scaler.transform_all(&sets);
    for m in 0..5 {
        let rows: Vec<&Vec<f64>> = z.iter().filter(|s| s.a[m]).map(|s| &s.features[m]).collect();
        let mean0 = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
        assert!(mean0.abs() < 1e-9, "{mean0}");
        assert!(z.iter().filter(|s| !s.a[m]).all(|s| s.features[m].iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let cfg = GenConfig {
        missing_rate: 0.3,
        artifact_prob: 0.5,
        ..small(5)
    };
    let ds = generate_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.config, ds.config);
    assert_eq!(back.splits, ds.splits);
    for (r, s) in ds.records.iter().zip(&back.records) {
        assert_eq!((r.y, &r.a, r.burst), (s.y, &s.a, s.burst));
        for (c, d) in r.x.concat().iter().zip(s.x.concat()) {
            for (u, v) in c.samples().iter().zip(d.samples()) {
                assert_eq!(*u as f32, *v as f32);
            }
        }
    }
    let again = tempfile::tempdir().unwrap();
    write_dataset(&back, again.path()).unwrap();
    for f in ["signals.bin", "labels.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap()
        );
    }

    let bin = dir.path().join("signals.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes.pop();
    std::fs::write(&bin, &bytes).unwrap();
    assert!(read_dataset(dir.path()).is_err());
    bytes[0] = b'X';
    std::fs::write(&bin, &bytes).unwrap();
    assert!(read_dataset(dir.path()).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        GenConfig { n_samples: 0, ..GenConfig::default() },
        GenConfig { modalities: vec![], ..GenConfig::default() },
        GenConfig { duration_s: 1.5, ..GenConfig::default() },
        GenConfig { fs_raw: 500.0, ..GenConfig::default() },
        GenConfig { missing_rate: -0.1, ..GenConfig::default() },
        GenConfig { artifact_prob: 1.1, ..GenConfig::default() },
        GenConfig { class_sep: -1.0, ..GenConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(generate_dataset(&cfg), Err(GenError::InvalidParameter(_))), "{cfg:?}");
    }
}

#[test]
fn pink_noise_has_unit_rms_and_falling_spectrum() {
    let mut rng = crate::seed::rng(1, "test", 0);
    let x = signals::pink_noise(&mut rng, 4096);
    assert!((rms(&x) - 1.0).abs() < 1e-12);
    let ts = TimeSeries::new(x, 128.0, "p").unwrap();
    let d = crate::sigkit::welch_density(&ts).unwrap();
    assert!(d.band_power(2.0, 4.0) > 2.0 * d.band_power(30.0, 32.0));
}
