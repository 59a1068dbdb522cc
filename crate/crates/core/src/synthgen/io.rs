//! On-disk dataset format: `meta.json`, `signals.bin` and `labels.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Burst, Dataset, GenConfig, GenError, SignalRecord, Split};
use crate::sigkit::TimeSeries;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"MMQD";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
struct LayoutEntry {
    name: String,
    channels: usize,
    fs: f64,
    samples: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u16,
    config: GenConfig,
    seed: u64,
    splits: Vec<Split>,
    layout: Vec<LayoutEntry>,
    bursts: Vec<Option<Burst>>,
}

fn format_err(msg: impl Into<String>) -> Error {
    GenError::Format(msg.into()).into()
}

pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &ds.config;
    let n_per = cfg.samples_per_channel();
    let meta = Meta {
        format_version: DATASET_VERSION,
        config: cfg.clone(),
        seed: cfg.seed,
        splits: ds.splits.clone(),
        layout: cfg
            .modalities
            .iter()
            .map(|m| LayoutEntry {
                name: m.kind.name().to_string(),
                channels: m.channels,
                fs: cfg.fs_raw,
                samples: n_per,
            })
            .collect(),
        bursts: ds.records.iter().map(|r| r.burst).collect(),
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;

    let m = cfg.modalities.len();
    let m16 = u16::try_from(m).map_err(|_| format_err("too many modalities"))?;
    let n32 = u32::try_from(ds.len()).map_err(|_| format_err("too many records"))?;
    let total: usize = cfg.modalities.iter().map(|s| s.channels).sum::<usize>() * n_per * ds.len();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * total);
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&m16.to_le_bytes());
    buf.extend_from_slice(&n32.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for r in &ds.records {
        for chans in &r.x {
            for ch in chans {
                for &v in ch.samples() {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    let path = dir.join("signals.bin");
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["index".to_string(), "y".to_string()];
    header.extend((0..m).map(|j| format!("a_{j}")));
    w.write_record(&header)?;
    for (i, r) in ds.records.iter().enumerate() {
        let mut row = vec![i.to_string(), r.y.to_string()];
        row.extend(r.a.iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn read_labels(path: &Path, n: usize, m: usize) -> Result<Vec<(usize, Vec<bool>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != m + 2 || &headers[0] != "index" || &headers[1] != "y" {
        return Err(format_err(format!("labels.csv header mismatch: {headers:?}")));
    }
    let mut out = Vec::with_capacity(n);
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let parse = |k: usize| -> Result<usize> {
            row.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| format_err(format!("labels.csv row {i}, column {k} is not an integer")))
        };
        if parse(0)? != i {
            return Err(format_err(format!("labels.csv row {i} has wrong index")));
        }
        let y = parse(1)?;
        if y > 1 {
            return Err(format_err(format!("labels.csv row {i}: label {y} is not binary")));
        }
        let a = (0..m)
            .map(|j| match parse(j + 2)? {
                0 => Ok(false),
                1 => Ok(true),
                v => Err(format_err(format!("labels.csv row {i}: availability bit {v}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if !a.iter().any(|&b| b) {
            return Err(format_err(format!("labels.csv row {i}: no available modality")));
        }
        out.push((y, a));
    }
    if out.len() != n {
        return Err(format_err(format!("labels.csv has {} rows, expected {n}", out.len())));
    }
    Ok(out)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Meta = serde_json::from_str(&text)?;
    if meta.format_version != DATASET_VERSION {
        return Err(format_err(format!("unsupported dataset version {}", meta.format_version)));
    }
    let cfg = meta.config;
    cfg.validate()?;
    let (n, m) = (cfg.n_samples, cfg.modalities.len());
    if meta.splits.len() != n || meta.bursts.len() != n {
        return Err(format_err("meta.json split or burst list length mismatch"));
    }

    let path = dir.join("signals.bin");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != DATASET_MAGIC {
        return Err(format_err("signals.bin has a bad header"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    if u16_at(4) != DATASET_VERSION || usize::from(u16_at(6)) != m || u32_at(8) as usize != n {
        return Err(format_err("signals.bin header disagrees with meta.json"));
    }
    let n_per = cfg.samples_per_channel();
    let channels: usize = cfg.modalities.iter().map(|s| s.channels).sum();
    let expected = HEADER_LEN + 4 * n * channels * n_per;
    if bytes.len() != expected {
        return Err(format_err(format!(
            "signals.bin has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let labels = read_labels(&dir.join("labels.csv"), n, m)?;

    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    let mut records = Vec::with_capacity(n);
    for ((y, a), burst) in labels.into_iter().zip(meta.bursts) {
        let mut x = Vec::with_capacity(m);
        for spec in &cfg.modalities {
            let mut chans = Vec::with_capacity(spec.channels);
            for c in 0..spec.channels {
                let samples: Vec<f64> = values.by_ref().take(n_per).collect();
                chans.push(TimeSeries::new(samples, cfg.fs_raw, format!("{}{c}", spec.kind.name()))?);
            }
            x.push(chans);
        }
        records.push(SignalRecord { x, a, y, burst });
    }
    Ok(Dataset {
        config: cfg,
        records,
        splits: meta.splits,
    })
}
