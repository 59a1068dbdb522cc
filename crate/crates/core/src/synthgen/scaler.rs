use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::sigkit::FEATURES_PER_CHANNEL;

const PSD_FLOOR: f64 = 1e-30;

/// Log-transforms band powers, then standardises each feature with
/// statistics from available entries only. Placeholders stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

fn log_psd(f: &[f64]) -> Vec<f64> {
    f.iter()
        .enumerate()
        .map(|(j, &v)| {
            if j % FEATURES_PER_CHANNEL >= FEATURES_PER_CHANNEL / 2 {
                v.max(PSD_FLOOR).ln()
            } else {
                v
            }
        })
        .collect()
}

impl FeatureScaler {
    pub fn fit(sets: &[FeatureSet]) -> FeatureScaler {
        let Some(first) = sets.first() else {
            return FeatureScaler {
                mean: Vec::new(),
                std: Vec::new(),
            };
        };
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for m in 0..first.features.len() {
            let len = first.features[m].len();
            let rows: Vec<Vec<f64>> = sets.iter().filter(|s| s.a[m]).map(|s| log_psd(&s.features[m])).collect();
            let n = rows.len() as f64;
            let mu: Vec<f64> = (0..len)
                .map(|j| if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r[j]).sum::<f64>() / n })
                .collect();
            let sd: Vec<f64> = (0..len)
                .map(|j| {
                    if rows.len() < 2 {
                        return 1.0;
                    }
                    let var = rows.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / n;
                    if var.sqrt() > 1e-12 {
                        var.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            mean.push(mu);
            std.push(sd);
        }
        FeatureScaler { mean, std }
    }

    pub fn transform(&self, set: &FeatureSet) -> FeatureSet {
        let features = set
            .features
            .iter()
            .enumerate()
            .map(|(m, f)| {
                if !set.a[m] {
                    return vec![0.0; f.len()];
                }
                log_psd(f)
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (v - self.mean[m][j]) / self.std[m][j])
                    .collect()
            })
            .collect();
        FeatureSet {
            features,
            a: set.a.clone(),
            y: set.y,
        }
    }

    pub fn transform_all(&self, sets: &[FeatureSet]) -> Vec<FeatureSet> {
        sets.iter().map(|s| self.transform(s)).collect()
    }
}
