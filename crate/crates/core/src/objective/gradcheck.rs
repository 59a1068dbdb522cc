use rand::Rng as _;

use super::{class_loss, cmi_estimate, recon_loss, total_loss, CmiEstimator, LossWeights};
use crate::mmqnet::{forward, Batch, Model, ModelConfig};
use crate::par::Exec;
use crate::seed;
use crate::synthgen::FeatureSet;
use crate::tensor_ad::{central_difference, AdError, SuiteResult, Tape, Tensor};
use crate::trainer::AdamConfig;

/// Batch size of the end-to-end check.
pub const COMPOSITE_BATCH: usize = 4;

fn random_sets(seed_value: u64, feature_lens: &[usize]) -> Vec<FeatureSet> {
    let mut rng = seed::rng(seed_value, "gradcheck", 1);
    let m = feature_lens.len();
    (0..COMPOSITE_BATCH)
        .map(|i| {
            let mut a: Vec<bool> = (0..m).map(|_| rng.random_bool(0.6)).collect();
            a[i % m] = true;
            FeatureSet {
                features: feature_lens
                    .iter()
                    .map(|&k| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                a,
                y: i % 2,
            }
        })
        .collect()
}

/// Central-difference check of forward ∘ total loss against every model
/// parameter tensor, on a random 4-sample batch with missing modalities.
/// The estimator is trained briefly and then frozen; the detached
/// reconstruction target is held fixed.
pub fn composite_suites(config: &ModelConfig, weights: &LossWeights, seed_value: u64, eps: f64) -> Result<Vec<SuiteResult>, AdError> {
    let model = Model::init(config.clone(), seed_value)?;
    let batch = Batch::from_sets(&random_sets(seed_value, &config.feature_lens))?;
    let mut est = CmiEstimator::for_width(config.d_model, AdamConfig::default(), seed_value);
    {
        let tape = Tape::new();
        let out = forward(&model.config, &model.bind(&tape)?, &batch)?;
        est.train(&out.f_c.value(), &out.f_i.value(), &batch.y, 5)?;
    }

    let tape = Tape::new();
    let p = model.bind(&tape)?;
    let out = forward(&model.config, &p, &batch)?;
    let target = out.target.value();
    let loss = total_loss(
        recon_loss(out.recon, out.target, &batch.a)?,
        class_loss(out.logits, &batch.y)?,
        cmi_estimate(out.f_c, out.f_i, &batch.y, &est)?,
        weights,
    )?;
    tape.backward(loss)?;

    let eval = |name: &str, value: &Tensor| -> Result<f64, AdError> {
        let mut m = model.clone();
        if let Some(slot) = m.params.get_mut(name) {
            *slot = value.clone();
        }
        let tape = Tape::new();
        let out = forward(&m.config, &m.bind(&tape)?, &batch)?;
        let total = total_loss(
            recon_loss(out.recon, tape.constant(target.clone())?, &batch.a)?,
            class_loss(out.logits, &batch.y)?,
            cmi_estimate(out.f_c, out.f_i, &batch.y, &est)?,
            weights,
        )?;
        Ok(total.value().item())
    };

    model
        .params
        .iter()
        .zip(p.vars())
        .map(|((name, value), var)| {
            let analytic = var.grad().unwrap_or_else(|| Tensor::zeros(value.shape()));
            let f = |t: &Tensor| eval(name, t);
            let numeric = central_difference(Exec::default(), f, value, eps)?;
            let floor = FLOOR_FRACTION * analytic.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut worst = 0.0f64;
            for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
                let mut err = floored_error(a, n, floor);
                if err > KINK_RETRY {
                    err = err.min(kink_safe_error(&f, value, i, a, floor, eps)?);
                }
                worst = worst.max(err);
            }
            Ok(SuiteResult {
                name: format!("total_loss/{name}"),
                max_rel_error: worst,
            })
        })
        .collect()
}

const KINK_RETRY: f64 = 1e-5;

/// Coordinates whose gradient is below this fraction of the tensor's
/// largest entry are compared in absolute terms against that floor.
pub const FLOOR_FRACTION: f64 = 1e-3;

fn floored_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor).max(1e-8)
}

/// Smallest error over finer central differences and second-order
/// one-sided differences at coordinate `i`. A ReLU kink inside
/// `[x - eps, x + eps]` spoils the plain central difference but leaves at
/// least one of these clean; a wrong analytic gradient matches none.
fn kink_safe_error<F>(f: &F, x: &Tensor, i: usize, analytic: f64, floor: f64, eps: f64) -> Result<f64, AdError>
where
    F: Fn(&Tensor) -> Result<f64, AdError>,
{
    let at = |h: f64| {
        let mut t = x.clone();
        t.data_mut()[i] += h;
        f(&t)
    };
    let f0 = f(x)?;
    let mut estimates = Vec::new();
    for h in [eps / 4.0, eps / 16.0] {
        estimates.push((at(h)? - at(-h)?) / (2.0 * h));
    }
    for h in [eps, -eps, eps / 4.0, -eps / 4.0] {
        estimates.push((4.0 * at(h)? - at(2.0 * h)? - 3.0 * f0) / (2.0 * h));
    }
    Ok(estimates
        .into_iter()
        .map(|n| floored_error(analytic, n, floor))
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kink_retry_accepts_true_slope_and_rejects_wrong_one() {
        let relu = |t: &Tensor| Ok((t.data()[0] - 3e-6).max(0.0) * 2.0 + t.data()[1]);
        let x = Tensor::from_vec(vec![0.0, 1.0]);
        assert!(kink_safe_error(&relu, &x, 0, 0.0, 0.0, 1e-5).unwrap() < 1e-12);
        assert!(kink_safe_error(&relu, &x, 0, 0.3, 0.0, 1e-5).unwrap() > 0.5);
        assert!(kink_safe_error(&relu, &x, 1, 1.2, 0.0, 1e-5).unwrap() > 0.1);
        assert_eq!(floored_error(1e-9, 2e-9, 1e-3), 1e-6);
    }
}
