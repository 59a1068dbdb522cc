use crate::{Error, Result};

const STEPS: usize = 500;
const STEP_SIZE: f64 = 0.5;
const L2: f64 = 1e-3;

fn standardize(train: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = train.len() as f64;
    let d = train[0].len();
    let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = train.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v.sqrt() > 1e-12 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

/// Test accuracy of an L2-regularised logistic regression fitted by
/// full-batch gradient descent on standardised features. Labels are 0/1.
pub fn linear_probe_accuracy(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
) -> Result<f64> {
    if train_x.is_empty() || train_x.len() != train_y.len() || test_x.len() != test_y.len() {
        return Err(Error::Usage("probe needs matching nonempty inputs".into()));
    }
    let d = train_x[0].len();
    if train_x.iter().chain(test_x).any(|r| r.len() != d) {
        return Err(Error::Usage("probe rows differ in length".into()));
    }
    let (mean, sd) = standardize(train_x);
    let z = |r: &[f64]| -> Vec<f64> { r.iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s).collect() };
    let xs: Vec<Vec<f64>> = train_x.iter().map(|r| z(r)).collect();
    let n = xs.len() as f64;
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    for _ in 0..STEPS {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(train_y) {
            let logit = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-logit).exp()) - y as f64;
            gb += err;
            gw.iter_mut().zip(x).for_each(|(g, v)| *g += err * v);
        }
        for (wj, gj) in w.iter_mut().zip(&gw) {
            *wj -= STEP_SIZE * (gj / n + L2 * *wj);
        }
        b -= STEP_SIZE * gb / n;
    }
    let hits = test_x
        .iter()
        .zip(test_y)
        .filter(|(x, &y)| {
            let logit = b + z(x).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            usize::from(logit > 0.0) == y
        })
        .count();
    Ok(hits as f64 / test_x.len().max(1) as f64)
}
