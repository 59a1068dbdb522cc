//! Reconstruction, classification and conditional mutual information terms
//! and their weighted sum.

mod gradcheck;

pub use gradcheck::{composite_suites, COMPOSITE_BATCH};

use serde::{Deserialize, Serialize};

use crate::mmqnet::{init_store, mlp2};
use crate::seed;
use crate::tensor_ad::{AdError, ParamStore, Tape, Tensor, Var};
use crate::trainer::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} = {v} must be non-negative"));
            }
        }
        Ok(())
    }

    /// `λ1·lr + λ2·lc + λ3·li` on plain numbers.
    pub fn combine(&self, lr: f64, lc: f64, li: f64) -> f64 {
        self.lambda1 * lr + self.lambda2 * lc + self.lambda3 * li
    }
}

/// Squared error over available modality rows divided by the number of
/// available rows; zero when nothing is available.
///
/// `f_hat` and `f` are `[B, M, d]`; `a[b][m]` marks available rows.
pub fn recon_loss<'t>(f_hat: Var<'t>, f: Var<'t>, a: &[Vec<bool>]) -> Result<Var<'t>, AdError> {
    let shape = f_hat.shape();
    if shape.len() != 3 || shape[0] != a.len() || a.iter().any(|r| r.len() != shape[1]) {
        return Err(AdError::Shape {
            op: "recon_loss",
            detail: format!("{shape:?} with {} masks", a.len()),
        });
    }
    let tape = f_hat.tape();
    let count = a.iter().flatten().filter(|&&b| b).count();
    if count == 0 {
        return tape.constant(Tensor::scalar(0.0));
    }
    let d = shape[2];
    let weights: Vec<f64> = a
        .iter()
        .flatten()
        .flat_map(|&b| std::iter::repeat_n(f64::from(u8::from(b)), d))
        .collect();
    let w = tape.constant(Tensor::new(shape, weights)?)?;
    let diff = f_hat.sub(f)?;
    diff.mul(diff)?.mul(w)?.sum()?.scale(1.0 / count as f64)
}

/// Mean cross-entropy of classifier logits against class indices.
pub fn class_loss<'t>(logits: Var<'t>, y: &[usize]) -> Result<Var<'t>, AdError> {
    logits.cross_entropy_with_logits(y)
}

/// `λ1·lr + λ2·lc + λ3·li`.
pub fn total_loss<'t>(lr: Var<'t>, lc: Var<'t>, li: Var<'t>, w: &LossWeights) -> Result<Var<'t>, AdError> {
    lr.scale(w.lambda1)?.add(lc.scale(w.lambda2)?)?.add(li.scale(w.lambda3)?)
}

/// Classifier pair for the conditional MI term: a joint classifier
/// `p(y | F̂^C, F̂^I)` and a marginal classifier `p(y | F̂^C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmiEstimator {
    pub params: ParamStore,
    pub adam: AdamConfig,
    state: AdamState,
}

const JOINT: [&str; 4] = ["joint.w1", "joint.b1", "joint.w2", "joint.b2"];
const MARGINAL: [&str; 4] = ["marg.w1", "marg.b1", "marg.w2", "marg.b2"];

impl CmiEstimator {
    /// Joint `2d → hidden → classes`, marginal `d → hidden → classes`.
    pub fn init(d: usize, hidden: usize, classes: usize, adam: AdamConfig, seed_value: u64) -> CmiEstimator {
        let shapes: Vec<(String, Vec<usize>)> = [(JOINT, 2 * d), (MARGINAL, d)]
            .iter()
            .flat_map(|(names, fan_in)| {
                [
                    (names[0].to_string(), vec![*fan_in, hidden]),
                    (names[1].to_string(), vec![hidden]),
                    (names[2].to_string(), vec![hidden, classes]),
                    (names[3].to_string(), vec![classes]),
                ]
            })
            .collect();
        let params = init_store(&shapes, &mut seed::rng(seed_value, seed::INIT, 1));
        let state = AdamState::new(&params);
        CmiEstimator { params, adam, state }
    }

    /// Default architecture for model width `d`: hidden 32, two classes.
    pub fn for_width(d: usize, adam: AdamConfig, seed_value: u64) -> CmiEstimator {
        CmiEstimator::init(d, 32, 2, adam, seed_value)
    }

    fn heads<'t>(&self, vars: &[Var<'t>], f_c: Var<'t>, f_i: Var<'t>) -> Result<(Var<'t>, Var<'t>), AdError> {
        let tape = f_c.tape();
        let joint_in = tape.concat(&[f_c, f_i], 1)?;
        let idx = |n: &str| {
            self.params
                .index_of(n)
                .map(|i| vars[i])
                .ok_or_else(|| AdError::MissingParam(n.to_string()))
        };
        let joint = mlp2(joint_in, idx(JOINT[0])?, idx(JOINT[1])?, idx(JOINT[2])?, idx(JOINT[3])?)?;
        let marg = mlp2(f_c, idx(MARGINAL[0])?, idx(MARGINAL[1])?, idx(MARGINAL[2])?, idx(MARGINAL[3])?)?;
        Ok((joint, marg))
    }

    /// Log-probabilities `[B, classes]` of the joint and marginal
    /// classifiers.
    pub fn log_probs(&self, f_c: &Tensor, f_i: &Tensor) -> Result<(Tensor, Tensor), AdError> {
        let tape = Tape::new();
        let vars = self.params.bind_frozen(&tape)?;
        let (joint, marg) = self.heads(&vars, tape.constant(f_c.clone())?, tape.constant(f_i.clone())?)?;
        Ok((joint.softmax_lastdim(None)?.log()?.value(), marg.softmax_lastdim(None)?.log()?.value()))
    }

    /// Conditional MI estimate on `tape`, differentiable with respect to
    /// `f_c` and `f_i`; estimator parameters enter as constants.
    pub fn estimate<'t>(&self, f_c: Var<'t>, f_i: Var<'t>, y: &[usize]) -> Result<Var<'t>, AdError> {
        let vars = self.params.bind_frozen(f_c.tape())?;
        cmi_from_heads(self.heads(&vars, f_c, f_i)?, y)
    }

    /// Plain-number estimate on fixed features.
    pub fn estimate_value(&self, f_c: &Tensor, f_i: &Tensor, y: &[usize]) -> Result<f64, AdError> {
        let tape = Tape::new();
        let est = self.estimate(tape.constant(f_c.clone())?, tape.constant(f_i.clone())?, y)?;
        Ok(est.value().item())
    }

    /// Summed cross-entropy of both classifiers on fixed features.
    pub fn estimator_loss(&self, f_c: &Tensor, f_i: &Tensor, y: &[usize]) -> Result<f64, AdError> {
        let tape = Tape::new();
        let vars = self.params.bind_frozen(&tape)?;
        let (joint, marg) = self.heads(&vars, tape.constant(f_c.clone())?, tape.constant(f_i.clone())?)?;
        Ok(joint.cross_entropy_with_logits(y)?.value().item() + marg.cross_entropy_with_logits(y)?.value().item())
    }

    /// `steps` Adam updates of both classifiers on fixed (detached)
    /// features. Returns the summed cross-entropy before each update.
    pub fn train(&mut self, f_c: &Tensor, f_i: &Tensor, y: &[usize], steps: usize) -> Result<Vec<f64>, AdError> {
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let tape = Tape::new();
            let vars = self.params.bind(&tape)?;
            let (joint, marg) = self.heads(&vars, tape.constant(f_c.clone())?, tape.constant(f_i.clone())?)?;
            let loss = joint.cross_entropy_with_logits(y)?.add(marg.cross_entropy_with_logits(y)?)?;
            tape.backward(loss)?;
            losses.push(loss.value().item());
            let grads: Vec<Option<Tensor>> = vars.iter().map(|v| v.grad()).collect();
            adam_step(&mut self.params, &grads, &mut self.state, &self.adam)?;
        }
        Ok(losses)
    }
}

/// `mean_i [log p_joint(y_i | ·) − log p_marg(y_i | ·)]`, i.e. the marginal
/// cross-entropy minus the joint cross-entropy.
fn cmi_from_heads<'t>((joint, marg): (Var<'t>, Var<'t>), y: &[usize]) -> Result<Var<'t>, AdError> {
    marg.cross_entropy_with_logits(y)?.sub(joint.cross_entropy_with_logits(y)?)
}

/// Classifier-difference estimate of `I(y; F̂^I | F̂^C)`. May be negative.
pub fn cmi_estimate<'t>(f_c: Var<'t>, f_i: Var<'t>, y: &[usize], est: &CmiEstimator) -> Result<Var<'t>, AdError> {
    est.estimate(f_c, f_i, y)
}

/// Runs `steps` estimator updates on detached features.
pub fn train_estimator(
    est: &mut CmiEstimator,
    f_c: &Tensor,
    f_i: &Tensor,
    y: &[usize],
    steps: usize,
) -> Result<Vec<f64>, AdError> {
    est.train(f_c, f_i, y, steps)
}
