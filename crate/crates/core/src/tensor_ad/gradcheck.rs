use super::{AdError, Tape, Tensor, Var};
use crate::par::{self, Exec};

/// Central-difference gradient of a scalar function of one tensor.
pub fn central_difference<F>(exec: Exec, f: F, x: &Tensor, eps: f64) -> Result<Tensor, AdError>
where
    F: Fn(&Tensor) -> Result<f64, AdError> + Sync + Send,
{
    let values = par::try_map_range(exec, x.numel(), |i| {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        Ok((f(&plus)? - f(&minus)?) / (2.0 * eps))
    })?;
    Tensor::new(x.shape().to_vec(), values)
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn eval_scalar<F>(f: &F, x: &Tensor) -> Result<f64, AdError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, AdError>,
{
    let tape = Tape::new();
    let v = tape.constant(x.clone())?;
    let out = f(&tape, v)?;
    let value = out.value();
    if value.numel() != 1 {
        return Err(AdError::Usage(format!(
            "grad_check needs a scalar function, got shape {:?}",
            value.shape()
        )));
    }
    Ok(value.item())
}

/// Compares the tape gradient of `f` at `x` with central differences and
/// returns the maximum relative error over coordinates.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, AdError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, AdError> + Sync + Send,
{
    let tape = Tape::new();
    let leaf = tape.leaf(x.clone())?;
    let out = f(&tape, leaf)?;
    tape.backward(out)?;
    let analytic = leaf.grad().unwrap_or_else(|| Tensor::zeros(x.shape()));
    let numeric = central_difference(Exec::default(), |t| eval_scalar(&f, t), x, eps)?;
    Ok(max_relative_error(analytic.data(), numeric.data()))
}

/// Outcome of one finite-difference suite.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub max_rel_error: f64,
}

fn random_tensor(rng: &mut crate::seed::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    use rand::Rng as _;
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// `sum(out ⊙ weights)`: a generic scalar probe of a tensor-valued op.
fn probe<'t>(out: Var<'t>, weights: &Tensor) -> Result<Var<'t>, AdError> {
    let w = out.tape().constant(weights.clone())?;
    out.mul(w)?.sum()
}

struct Fixtures {
    a23: Tensor,
    b23: Tensor,
    w23: Tensor,
    b3: Tensor,
    m34: Tensor,
    w24: Tensor,
    x234: Tensor,
    y245: Tensor,
    w235: Tensor,
    w243: Tensor,
    w53: Tensor,
    w222: Tensor,
    w323: Tensor,
    pos23: Tensor,
    relu23: Tensor,
    logits43: Tensor,
    w43: Tensor,
    softmax_mask: Tensor,
    x45: Tensor,
    w45: Tensor,
    g5: Tensor,
    be5: Tensor,
}

const SELECT_MASK: [bool; 6] = [true, false, false, true, true, false];
const CE_TARGETS: [usize; 4] = [0, 2, 1, 2];

type InputFn = fn(&Fixtures) -> &Tensor;
type BodyFn = for<'t> fn(&Fixtures, &'t Tape, Var<'t>) -> Result<Var<'t>, AdError>;

/// Runs a central-difference check of every primitive op, against each of
/// its differentiable inputs.
pub fn op_suites(seed: u64, eps: f64) -> Result<Vec<SuiteResult>, AdError> {
    let mut rng = crate::seed::rng(seed, "gradcheck", 0);
    let r = &mut rng;
    let mut relu23 = random_tensor(r, &[2, 3], 0.2, 1.0);
    // alternate signs, keeping every input away from the kink at 0
    relu23.data_mut().iter_mut().step_by(2).for_each(|v| *v = -*v);
    let mut softmax_mask = Tensor::zeros(&[4, 3]);
    for i in [1, 5, 6] {
        softmax_mask.data_mut()[i] = -super::MASK_LARGE;
    }
    let fx = Fixtures {
        a23: random_tensor(r, &[2, 3], -1.0, 1.0),
        b23: random_tensor(r, &[2, 3], -1.0, 1.0),
        w23: random_tensor(r, &[2, 3], -1.0, 1.0),
        b3: random_tensor(r, &[3], -1.0, 1.0),
        m34: random_tensor(r, &[3, 4], -1.0, 1.0),
        w24: random_tensor(r, &[2, 4], -1.0, 1.0),
        x234: random_tensor(r, &[2, 3, 4], -1.0, 1.0),
        y245: random_tensor(r, &[2, 4, 5], -1.0, 1.0),
        w235: random_tensor(r, &[2, 3, 5], -1.0, 1.0),
        w243: random_tensor(r, &[2, 4, 3], -1.0, 1.0),
        w53: random_tensor(r, &[5, 3], -1.0, 1.0),
        w222: random_tensor(r, &[2, 2, 2], -1.0, 1.0),
        w323: random_tensor(r, &[3, 2, 3], -1.0, 1.0),
        pos23: random_tensor(r, &[2, 3], 0.5, 2.0),
        relu23,
        logits43: random_tensor(r, &[4, 3], -2.0, 2.0),
        w43: random_tensor(r, &[4, 3], -1.0, 1.0),
        softmax_mask,
        x45: random_tensor(r, &[4, 5], -2.0, 2.0),
        w45: random_tensor(r, &[4, 5], -1.0, 1.0),
        g5: random_tensor(r, &[5], 0.5, 1.5),
        be5: random_tensor(r, &[5], -0.5, 0.5),
    };

    fn c<'t>(t: &'t Tape, x: &Tensor) -> Result<Var<'t>, AdError> {
        t.constant(x.clone())
    }

    let suites: Vec<(&str, InputFn, BodyFn)> = vec![
        ("add[lhs]", |f| &f.a23, |f, t, v| probe(v.add(c(t, &f.b23)?)?, &f.w23)),
        ("add[rhs]", |f| &f.b23, |f, t, v| probe(c(t, &f.a23)?.add(v)?, &f.w23)),
        ("sub[lhs]", |f| &f.a23, |f, t, v| probe(v.sub(c(t, &f.b23)?)?, &f.w23)),
        ("sub[rhs]", |f| &f.b23, |f, t, v| probe(c(t, &f.a23)?.sub(v)?, &f.w23)),
        ("hadamard[lhs]", |f| &f.a23, |f, t, v| probe(v.mul(c(t, &f.b23)?)?, &f.w23)),
        ("hadamard[rhs]", |f| &f.b23, |f, t, v| probe(c(t, &f.a23)?.mul(v)?, &f.w23)),
        ("scale", |f| &f.a23, |f, _t, v| probe(v.scale(-1.7)?, &f.w23)),
        ("add_bias[x]", |f| &f.a23, |f, t, v| probe(v.add_bias(c(t, &f.b3)?)?, &f.w23)),
        ("add_bias[bias]", |f| &f.b3, |f, t, v| probe(c(t, &f.a23)?.add_bias(v)?, &f.w23)),
        ("matmul[lhs]", |f| &f.a23, |f, t, v| probe(v.matmul(c(t, &f.m34)?)?, &f.w24)),
        ("matmul[rhs]", |f| &f.m34, |f, t, v| probe(c(t, &f.a23)?.matmul(v)?, &f.w24)),
        ("bmm[lhs]", |f| &f.x234, |f, t, v| probe(v.bmm(c(t, &f.y245)?)?, &f.w235)),
        ("bmm[rhs]", |f| &f.y245, |f, t, v| probe(c(t, &f.x234)?.bmm(v)?, &f.w235)),
        ("transpose", |f| &f.x234, |f, _t, v| probe(v.transpose()?, &f.w243)),
        ("reshape", |f| &f.a23, |f, _t, v| probe(v.reshape(&[3, 2])?.transpose()?, &f.w23)),
        ("concat", |f| &f.a23, |f, t, v| {
            let other = c(t, &f.m34)?.transpose()?.slice(0, 0, 3)?;
            probe(t.concat(&[v, other], 0)?, &f.w53)
        }),
        ("slice", |f| &f.x234, |f, _t, v| probe(v.slice(2, 1, 2)?.slice(1, 1, 2)?, &f.w222)),
        ("select[on]", |f| &f.a23, |f, t, v| probe(t.select(v, c(t, &f.b23)?, &SELECT_MASK)?, &f.w23)),
        ("select[off]", |f| &f.b23, |f, t, v| probe(t.select(c(t, &f.a23)?, v, &SELECT_MASK)?, &f.w23)),
        ("expand", |f| &f.a23, |f, _t, v| probe(v.expand(3)?, &f.w323)),
        ("relu", |f| &f.relu23, |f, _t, v| probe(v.relu()?, &f.w23)),
        ("log", |f| &f.pos23, |f, _t, v| probe(v.log()?, &f.w23)),
        ("softmax_lastdim", |f| &f.logits43, |f, _t, v| {
            probe(v.softmax_lastdim(Some(&f.softmax_mask))?, &f.w43)
        }),
        ("sum", |f| &f.a23, |_f, _t, v| v.mul(v)?.sum()),
        ("mean", |f| &f.a23, |_f, _t, v| v.mul(v)?.mean()),
        ("mse[pred]", |f| &f.a23, |f, t, v| v.mse(c(t, &f.b23)?)),
        ("mse[target]", |f| &f.b23, |f, t, v| c(t, &f.a23)?.mse(v)),
        ("cross_entropy", |f| &f.logits43, |_f, _t, v| v.cross_entropy_with_logits(&CE_TARGETS)),
        ("layer_norm[x]", |f| &f.x45, |f, t, v| {
            probe(v.layer_norm(c(t, &f.g5)?, c(t, &f.be5)?)?, &f.w45)
        }),
        ("layer_norm[gamma]", |f| &f.g5, |f, t, v| {
            probe(c(t, &f.x45)?.layer_norm(v, c(t, &f.be5)?)?, &f.w45)
        }),
        ("layer_norm[beta]", |f| &f.be5, |f, t, v| {
            probe(c(t, &f.x45)?.layer_norm(c(t, &f.g5)?, v)?, &f.w45)
        }),
    ];

    suites
        .into_iter()
        .map(|(name, input, body)| {
            let fx = &fx;
            let err = grad_check(|t, v| body(fx, t, v), input(fx), eps)?;
            Ok(SuiteResult {
                name: name.to_string(),
                max_rel_error: err,
            })
        })
        .collect()
}
