use crate::tensor_ad::{AdError, Var};

/// `x · w + b` over the last axis of a rank-2 or rank-3 input.
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>, AdError> {
    project(x, w)?.add_bias(b)
}

/// `x · w` over the last axis of a rank-2 or rank-3 input.
pub fn project<'t>(x: Var<'t>, w: Var<'t>) -> Result<Var<'t>, AdError> {
    let s = x.shape();
    let out = *w.shape().last().unwrap_or(&0);
    match s.len() {
        2 => x.matmul(w),
        3 => {
            let flat = x.reshape(&[s[0] * s[1], s[2]])?;
            flat.matmul(w)?.reshape(&[s[0], s[1], out])
        }
        r => Err(AdError::Shape {
            op: "linear",
            detail: format!("rank {r} input"),
        }),
    }
}

/// Two-layer perceptron with a ReLU hidden layer.
pub fn mlp2<'t>(x: Var<'t>, w1: Var<'t>, b1: Var<'t>, w2: Var<'t>, b2: Var<'t>) -> Result<Var<'t>, AdError> {
    linear(linear(x, w1, b1)?.relu()?, w2, b2)
}
