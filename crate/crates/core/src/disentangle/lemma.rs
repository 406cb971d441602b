use super::losses::gce_rows;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::gnn::cross_entropy_rows;
use crate::matrix::Matrix;

/// Maximum absolute difference between the gradient of mean GCE and the
/// gradient of mean `p_y^q * CE` with `p_y^q` held constant, over every
/// parameter entry. `model` maps parameter leaves to an `n x C` probability
/// matrix. The two gradients come from separate tapes.
pub fn gce_grad_identity_check<F>(params: &[Matrix], labels: &[usize], q: f64, model: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let grads_of = |weighted: bool| -> Result<Vec<Matrix>> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
        let probs = model(&tape, &vars)?;
        let loss = if weighted {
            let ce = cross_entropy_rows(probs, labels)?;
            let pq = ce.value().map(|l| (-q * l).exp());
            ce.mul(tape.constant(pq))?.mean()
        } else {
            gce_rows(probs, labels, q)?.mean()
        };
        let g = tape.backward(loss)?;
        Ok(vars.iter().map(|&v| g.get(v)).collect())
    };
    let a = grads_of(false)?;
    let b = grads_of(true)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| x.zip_map(y, |u, v| (u - v).abs()).max_abs())
        .fold(0.0, f64::max))
}
