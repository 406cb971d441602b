//! Central finite-difference checks for tape gradients.

use super::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;

/// Entries whose gradients are both smaller than this are compared in
/// absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub entries: usize,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares the tape gradient of `f` at `inputs` with central differences of
/// step `h`. `f` must build a scalar from the given leaves.
pub fn check<F>(inputs: &[Matrix], h: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    run(inputs, h, f, Tape::new, |_| Tape::new())
}

/// [`check`] for functions that detach intermediate values: every detached
/// value is held at its value at `inputs` while differencing, which is the
/// function whose derivative the tape computes.
pub fn check_with_detached<F>(inputs: &[Matrix], h: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    run(inputs, h, f, Tape::recording_detached, |base| {
        Tape::replaying_detached(base.detached_values())
    })
}

fn run<F>(
    inputs: &[Matrix],
    h: f64,
    f: F,
    base_tape: impl Fn() -> Tape,
    probe_tape: impl Fn(&Tape) -> Tape,
) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = base_tape();
    let eval = |xs: &[Matrix]| -> Result<f64> {
        let probe = probe_tape(&tape);
        let vars: Vec<Var<'_>> = xs.iter().map(|x| probe.constant(x.clone())).collect();
        Ok(f(&probe, &vars)?.item())
    };

    let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheck {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        entries: 0,
    };
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for i in 0..probe[k].len() {
            let orig = probe[k].as_slice()[i];
            probe[k].as_mut_slice()[i] = orig + h;
            let up = eval(&probe)?;
            probe[k].as_mut_slice()[i] = orig - h;
            let down = eval(&probe)?;
            probe[k].as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice()[i];
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
            report.entries += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Matrix {
        Matrix::from_rows(&[vec![0.4, -1.2], vec![0.9, 2.0]])
    }

    #[test]
    fn smooth_function_passes() {
        let r = check(&[x()], 1e-5, |_, v| Ok(v[0].exp().mul(v[0])?.sum())).unwrap();
        assert!(r.max_rel_error < 1e-7);
        assert_eq!(r.entries, 4);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // d/dx sum(x * stop(x)) is x on the tape but 2x by differencing
        fn f<'t>(_: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
            Ok(v[0].mul(v[0].detach())?.sum())
        }
        assert!(check(&[x()], 1e-5, f).unwrap().max_rel_error > 0.3);
        assert!(check_with_detached(&[x()], 1e-5, f).unwrap().max_rel_error < 1e-7);
    }

    #[test]
    fn replay_substitutes_recorded_values() {
        let base = Tape::recording_detached();
        base.constant(Matrix::scalar(3.0)).detach();
        let replay = Tape::replaying_detached(base.detached_values());
        assert_eq!(replay.constant(Matrix::scalar(-5.0)).detach().item(), 3.0);
        assert!(Tape::new().detached_values().is_empty());
    }
}
