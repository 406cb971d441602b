use crate::autodiff::{center_gram_matrix, rbf_gram_matrix, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Median pairwise Euclidean distance between rows, or 1 when that median
/// is zero.
pub fn median_bandwidth(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, &mut m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

fn check_rows(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a.0 != b.0 {
        return Err(Error::ShapeMismatch { op: "hsic", lhs: a, rhs: b });
    }
    if a.0 < 2 {
        return Err(Error::domain(format!("hsic needs at least 2 rows, got {}", a.0)));
    }
    Ok(())
}

/// Biased estimator `trace(K_a H K_b H) / (n - 1)^2` with radial kernels at
/// median-heuristic bandwidths. Rows of `a` and `b` are paired samples.
pub fn hsic<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    hsic_at(a, b, (median_bandwidth(&a.value()), median_bandwidth(&b.value())))
}

/// [`hsic`] at given kernel bandwidths.
pub fn hsic_at<'t>(a: Var<'t>, b: Var<'t>, bandwidths: (f64, f64)) -> Result<Var<'t>> {
    check_rows(a.shape(), b.shape())?;
    let n = a.rows() as f64;
    let ka = a.rbf_gram(bandwidths.0)?.center_gram()?;
    let kb = b.rbf_gram(bandwidths.1)?.center_gram()?;
    // both centered grams are symmetric, so the trace is an elementwise sum
    Ok(ka.mul(kb)?.sum().scale(1.0 / ((n - 1.0) * (n - 1.0))))
}

/// [`hsic`] on plain matrices.
pub fn hsic_value(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_rows(a.shape(), b.shape())?;
    let n = a.rows() as f64;
    let ka = center_gram_matrix(&rbf_gram_matrix(a, median_bandwidth(a)));
    let kb = center_gram_matrix(&rbf_gram_matrix(b, median_bandwidth(b)));
    let s: f64 = ka.as_slice().iter().zip(kb.as_slice()).map(|(x, y)| x * y).sum();
    Ok(s / ((n - 1.0) * (n - 1.0)))
}
