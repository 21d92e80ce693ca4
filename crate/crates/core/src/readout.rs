//! Least-squares readout training.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-norm least-squares solution of `A w ≈ y`.
///
/// `A` is reduced with a Householder QR first, and the small triangular
/// factor is diagonalized with one-sided Jacobi rotations, which keeps small
/// singular values accurate. Singular values below `max(k, n) · eps · σ_max`
/// are treated as zero.
pub fn fit_readout(activations: &DMatrix<f64>, targets: &[f64]) -> Result<Vec<f64>> {
    let (k, n) = activations.shape();
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty activation matrix".into()));
    }
    if targets.len() != k {
        return Err(Error::LengthMismatch {
            left: k,
            right: targets.len(),
        });
    }
    if !activations.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("activation matrix"));
    }
    if !targets.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("readout targets"));
    }

    let qr = activations.clone().qr();
    let mut qty = DVector::from_column_slice(targets);
    qr.q_tr_mul(&mut qty);
    let r = qr.r();
    let rhs = qty.rows(0, r.nrows()).into_owned();

    // R V = G with mutually orthogonal columns g_j = σ_j u_j.
    let (g, v) = jacobi_orthogonalize(r);
    let sigma: Vec<f64> = g.column_iter().map(|c| c.norm()).collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let tol = sigma_max * (k.max(n) as f64) * f64::EPSILON;
    let mut w = DVector::zeros(n);
    for (j, &s) in sigma.iter().enumerate() {
        if s > tol && s > 0.0 {
            let coef = g.column(j).dot(&rhs) / (s * s);
            w.axpy(coef, &v.column(j), 1.0);
        }
    }
    if !w.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("readout weights"));
    }
    Ok(w.iter().copied().collect())
}

const MAX_SWEEPS: usize = 80;

/// Hestenes one-sided Jacobi: rotates column pairs of `g` until all pairs are
/// orthogonal to working precision, accumulating the rotations in `v`.
fn jacobi_orthogonalize(mut g: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n) = g.shape();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut norms: Vec<f64> = g.column_iter().map(|c| c.norm_squared()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = g.column(p).dot(&g.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_columns(g.as_mut_slice(), m, p, q, c, s);
                rotate_columns(v.as_mut_slice(), n, p, q, c, s);
                norms[p] = g.column(p).norm_squared();
                norms[q] = g.column(q).norm_squared();
            }
        }
        if !rotated {
            break;
        }
    }
    (g, v)
}

/// `(x_p, x_q) <- (c x_p - s x_q, s x_p + c x_q)` on a column-major buffer.
fn rotate_columns(data: &mut [f64], rows: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * rows);
    let xp = &mut head[p * rows..(p + 1) * rows];
    let xq = &mut tail[..rows];
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}
