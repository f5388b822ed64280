//! Small dense linear-algebra helpers shared by the geometry and problem code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 60;

/// Thin SVD `m = u · diag(s) · vᵀ` in canonical form: singular values sorted
/// descending and the first non-negligible entry of every right singular
/// vector made positive.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::SvdFailed);
    }
    if m.nrows() < m.ncols() {
        let t = thin_svd(&m.transpose())?;
        return Ok(canonical(t.v, t.s, t.u));
    }
    let (u, s, v) = jacobi(m)?;
    Ok(canonical(u, s, v))
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(thin_svd(m)?.s)
}

fn canonical(mut u: DMatrix<f64>, s: DVector<f64>, mut v: DMatrix<f64>) -> ThinSvd {
    for j in 0..v.ncols() {
        let flip = v
            .column(j)
            .iter()
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|&x| x < 0.0);
        if flip {
            v.column_mut(j).neg_mut();
            u.column_mut(j).neg_mut();
        }
    }
    ThinSvd { u, s, v }
}

/// One-sided (Hestenes) Jacobi SVD of a tall matrix. Unlike bidiagonal QR
/// iteration it keeps full relative accuracy when `m` is rank deficient.
/// Left singular vectors of numerically null directions are completed to an
/// orthonormal set.
fn jacobi(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (rows, n) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * (rows as f64).sqrt();
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdFailed);
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s = DVector::from_iterator(n, order.iter().map(|&j| norms[j]));
    let v = DMatrix::from_columns(&order.iter().map(|&j| v.column(j)).collect::<Vec<_>>());
    let floor = s.get(0).copied().unwrap_or(0.0) * n as f64 * f64::EPSILON;
    let mut u = DMatrix::<f64>::zeros(rows, n);
    let mut rank = 0;
    for (k, &j) in order.iter().enumerate() {
        if s[k] > floor && s[k] > 0.0 {
            u.set_column(k, &(a.column(j) / s[k]));
            rank = k + 1;
        }
    }
    complete_orthonormal(&mut u, rank);
    Ok((u, s, v))
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fills columns `from..` of `u` with unit vectors orthogonal to all earlier
/// columns, drawn from the standard basis by twice-repeated Gram-Schmidt.
fn complete_orthonormal(u: &mut DMatrix<f64>, from: usize) {
    let rows = u.nrows();
    let mut filled = from;
    let mut candidate = 0;
    while filled < u.ncols() && candidate < rows {
        let mut e = DVector::<f64>::zeros(rows);
        e[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for j in 0..filled {
                let c = u.column(j).dot(&e);
                e.axpy(-c, &u.column(j), 1.0);
            }
        }
        let norm = e.norm();
        if norm > 0.5 {
            u.set_column(filled, &(e / norm));
            filled += 1;
        }
    }
}

/// Q factor of a thin QR decomposition with the diagonal of R made positive,
/// so the result is the unique orthonormal basis closest in orientation to `m`.
pub(crate) fn orthonormal_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `‖mᵀm − I‖_F`
pub(crate) fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let gram = m.tr_mul(m);
    let r = gram.nrows();
    (gram - DMatrix::identity(r, r)).norm()
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

#[cfg(test)]
pub(crate) fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}
