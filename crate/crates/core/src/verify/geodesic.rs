use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{GrassmannPoint, TangentVector};

/// Integrates the horizontal geodesic equation `U'' = −U·(U'ᵀU')` from
/// `(U, ξ)` to time `t` with `steps` classical Runge–Kutta steps. After each
/// step `U` is replaced by its polar factor and `U'` by its horizontal part.
pub fn integrate_geodesic(xi: &TangentVector, t: f64, steps: usize) -> Result<GrassmannPoint> {
    if steps == 0 {
        return Err(Error::Config("geodesic integration needs at least one step".into()));
    }
    let h = t / steps as f64;
    let mut u = xi.base().matrix().clone();
    let mut v = xi.matrix().clone();
    let accel = |u: &DMatrix<f64>, v: &DMatrix<f64>| -(u * v.tr_mul(v));
    for _ in 0..steps {
        let (k1u, k1v) = (v.clone(), accel(&u, &v));
        let (u2, v2) = (&u + &k1u * (h / 2.0), &v + &k1v * (h / 2.0));
        let (k2u, k2v) = (v2.clone(), accel(&u2, &v2));
        let (u3, v3) = (&u + &k2u * (h / 2.0), &v + &k2v * (h / 2.0));
        let (k3u, k3v) = (v3.clone(), accel(&u3, &v3));
        let (u4, v4) = (&u + &k3u * h, &v + &k3v * h);
        let (k4u, k4v) = (v4.clone(), accel(&u4, &v4));
        u += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        u = polar_factor(u)?;
        v = &v - &u * u.tr_mul(&v);
    }
    GrassmannPoint::new(u)
}

fn polar_factor(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok(u * v_t),
        _ => Err(Error::SvdFailed),
    }
}
