//! Exact geometry of the Grassmann manifold Gr(r, d).
//!
//! A point is an r-dimensional subspace of ℝ^d, stored as a d×r matrix `U`
//! with orthonormal columns; `U` and `U·O` (O orthogonal r×r) are the same
//! point. Tangent vectors are stored as horizontal lifts: d×r matrices `ξ`
//! with `Uᵀξ = 0`. A tangent vector is tied to the particular representative
//! `U` it was built at; [`TangentVector::to_representative`] moves it to a
//! different representative of the same subspace.
//!
//! Geodesics, parallel translation and the logarithm are the closed forms
//! built on the thin SVD of the direction, see [`Geodesic`].

mod karcher;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

pub use karcher::{karcher_mean, KarcherMean};

/// Tolerance on `‖UᵀU − I‖_F` accepted when validating a point.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Smallest singular value of `Uᵀ·Z` below which `Z` is treated as lying on
/// the cut locus of `U`.
pub const CUT_LOCUS_TOL: f64 = 1e-10;

// Relative tolerance for the horizontality precondition on tangent inputs.
const HORIZONTAL_TOL: f64 = 1e-8;

// exp_map re-orthonormalizes when the result drifts further than this.
const DRIFT_TOL: f64 = 1e-12;

// Two representatives closer than this span the same subspace.
const SAME_SUBSPACE_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct GrassmannPoint {
    mat: Arc<DMatrix<f64>>,
}

impl GrassmannPoint {
    /// Wraps a d×r matrix that already has orthonormal columns.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        check_shape(&mat)?;
        let defect = linalg::orthonormality_defect(&mat);
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidPoint(format!(
                "columns are not orthonormal (‖UᵀU − I‖ = {defect:.3e})"
            )));
        }
        Ok(Self::from_orthonormal(mat))
    }

    /// The point spanned by the columns of an arbitrary full-rank d×r matrix.
    pub fn orthonormalize(mat: DMatrix<f64>) -> Result<Self> {
        check_shape(&mat)?;
        let sv = linalg::singular_values(&mat)?;
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smallest > 1e-12 * sv[0].max(1.0)) {
            return Err(Error::InvalidPoint("matrix is rank deficient".into()));
        }
        Ok(Self::from_orthonormal(linalg::orthonormal_factor(&mat)))
    }

    /// A uniformly distributed random subspace.
    pub fn random<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<Self> {
        if r == 0 || r >= d {
            return Err(Error::InvalidPoint(format!("need 1 <= r < d, got d={d}, r={r}")));
        }
        Ok(Self::from_orthonormal(linalg::orthonormal_factor(&linalg::gaussian_matrix(d, r, rng))))
    }

    pub(crate) fn from_orthonormal(mat: DMatrix<f64>) -> Self {
        Self { mat: Arc::new(mat) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn ambient_dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn rank(&self) -> usize {
        self.mat.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mat.shape()
    }

    /// True when both values hold the very same matrix representative.
    pub fn same_representative(&self, other: &GrassmannPoint) -> bool {
        Arc::ptr_eq(&self.mat, &other.mat) || *self.mat == *other.mat
    }

    /// The representative `U·O` of the same subspace.
    pub fn rotated(&self, o: &DMatrix<f64>) -> Result<Self> {
        let r = self.rank();
        if o.shape() != (r, r) {
            return Err(Error::Dimension {
                expected: (r, r),
                found: o.shape(),
            });
        }
        Self::new(&*self.mat * o)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::orthonormality_defect(&self.mat)
    }

    fn check_same_shape(&self, other: &GrassmannPoint) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

fn check_shape(mat: &DMatrix<f64>) -> Result<()> {
    let (d, r) = mat.shape();
    if r == 0 || r >= d {
        return Err(Error::InvalidPoint(format!("need 1 <= r < d, got d={d}, r={r}")));
    }
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidPoint("non-finite entries".into()));
    }
    Ok(())
}

/// A horizontal tangent vector attached to a specific representative.
#[derive(Clone, Debug)]
pub struct TangentVector {
    mat: DMatrix<f64>,
    base: GrassmannPoint,
}

impl TangentVector {
    /// Validates shape and horizontality (`baseᵀ·mat ≈ 0`).
    pub fn new(base: &GrassmannPoint, mat: DMatrix<f64>) -> Result<Self> {
        if mat.shape() != base.shape() {
            return Err(Error::Dimension {
                expected: base.shape(),
                found: mat.shape(),
            });
        }
        let tv = Self::from_horizontal(base, mat);
        tv.check_horizontal()?;
        Ok(tv)
    }

    pub fn zero(base: &GrassmannPoint) -> Self {
        let (d, r) = base.shape();
        Self::from_horizontal(base, DMatrix::zeros(d, r))
    }

    /// Gaussian matrix projected onto the horizontal space.
    pub fn random<R: Rng + ?Sized>(base: &GrassmannPoint, rng: &mut R) -> Self {
        let (d, r) = base.shape();
        let g = linalg::gaussian_matrix(d, r, rng);
        Self::from_horizontal(base, horizontal_part(base.matrix(), g))
    }

    pub(crate) fn from_horizontal(base: &GrassmannPoint, mat: DMatrix<f64>) -> Self {
        Self {
            mat,
            base: base.clone(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn base(&self) -> &GrassmannPoint {
        &self.base
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.mat.norm_squared()
    }

    /// `‖baseᵀ·ξ‖_F`
    pub fn horizontality_defect(&self) -> f64 {
        self.base.matrix().tr_mul(&self.mat).norm()
    }

    pub fn inner(&self, other: &TangentVector) -> Result<f64> {
        self.check_same_base(other)?;
        Ok(self.mat.dot(&other.mat))
    }

    pub fn scaled(&self, alpha: f64) -> TangentVector {
        Self::from_horizontal(&self.base, &self.mat * alpha)
    }

    pub fn add(&self, other: &TangentVector) -> Result<TangentVector> {
        self.check_same_base(other)?;
        Ok(Self::from_horizontal(&self.base, &self.mat + &other.mat))
    }

    pub fn sub(&self, other: &TangentVector) -> Result<TangentVector> {
        self.check_same_base(other)?;
        Ok(Self::from_horizontal(&self.base, &self.mat - &other.mat))
    }

    /// Re-expresses the vector at another representative `target = base·O`
    /// of the same subspace (the horizontal lift at `target` is `ξ·Oᵀ`).
    pub fn to_representative(&self, target: &GrassmannPoint) -> Result<TangentVector> {
        if self.base.same_representative(target) {
            return Ok(Self::from_horizontal(target, self.mat.clone()));
        }
        self.base.check_same_shape(target)?;
        let o = target.matrix().tr_mul(self.base.matrix());
        let mismatch = (self.base.matrix() - target.matrix() * &o).norm();
        if mismatch > SAME_SUBSPACE_TOL {
            return Err(Error::Contract(format!(
                "representatives span different subspaces (mismatch {mismatch:.3e})"
            )));
        }
        Ok(self.lift_to(target))
    }

    /// [`to_representative`](Self::to_representative) without the subspace
    /// check; `target` must span (numerically) the same subspace as the base.
    pub(crate) fn lift_to(&self, target: &GrassmannPoint) -> TangentVector {
        let o = target.matrix().tr_mul(self.base.matrix());
        let lifted = &self.mat * o.transpose();
        Self::from_horizontal(target, horizontal_part(target.matrix(), lifted))
    }

    fn check_same_base(&self, other: &TangentVector) -> Result<()> {
        if !self.base.same_representative(&other.base) {
            return Err(Error::Contract("tangent vectors live at different base points".into()));
        }
        Ok(())
    }

    fn check_horizontal(&self) -> Result<()> {
        let defect = self.horizontality_defect();
        if !(defect <= HORIZONTAL_TOL * self.norm().max(1.0)) {
            return Err(Error::Contract(format!(
                "matrix is not horizontal at its base (‖Uᵀξ‖ = {defect:.3e})"
            )));
        }
        Ok(())
    }
}

/// `(I − U·Uᵀ)·G`
fn horizontal_part(u: &DMatrix<f64>, g: DMatrix<f64>) -> DMatrix<f64> {
    let coeff = u.tr_mul(&g);
    g - u * coeff
}

/// Horizontal projection `(I − U·Uᵀ)·G` of an ambient d×r matrix. Used to
/// turn Euclidean gradients into Riemannian ones.
pub fn project_tangent(base: &GrassmannPoint, ambient: DMatrix<f64>) -> Result<TangentVector> {
    if ambient.shape() != base.shape() {
        return Err(Error::Dimension {
            expected: base.shape(),
            found: ambient.shape(),
        });
    }
    Ok(TangentVector::from_horizontal(base, horizontal_part(base.matrix(), ambient)))
}

/// The geodesic `t ↦ U(t)` leaving `U(0)` with velocity `ξ = W·Σ·Vᵀ`:
///
/// ```text
/// U(t) = [U(0)·V  W] · [cos tΣ; sin tΣ] · Vᵀ
/// ```
///
/// together with the parallel translation along it,
///
/// ```text
/// ζ(t) = ([U(0)·V  W] · [−sin tΣ; cos tΣ] · Wᵀ + (I − W·Wᵀ)) · ζ.
/// ```
#[derive(Clone, Debug)]
pub struct Geodesic {
    base: GrassmannPoint,
    base_v: DMatrix<f64>,
    w: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
}

impl Geodesic {
    /// The minimizing geodesic from `base` (t = 0) to `target` (t = 1).
    ///
    /// Rather than inverting `UᵀZ`, the target is first rotated to the
    /// representative `Y = Z·R·Qᵀ` (with `UᵀZ = Q·S·Rᵀ`), for which
    /// `Y = U·V·cos Θ·Vᵀ + W·sin Θ·Vᵀ`; the angles come from `atan2` of the
    /// sines and cosines, which stays accurate up to the cut locus.
    pub fn between(base: &GrassmannPoint, target: &GrassmannPoint) -> Result<Self> {
        base.check_same_shape(target)?;
        let u = base.matrix();
        let cross = linalg::thin_svd(&u.tr_mul(target.matrix()))?;
        let smallest = cross.s.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smallest >= CUT_LOCUS_TOL) {
            return Err(Error::CutLocus {
                min_singular_value: smallest,
            });
        }
        let aligned = target.matrix() * (&cross.v * cross.u.transpose());
        let overlap = u.tr_mul(&aligned);
        let normal = &aligned - u * &overlap;
        let svd = linalg::thin_svd(&normal)?;
        let cosines = svd.v.tr_mul(&overlap) * &svd.v;
        let sigma = DVector::from_iterator(
            svd.s.len(),
            svd.s.iter().enumerate().map(|(i, &sin)| sin.atan2(cosines[(i, i)])),
        );
        Ok(Self {
            base: base.clone(),
            base_v: u * &svd.v,
            w: horizontal_part(u, svd.u),
            sigma,
            v: svd.v,
        })
    }

    /// Initial velocity `W·Σ·Vᵀ`.
    pub fn velocity(&self) -> TangentVector {
        let mut ws = self.w.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            ws.column_mut(j).scale_mut(s);
        }
        TangentVector::from_horizontal(&self.base, ws * self.v.transpose())
    }

    pub fn new(xi: &TangentVector) -> Result<Self> {
        xi.check_horizontal()?;
        let svd = linalg::thin_svd(xi.matrix())?;
        Ok(Self {
            base: xi.base().clone(),
            base_v: xi.base().matrix() * &svd.v,
            w: svd.u,
            sigma: svd.s,
            v: svd.v,
        })
    }

    pub fn base(&self) -> &GrassmannPoint {
        &self.base
    }

    /// Singular values of the initial velocity.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn point(&self, t: f64) -> Result<GrassmannPoint> {
        if !t.is_finite() {
            return Err(Error::Contract(format!("non-finite geodesic time {t}")));
        }
        let cos = DMatrix::from_diagonal(&self.sigma.map(|s| (t * s).cos()));
        let sin = DMatrix::from_diagonal(&self.sigma.map(|s| (t * s).sin()));
        let mat = (&self.base_v * cos + &self.w * sin) * self.v.transpose();
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(Error::SvdFailed);
        }
        if linalg::orthonormality_defect(&mat) > DRIFT_TOL {
            return Ok(GrassmannPoint::from_orthonormal(linalg::orthonormal_factor(&mat)));
        }
        Ok(GrassmannPoint::from_orthonormal(mat))
    }

    /// Parallel translation of `zeta` (attached to the geodesic's base) to
    /// time `t`; the result is attached to `self.point(t)`.
    pub fn transport(&self, zeta: &TangentVector, t: f64) -> Result<TangentVector> {
        if !zeta.base().same_representative(&self.base) {
            return Err(Error::Contract(
                "transported vector is not attached to the geodesic's base".into(),
            ));
        }
        let end = self.point(t)?;
        let mixed = self.w.tr_mul(zeta.matrix());
        let neg_sin = DMatrix::from_diagonal(&self.sigma.map(|s| -(t * s).sin()));
        let cos_m1 = DMatrix::from_diagonal(&self.sigma.map(|s| (t * s).cos() - 1.0));
        let correction = (&self.base_v * neg_sin + &self.w * cos_m1) * mixed;
        Ok(TangentVector::from_horizontal(&end, zeta.matrix() + correction))
    }
}

/// `Exp_U(t·ξ)`.
pub fn exp_map(base: &GrassmannPoint, xi: &TangentVector, t: f64) -> Result<GrassmannPoint> {
    if !xi.base().same_representative(base) {
        return Err(Error::Contract("tangent vector is not attached to the base point".into()));
    }
    if !t.is_finite() {
        return Err(Error::Contract(format!("non-finite step {t}")));
    }
    Geodesic::new(xi)?.point(t)
}

/// `Log_U(Z) = W·arctan(Σ)·Vᵀ` where `W·Σ·Vᵀ` is the thin SVD of
/// `(Z − U·UᵀZ)·(UᵀZ)⁻¹`, evaluated without the inverse as in
/// [`Geodesic::between`]. Independent of the representative chosen for `Z`.
pub fn log_map(base: &GrassmannPoint, target: &GrassmannPoint) -> Result<TangentVector> {
    Ok(Geodesic::between(base, target)?.velocity())
}

/// Parallel translation of `zeta` along the geodesic `t ↦ Exp_U(t·ξ)` to
/// `t = 1`. The result is attached to `exp_map(base, xi, 1)`.
pub fn parallel_transport(
    zeta: &TangentVector,
    base: &GrassmannPoint,
    xi: &TangentVector,
) -> Result<TangentVector> {
    if !zeta.base().same_representative(base) || !xi.base().same_representative(base) {
        return Err(Error::Contract("transport inputs are attached to different base points".into()));
    }
    Geodesic::new(xi)?.transport(zeta, 1.0)
}

/// Principal angles between the subspaces, ascending.
///
/// Cosines come from the singular values of `aᵀb`; small angles are
/// recovered from the sines (singular values of `b − a·aᵀb`) where `arccos`
/// loses half the digits.
pub fn principal_angles(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<Vec<f64>> {
    a.check_same_shape(b)?;
    let cross = a.matrix().tr_mul(b.matrix());
    let cosines = linalg::singular_values(&cross)?;
    let normal = b.matrix() - a.matrix() * &cross;
    let mut sines: Vec<f64> = linalg::singular_values(&normal)?.iter().copied().collect();
    sines.sort_by(f64::total_cmp);
    let mut cosines: Vec<f64> = cosines.iter().copied().collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    Ok(cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            let c = c.clamp(0.0, 1.0);
            if c * c >= 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.acos()
            }
        })
        .collect())
}

/// Geodesic distance `√(Σ θᵢ²)` over the principal angles.
pub fn distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    if a.same_representative(b) {
        return Ok(0.0);
    }
    Ok(principal_angles(a, b)?.iter().map(|t| t * t).sum::<f64>().sqrt())
}
