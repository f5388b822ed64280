use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use super::{check_batch, check_point, Problem};
use crate::error::{Error, Result};
use crate::manifold::{project_tangent, GrassmannPoint, TangentVector};

/// Ridge added to the per-column least-squares solve.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Observed entries of one column: row indices and their values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColumnEntries {
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
}

impl ColumnEntries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Low-rank matrix completion on the column space:
///
/// ```text
/// f(U) = (1/N)·Σₙ min_a ‖P_Ωₙ(U·a) − P_Ωₙ(xₙ)‖²
/// ```
///
/// The inner minimization has a closed form, so only span(U) matters.
/// Columns without training entries contribute zero cost and gradient.
#[derive(Clone, Debug)]
pub struct McProblem {
    d: usize,
    rank: usize,
    train: Vec<ColumnEntries>,
    test: Vec<ColumnEntries>,
    ridge: f64,
    n_train: usize,
    n_test: usize,
}

impl McProblem {
    /// `test` is either empty (no held-out set) or has one entry per column.
    pub fn new(
        d: usize,
        rank: usize,
        train: Vec<ColumnEntries>,
        test: Vec<ColumnEntries>,
        ridge: f64,
    ) -> Result<Self> {
        if rank == 0 || rank >= d {
            return Err(Error::Config(format!("need 1 <= r < d, got d={d}, r={rank}")));
        }
        if train.is_empty() {
            return Err(Error::Config("matrix completion needs at least one column".into()));
        }
        if !test.is_empty() && test.len() != train.len() {
            return Err(Error::Config(format!(
                "test set has {} columns, training set {}",
                test.len(),
                train.len()
            )));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be finite and >= 0, got {ridge}")));
        }
        for (n, col) in train.iter().enumerate() {
            validate_column(col, d, n, "training")?;
        }
        for (n, col) in test.iter().enumerate() {
            validate_column(col, d, n, "test")?;
            let seen: HashSet<usize> = train[n].rows.iter().copied().collect();
            if let Some(row) = col.rows.iter().find(|r| seen.contains(r)) {
                return Err(Error::Config(format!(
                    "entry ({row}, {n}) is in both the training and the test set"
                )));
            }
        }
        let n_train = train.iter().map(ColumnEntries::len).sum();
        let n_test = test.iter().map(ColumnEntries::len).sum();
        Ok(Self {
            d,
            rank,
            train,
            test,
            ridge,
            n_train,
            n_test,
        })
    }

    /// Builds the column lists from `(row, col, value)` triplets.
    pub fn from_triplets(
        d: usize,
        n: usize,
        rank: usize,
        train: &[(usize, usize, f64)],
        test: &[(usize, usize, f64)],
        ridge: f64,
    ) -> Result<Self> {
        let train_cols = group_by_column(train, d, n)?;
        let test_cols = if test.is_empty() {
            Vec::new()
        } else {
            group_by_column(test, d, n)?
        };
        Self::new(d, rank, train_cols, test_cols, ridge)
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn train_columns(&self) -> &[ColumnEntries] {
        &self.train
    }

    pub fn test_columns(&self) -> &[ColumnEntries] {
        &self.test
    }

    pub fn n_train_entries(&self) -> usize {
        self.n_train
    }

    pub fn n_test_entries(&self) -> usize {
        self.n_test
    }

    /// `aₙ = argmin ‖U_Ωₙ·a − x_Ωₙ‖² + ridge·‖a‖²`, or `None` when column `n`
    /// has no observed entries.
    pub fn inner_solve(&self, u: &GrassmannPoint, n: usize) -> Result<Option<DVector<f64>>> {
        check_point(u, self.dims())?;
        check_batch(&[n], self.n_samples())?;
        Ok(self.solve_column(u, n).map(|(coeffs, _)| coeffs))
    }

    fn solve_column(&self, u: &GrassmannPoint, n: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let col = &self.train[n];
        if col.is_empty() {
            return None;
        }
        let rows = u.matrix().select_rows(&col.rows);
        let x = DVector::from_column_slice(&col.values);
        Some((ridge_solve(&rows, &x, self.ridge), rows))
    }

    /// Sum over the batch of squared training residuals, and the matching
    /// Euclidean gradient sum `Σ 2·rₙ·aₙᵀ` when requested.
    fn accumulate(&self, u: &GrassmannPoint, batch: &[usize], with_grad: bool) -> (f64, Option<DMatrix<f64>>) {
        let mut cost = 0.0;
        let mut grad = with_grad.then(|| DMatrix::zeros(self.d, self.rank));
        for &n in batch {
            let Some((coeffs, rows)) = self.solve_column(u, n) else {
                continue;
            };
            let col = &self.train[n];
            let resid = &rows * &coeffs - DVector::from_column_slice(&col.values);
            cost += resid.norm_squared();
            if let Some(g) = grad.as_mut() {
                for (k, &row) in col.rows.iter().enumerate() {
                    let scale = 2.0 * resid[k];
                    for j in 0..self.rank {
                        g[(row, j)] += scale * coeffs[j];
                    }
                }
            }
        }
        (cost, grad)
    }
}

fn validate_column(col: &ColumnEntries, d: usize, n: usize, which: &str) -> Result<()> {
    if col.rows.len() != col.values.len() {
        return Err(Error::Config(format!("{which} column {n}: rows and values differ in length")));
    }
    let mut seen = HashSet::with_capacity(col.rows.len());
    for (&row, &value) in col.rows.iter().zip(&col.values) {
        if row >= d {
            return Err(Error::Config(format!("{which} column {n}: row {row} out of range (d = {d})")));
        }
        if !seen.insert(row) {
            return Err(Error::Config(format!("{which} column {n}: duplicate row {row}")));
        }
        if !value.is_finite() {
            return Err(Error::Config(format!("{which} column {n}: non-finite value at row {row}")));
        }
    }
    Ok(())
}

fn group_by_column(entries: &[(usize, usize, f64)], d: usize, n: usize) -> Result<Vec<ColumnEntries>> {
    let mut cols = vec![ColumnEntries::default(); n];
    for &(row, col, value) in entries {
        if row >= d || col >= n {
            return Err(Error::Config(format!("entry ({row}, {col}) outside a {d}x{n} matrix")));
        }
        cols[col].rows.push(row);
        cols[col].values.push(value);
    }
    Ok(cols)
}

/// Ridge least squares; normal equations when they are positive definite,
/// otherwise the SVD filter `σ/(σ² + ridge)` (the minimum-norm solution for
/// ridge = 0).
fn ridge_solve(a: &DMatrix<f64>, x: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let rhs = a.tr_mul(x);
    if ridge > 0.0 {
        let mut gram = a.tr_mul(a);
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(gram) {
            return chol.solve(&rhs);
        }
    }
    let svd = SVD::new(a.clone(), true, true);
    let (Some(w), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return DVector::zeros(a.ncols());
    };
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-13 * s_max.max(1.0) * a.nrows().max(a.ncols()) as f64;
    let proj = w.tr_mul(x);
    let filtered = DVector::from_iterator(
        proj.len(),
        proj.iter().zip(svd.singular_values.iter()).map(|(&p, &s)| {
            if s > cutoff {
                p * s / (s * s + ridge)
            } else {
                0.0
            }
        }),
    );
    v_t.tr_mul(&filtered)
}

impl Problem for McProblem {
    fn n_samples(&self) -> usize {
        self.train.len()
    }

    fn dims(&self) -> (usize, usize) {
        (self.d, self.rank)
    }

    fn batch_cost(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<f64> {
        check_point(u, self.dims())?;
        check_batch(batch, self.n_samples())?;
        Ok(self.accumulate(u, batch, false).0 / batch.len() as f64)
    }

    // Gradient of the reduced cost: by optimality of aₙ only the explicit
    // dependence on U remains.
    fn stoch_grad(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<TangentVector> {
        check_point(u, self.dims())?;
        check_batch(batch, self.n_samples())?;
        let (_, grad) = self.accumulate(u, batch, true);
        let egrad = grad.expect("gradient requested") / batch.len() as f64;
        project_tangent(u, egrad)
    }

    /// Mean squared error per held-out entry, predicting with the
    /// training-fitted coefficients (zero for columns without training data).
    fn test_cost(&self, u: &GrassmannPoint) -> Result<Option<f64>> {
        check_point(u, self.dims())?;
        if self.n_test == 0 {
            return Ok(None);
        }
        let mut total = 0.0;
        for (n, col) in self.test.iter().enumerate() {
            if col.is_empty() {
                continue;
            }
            let coeffs = self.solve_column(u, n).map(|(c, _)| c);
            for (&row, &value) in col.rows.iter().zip(&col.values) {
                let pred = coeffs
                    .as_ref()
                    .map_or(0.0, |c| u.matrix().row(row).transpose().dot(c));
                total += (pred - value).powi(2);
            }
        }
        Ok(Some(total / self.n_test as f64))
    }
}
