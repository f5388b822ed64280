//! Seeded synthetic instances and rating-matrix loaders.

mod ratings;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, orthonormal_factor};
use crate::manifold::{exp_map, GrassmannPoint, TangentVector};
use crate::problems::{KarcherProblem, McProblem, PcaProblem};

pub use ratings::{
    load_ratings, read_triplets, split_ratings, write_ratings, write_triplets, RatingDataset, RatingFormat, Split,
    Triplet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Pca,
    Karcher,
    Mc,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Pca => "pca",
            ProblemKind::Karcher => "karcher",
            ProblemKind::Mc => "mc",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ProblemKind::Pca),
            "karcher" => Ok(ProblemKind::Karcher),
            "mc" => Ok(ProblemKind::Mc),
            _ => Err(Error::Config(format!("unknown problem `{s}` (expected pca, karcher or mc)"))),
        }
    }
}

/// Parameters of a synthetic instance.
///
/// `noise_sigma` means, per kind:
/// - PCA: below 1, columns are `U_p·z + σ·e` with a planted r-dimensional
///   subspace `U_p` and `z, e` standard normal; at 1 or above, plain
///   standard normal columns.
/// - Karcher: geodesic spread of the points around the center.
/// - MC: standard deviation of Gaussian noise added to every observed entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub kind: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub condition_number: f64,
    pub oversampling: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Per-kind defaults: standard normal PCA columns, Karcher spread 0.3,
    /// noiseless MC with CN = OS = 5.
    pub fn new(kind: ProblemKind, n: usize, d: usize, r: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            r,
            condition_number: 5.0,
            oversampling: 5.0,
            noise_sigma: match kind {
                ProblemKind::Pca => 1.0,
                ProblemKind::Karcher => 0.3,
                ProblemKind::Mc => 0.0,
            },
            seed,
        }
    }

    fn check(&self, kind: ProblemKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!("spec is for {}, not {kind}", self.kind)));
        }
        if self.n == 0 || self.r == 0 || self.r >= self.d {
            return Err(Error::Config(format!(
                "need N >= 1 and 1 <= r < d, got N={}, d={}, r={}",
                self.n, self.d, self.r
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    /// `round(OS·(N + d − r)·r)`
    pub fn n_observed(&self) -> usize {
        (self.oversampling * ((self.n + self.d - self.r) * self.r) as f64).round() as usize
    }
}

pub fn gen_pca(spec: &SyntheticSpec) -> Result<PcaProblem> {
    spec.check(ProblemKind::Pca)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = if spec.noise_sigma < 1.0 {
        let basis = GrassmannPoint::random(spec.d, spec.r, &mut rng)?;
        let scores = gaussian_matrix(spec.r, spec.n, &mut rng);
        let noise = gaussian_matrix(spec.d, spec.n, &mut rng);
        basis.matrix() * scores + noise * spec.noise_sigma
    } else {
        gaussian_matrix(spec.d, spec.n, &mut rng)
    };
    PcaProblem::new(data, spec.r)
}

/// `N` points `Exp_C(σ·ξₙ)` with unit-norm random horizontal `ξₙ` around a
/// random center `C`; pairwise distances stay below `2σ`.
pub fn gen_karcher(spec: &SyntheticSpec) -> Result<KarcherProblem> {
    spec.check(ProblemKind::Karcher)?;
    if 2.0 * spec.noise_sigma >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Config(format!(
            "Karcher spread {} could place points on each other's cut locus",
            spec.noise_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = GrassmannPoint::random(spec.d, spec.r, &mut rng)?;
    let mut points = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let xi = TangentVector::random(&center, &mut rng);
        if spec.noise_sigma == 0.0 {
            points.push(center.clone());
        } else {
            points.push(exp_map(&center, &xi.scaled(spec.noise_sigma / xi.norm()), 1.0)?);
        }
    }
    KarcherProblem::new(points)
}

/// A synthetic completion instance with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticMc {
    pub problem: McProblem,
    /// Column space of the full matrix.
    pub truth: GrassmannPoint,
    /// Diagonal of `S`, descending.
    pub singular_values: Vec<f64>,
}

/// `X = U*·S·A` with `A` having orthonormal rows and `S` geometrically
/// spaced so that `max/min = CN`. `S` is scaled so the entries of `X` have
/// unit root-mean-square. `|Ω|` entries are sampled uniformly for training
/// and a disjoint set of the same size for testing.
pub fn gen_mc(spec: &SyntheticSpec) -> Result<SyntheticMc> {
    spec.check(ProblemKind::Mc)?;
    let (n, d, r) = (spec.n, spec.d, spec.r);
    if !(spec.condition_number.is_finite() && spec.condition_number >= 1.0) {
        return Err(Error::Config(format!("condition number must be >= 1, got {}", spec.condition_number)));
    }
    if !(spec.oversampling.is_finite() && spec.oversampling > 0.0) {
        return Err(Error::Config(format!("oversampling must be > 0, got {}", spec.oversampling)));
    }
    if n < r {
        return Err(Error::Config(format!("need N >= r for a rank-{r} matrix, got N={n}")));
    }
    let n_obs = spec.n_observed();
    if 2 * n_obs > n * d {
        return Err(Error::Config(format!(
            "{n_obs} training entries plus an equal test set exceed the {d}x{n} matrix"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = GrassmannPoint::random(d, r, &mut rng)?;
    let a = orthonormal_factor(&gaussian_matrix(n, r, &mut rng)).transpose();
    let raw: Vec<f64> = (0..r)
        .map(|i| {
            let frac = if r == 1 { 0.0 } else { i as f64 / (r - 1) as f64 };
            spec.condition_number.powf(-frac)
        })
        .collect();
    let norm = raw.iter().map(|s| s * s).sum::<f64>().sqrt();
    let scale = ((d * n) as f64).sqrt() / norm;
    let singular_values: Vec<f64> = raw.iter().map(|s| s * scale).collect();
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&singular_values));
    let full = truth.matrix() * s * a;
    let picked = sample(&mut rng, n * d, 2 * n_obs).into_vec();
    let mut entry = |flat: usize| -> Triplet {
        let (row, col) = (flat % d, flat / d);
        let noise: f64 = if spec.noise_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.noise_sigma * z
        } else {
            0.0
        };
        (row, col, full[(row, col)] + noise)
    };
    let train: Vec<Triplet> = picked[..n_obs].iter().map(|&f| entry(f)).collect();
    let test: Vec<Triplet> = picked[n_obs..].iter().map(|&f| entry(f)).collect();
    let problem = McProblem::from_triplets(d, n, r, &train, &test, crate::problems::DEFAULT_RIDGE)?;
    Ok(SyntheticMc {
        problem,
        truth,
        singular_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{distance, karcher_mean};
    use crate::problems::{pca_optimum, Problem};

    #[test]
    fn pca_is_seed_deterministic() {
        let spec = SyntheticSpec::new(ProblemKind::Pca, 50, 8, 2, 3);
        assert_eq!(gen_pca(&spec).unwrap().data(), gen_pca(&spec).unwrap().data());
        let other = SyntheticSpec { seed: 4, ..spec.clone() };
        assert_ne!(gen_pca(&spec).unwrap().data(), gen_pca(&other).unwrap().data());
    }

    #[test]
    fn spiked_pca_has_a_clear_gap() {
        let spec = SyntheticSpec {
            noise_sigma: 0.2,
            ..SyntheticSpec::new(ProblemKind::Pca, 2000, 20, 5, 1)
        };
        let p = gen_pca(&spec).unwrap();
        let opt = pca_optimum(p.data(), 5).unwrap();
        assert!(opt.unique);
        assert!(opt.eigenvalues[4] >= 10.0 * opt.eigenvalues[5]);
    }

    #[test]
    fn karcher_points_stay_in_the_ball() {
        let spec = SyntheticSpec::new(ProblemKind::Karcher, 30, 10, 2, 5);
        let p = gen_karcher(&spec).unwrap();
        let pts = p.points();
        for q in pts {
            assert!(distance(q, &pts[0]).unwrap() <= 0.6 + 1e-12);
        }
        let mean = karcher_mean(pts, 1e-10, 100).unwrap();
        assert!(p.full_grad(&mean.point).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn zero_spread_karcher_collapses() {
        let spec = SyntheticSpec {
            noise_sigma: 0.0,
            ..SyntheticSpec::new(ProblemKind::Karcher, 5, 6, 2, 6)
        };
        let p = gen_karcher(&spec).unwrap();
        let mean = karcher_mean(p.points(), 1e-10, 100).unwrap();
        assert!(distance(&mean.point, &p.points()[0]).unwrap() < 1e-12);
        let too_wide = SyntheticSpec {
            noise_sigma: 1.0,
            ..spec
        };
        assert!(gen_karcher(&too_wide).is_err());
    }

    #[test]
    fn mc_realizes_the_knobs() {
        let spec = SyntheticSpec::new(ProblemKind::Mc, 200, 60, 3, 7);
        let mc = gen_mc(&spec).unwrap();
        let s = &mc.singular_values;
        assert!((s[0] / s[2] - 5.0).abs() < 1e-10);
        assert_eq!(mc.problem.n_train_entries(), spec.n_observed());
        assert_eq!(mc.problem.n_test_entries(), spec.n_observed());
        assert!(mc.problem.cost(&mc.truth).unwrap() < 1e-12);
        assert!(mc.problem.test_cost(&mc.truth).unwrap().unwrap() < 1e-12);
        let rms2 = s.iter().map(|x| x * x).sum::<f64>() / (60.0 * 200.0);
        assert!((rms2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_condition_number_gives_equal_singular_values() {
        let spec = SyntheticSpec {
            condition_number: 1.0,
            ..SyntheticSpec::new(ProblemKind::Mc, 200, 60, 4, 8)
        };
        let mc = gen_mc(&spec).unwrap();
        assert!(mc.singular_values.iter().all(|&x| (x - mc.singular_values[0]).abs() < 1e-12));
    }

    #[test]
    fn oversampling_beyond_the_matrix_is_rejected() {
        let spec = SyntheticSpec {
            oversampling: 50.0,
            ..SyntheticSpec::new(ProblemKind::Mc, 20, 10, 2, 9)
        };
        assert!(gen_mc(&spec).is_err());
        assert!(gen_pca(&SyntheticSpec::new(ProblemKind::Pca, 10, 3, 3, 0)).is_err());
    }
}
