//! Riemannian stochastic variance-reduced gradient (R-SVRG) on the Grassmann
//! manifold, with R-SGD and steepest-descent baselines, three finite-sum
//! problems (PCA, Karcher mean, low-rank matrix completion), synthetic and
//! rating-file data sources, and numerical checks for the variance and rate
//! behaviour of the method.

pub mod data;
pub mod error;
mod linalg;
pub mod manifold;
pub mod optim;
pub mod problems;
pub mod verify;

pub use error::{Error, Result};
pub use manifold::{GrassmannPoint, TangentVector};
pub use problems::Problem;
