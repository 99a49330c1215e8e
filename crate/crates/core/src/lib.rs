//! Learning the optimal feedback gain of a scalar system driven through a
//! multiplicative noise channel, by minimizing the log-growth cost
//! `J(K) = E[log|1 + B K|]`.
//!
//! The crate is organised bottom-up:
//!
//! * [`densities`]: noise laws and the [`DensityModel`] trait.
//! * [`quad`], [`roots`]: adaptive Gauss–Kronrod quadrature and Brent's method.
//! * [`pvcore`]: cost, principal-value gradient, regularized cost, Hessian
//!   decomposition, optimal gains and local constants.
//! * [`estimators`]: naive, paired and plug-in single-sample gradient estimators.
//! * [`kde`]: order-2 and order-4 kernel density estimates on a fixed grid.
//! * [`optim`]: projected policy-gradient learners and the Newton plug-and-solve.
//! * [`experiments`]: the reproducible experiment drivers that write CSV.

pub mod closed_form;
pub mod densities;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod kde;
pub mod optim;
pub mod pvcore;
pub mod quad;
pub mod rng;
pub mod roots;
pub mod stats;

pub use densities::{make_builtin, DensityId, DensityModel, NoiseDensity, Side};
pub use error::{Error, Result};
