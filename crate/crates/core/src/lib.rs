//! Estimators for entropies, divergences and mutual informations built on
//! influence-function (von Mises) corrections of kernel density estimates.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: Legendre-polynomial higher-order kernels.
//! * [`density`]: truncated, boundary-corrected KDEs with exact leave-one-out
//!   evaluation and least-squares cross-validation.
//! * [`quadrature`]: tensor grids on the unit cube and leave-one-out integral
//!   caches.
//! * [`functionals`]: the catalog of functionals, their influence functions and
//!   per-sample estimator terms.
//! * [`estimators`]: data-split, leave-one-out and plug-in estimators, variance
//!   estimates and confidence intervals.
//! * [`synthdata`]: analytic test densities, seeded samplers and quadrature
//!   ground truth.

pub mod density;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod kernels;
pub mod normal;
pub mod par;
pub mod quadrature;
pub mod sample;
pub mod synthdata;

pub use density::{Boundary, Clamp, Density, KdeModel};
pub use error::{Error, Result};
pub use estimators::{
    confidence_interval, estimate, estimate_ds, estimate_loo, estimate_plugin, Bandwidth, Estimate,
    EstimatorConfig, Method, VarianceSource,
};
pub use functionals::{CrossDensity, DensityPair, FunctionalSpec, Kind, Layout};
pub use kernels::{legendre_kernel, Kernel1D};
pub use quadrature::{GridSpec, Rule};
pub use sample::SampleSet;
pub use synthdata::{derive_seed, AnalyticDensity};
