//! Identification of affine linear systems `x(k+1) = A x(k) + a + f(k)`
//! observed as `r(k) = x(k) + w(k)`, from differences of observations.
//!
//! Differencing removes the unknown offset and the mean of the observation
//! noise before `A` is estimated. The crate also evaluates the finite-sample
//! bounds that certify an error tolerance with a given confidence, selects
//! difference data to tighten them, and runs the Monte Carlo experiments.

pub mod complexity;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod linalg;
pub mod mc;
pub mod pac;
pub mod pipeline;
pub mod presets;
pub mod selector;
pub mod sim;

pub use error::{Error, Result};
pub use estimators::{feasibility_report, model_error, naive_infer, proposed_infer, raw_ols, InferenceResult, Method};
pub use pipeline::{chain_family, full_family, FamilySpec, IndexFamily, Tag};
pub use sim::{simulate, DistributionSpec, LinearSystem, NoiseModel, NoiseVariances, Trajectory};
