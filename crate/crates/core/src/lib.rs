//! Multilevel logistic regression for two feature modalities.
//!
//! Imaging features `xI` and genetic features `xG` enter a logistic model
//! whose imaging coefficients and intercept are themselves affine in the
//! genetic features:
//!
//! ```text
//! p(y = 1 | xG, xI) = sigma(xG^T W^T xI + beta_I^T xI + beta_G^T xG + beta0)
//! ```
//!
//! Genetic features are grouped by gene (groups may overlap), and the fit
//! minimizes the mean logistic loss plus a group-lasso penalty on every
//! `W[i, gene]` block and every `beta_G` gene block, and a squared-l2 penalty
//! on `beta_I`. Training uses proximal gradient descent with a backtracking
//! line search.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod groups;
pub mod objective;
pub mod params;
pub mod preprocess;
pub mod scalar;
pub mod solver;
pub mod synthetic;

pub use data::{CrossScaling, Dataset, Design};
pub use error::{Error, Result};
pub use evaluation::{
    kfold_cv, metrics, predict, reduce_parameters, CvConfig, CvResult, MetricsReport,
    ReducedParameters, Selection,
};
pub use groups::{reshape_phi, reshape_phi_inverse, GroupSpec, GroupStructure};
pub use objective::{
    gradient, linear_predictor, log_posterior_unnormalized, objective, penalty, risk, sigmoid,
    ObjectiveValue,
};
pub use params::{GradientVector, Hyperparameters, ParameterSet, Variant};
pub use preprocess::{fit_scaler, Normalization, ScalingRecord};
pub use scalar::Scalar;
pub use solver::{
    backtracking_step, fit, parameter_update, prox_group, prox_ridge, screen_lambda_max,
    ProxStep, ScreeningBounds, SolverState, StopReason,
};
pub use synthetic::{finite_difference_gradient, generate, reference_solve, SyntheticData, SyntheticSpec};

pub type Dataset64 = Dataset<f64>;
pub type Design64 = Design<f64>;
pub type GroupStructure64 = GroupStructure<f64>;
pub type ParameterSet64 = ParameterSet<f64>;
pub type Hyperparameters64 = Hyperparameters<f64>;
pub type ScalingRecord64 = ScalingRecord<f64>;
pub type SolverState64 = SolverState<f64>;

pub type Dataset32 = Dataset<f32>;
pub type Design32 = Design<f32>;
pub type GroupStructure32 = GroupStructure<f32>;
pub type ParameterSet32 = ParameterSet<f32>;
pub type Hyperparameters32 = Hyperparameters<f32>;
