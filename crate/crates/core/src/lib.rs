//! Empirical likelihood estimation and testing of treatment effects in
//! randomized trials, with covariate adjustment through model-free
//! auxiliary constraints.

pub mod cli;
pub mod data;
pub mod dist;
pub mod el;
pub mod equations;
pub mod error;
pub mod inference;
pub mod quadrature;
pub mod sim;

pub use data::{empirical_cdf, load_csv, Allocation, CsvSchema, EmpiricalCdf, TrialDataset};
pub use el::{log_star, profile_gradient, profile_loglik, solve_lambda, ElSolution, ProfileLikelihood};
pub use equations::{assemble, AuxTerm, Basis, ConstraintSpec, EstimatingFunctionSet, Link};
pub use error::{Error, Result};
pub use inference::{
    fit_mele, lr_test_full, lr_test_profile, power_analytic, wald_interval, ElEstimator, FitOptions,
    MeleResult, TestKind, TestResult,
};
