//! Wald-type, parametric bootstrap and nonparametric bootstrap tests for
//! multivariate factorial designs with heteroscedastic covariance matrices.
//!
//! Typical flow: declare a [`FactorialLayout`], build [`HypothesisMatrix`]es
//! for its effects, group observations into a [`GroupedDataset`] and call
//! [`test_hypotheses`]. Pairwise comparisons with closed testing live in
//! [`multiplicity`], type-I error simulations in [`simulation`], and the
//! file formats and command line in [`io`].

pub mod design;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod multiplicity;
pub mod simulation;

pub use design::{
    all_effects, build_hypothesis, Analysis, Factor, FactorialLayout, HypothesisMatrix, HypothesisSpec, Role,
};
pub use distributions::{chi_square_sf, ErrorDistribution, RngStream};
pub use error::{Error, Result};
pub use inference::{
    chi2_test, estimate_moments, npbs_test, pbs_test, test_hypotheses, wald_statistic, BootstrapSettings,
    GroupedDataset, Method, MomentEstimates, TestResult,
};
pub use linalg::Matrix;
pub use multiplicity::{closure, pairwise_comparisons, ClosureDecision, HypothesisFamily};
pub use simulation::{run_scenario, SimulationReport, SimulationScenario};
