//! Differentially private model selection for linear regression.
//!
//! Candidate models are scored by ℓ1-constrained least squares
//! ([`selection::pcls_select`], ε-DP) or by the constrained profile
//! likelihood ([`selection::pcpl_select`], `(2ε, δ)`-DP), and one model is
//! released through noisy minimisation or the exponential mechanism.
//!
//! ```
//! use dpms_core::{all_subsets, pcls_select, Dataset, PrivacyBudget, RngStream, SelectionConfig};
//!
//! let x = vec![vec![0.1, -0.4, 0.9, 0.3], vec![0.5, 0.5, -0.2, -0.8]];
//! let y = vec![0.2, -0.3, 0.8, 0.1];
//! let data = Dataset::new(x, y, 1.0).unwrap();
//! let models = all_subsets(2, false, None).unwrap();
//! let cfg = SelectionConfig::new(2.0, 1.0, PrivacyBudget::pure(1.0).unwrap(), 1.0).unwrap();
//! let report = pcls_select(&data, models.masks(), &cfg, &RngStream::from_seed(7)).unwrap();
//! assert!(models.contains(&report.chosen));
//! ```

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csv_input;
pub mod data;
pub mod diagnostics;
pub mod enumeration;
pub mod error;
pub mod mechanisms;
pub mod selection;
pub mod simharness;
pub mod solver;

pub use data::{standardize, Dataset, ModelMask, StandardizePolicy, SufficientStats};
pub use enumeration::{all_subsets, from_explicit, CandidateSet, ModelSpec};
pub use error::{Error, Result};
pub use mechanisms::{
    compose_eps_delta, exponential_mechanism, noisy_argmin, noisy_release, sample_laplace,
    PrivacyBudget, RngStream, ScoredCandidate,
};
pub use selection::{
    compute_g_of_d, ls_sensitivity, pcls_select, pcpl_select, Algorithm, Mechanism,
    SelectionConfig, SelectionReport,
};
pub use simharness::{generate, run_sweep, PhiGrid, SweepGrid, SweepResult, SyntheticSpec};
pub use solver::{fit_constrained_ls, profile_loglik, project_l1, FitResult, SolverConfig, StepRule};
