//! Finite-state non-homogeneous Markov chain arrays: contraction-coefficient
//! algebra, exact martingale decomposition of partial sums, variance bounds,
//! a Poisson-equation solver for the homogeneous case, reproducible Monte
//! Carlo sampling, and a small expression-driven file format for chain
//! schemes.
//!
//! The layering is strict: [`kernel`] knows only matrices and measures,
//! [`chain`] assembles them into one chain of length n, [`exact`] computes
//! every decomposition and diagnostic without sampling, [`oracle`] certifies
//! the exact engine by brute-force path enumeration, [`poisson`] treats the
//! homogeneous special case, [`montecarlo`] samples at scales enumeration
//! cannot reach, and [`specfmt`] parses the document format that describes
//! chain families.

pub mod chain;
pub mod error;
pub mod exact;
pub mod kernel;
pub mod montecarlo;
pub mod oracle;
pub mod poisson;
pub mod specfmt;
pub mod tol;

pub use chain::{
    build_dobrushin_example, build_homogeneous, ArraySchemeFamily, ChainScalars, ChainSpec,
    DobrushinRegime,
};
pub use error::{Error, Result};
pub use exact::{
    centered_functions, check_variance_lower_bound, check_z_bound, decompose, diagnostics_report,
    dobrushin_gate, lln_l2_diagnostic, mean_of_sum, negligibility_diagnostic,
    oscillation_diagnostic, resolvent_sequence, variance_of_sum, DiagnosticsReport, GateReport,
    MartingaleDecomposition, TrendVerdict, DEFAULT_EXACT_CAP,
};
pub use kernel::{
    check_covariance_inequality, check_pair_bound, oscillation, reverse_kernel, tv_distance,
    CovarianceCheck, Distribution, PairBoundCheck, PairMeasure, StochasticKernel,
};
pub use montecarlo::{
    case_ab_profiles, fit_normal, sample, standard_normal_cdf, CaseAbTable, FitReport,
    SampleBatch, DEFAULT_SEED,
};
pub use oracle::{conditional_expectation, enumerate_paths_oracle, for_each_path, PATH_BUDGET};
pub use poisson::{solve_poisson, verify_variance_growth, PoissonSolution, VarianceGrowthTable};
pub use specfmt::{ChainDocument, Expr};
