//! L2-type discrete Caputo fractional derivative of order `3 - alpha` on graded
//! temporal meshes, with inverse-monotonicity certification, scalar and 1D parabolic
//! time steppers, and convergence-study tooling.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod mesh;
pub mod monotone;
pub mod operator;
pub mod solver;

pub use error::{Error, Result};
pub use mesh::{build_graded, MeshSpec, MeshVariant, TemporalMesh};
pub use operator::{kernel_moments, KernelRow, L2Operator, OperatorMatrix, StencilDiagnostics, Variant};
pub use solver::{
    solve_parabolic_1d, solve_scalar, solve_tridiagonal, Parabolic1DProblem, ParabolicSolution,
    ScalarProblem, ScalarSolution,
};
pub use monotone::{
    beta_schedule, certify, check_energy_condition, compute_k, eta, factorize, sigma_bar, sigma_star,
    uniform_constants, verify_inverse_nonneg, FactorPair, MonotoneCertificate, SigmaBar, UniformConstants,
};
pub use analysis::{
    build_table, envelope_e, envelope_u, observed_rates, pointwise_comparison, truncation_error, Campaign,
    CampaignProblem, ConvergenceTable, ErrorEnvelope, ExactSolution, GradingRule, Metric, PowerSum,
    StabilityEnvelope, TruncationProfile,
};
