//! Certified convergence-rate bounds for `M^X_t/M^X_t/1` queue-length chains.
//!
//! The pipeline is:
//!
//! 1. [`chain`]: a transition class and its truncated transposed intensity matrix `A(t)`;
//! 2. [`transform`]: the reduced matrix `B(t)`, its conjugate `B*(t) = T B(t) T⁻¹` and
//!    the diagonal rescaling `B**(t) = D B*(t) D⁻¹`;
//! 3. [`bounds`]: per-sign-pattern decay rates `α_D(t)`, their minimum `α*(t)`,
//!    the exponential envelope `(M, β)` and the resulting certificate;
//! 4. [`solver`]: direct integration of the forward Kolmogorov system, used to
//!    check certificates against actual trajectories.

// `!(x > 0.0)` rejects NaN too; index loops read better in the matrix kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod chain;
pub mod error;
pub mod rates;
pub mod scenario;
pub mod solver;
pub mod transform;

pub use bounds::{
    alpha_for_d, alpha_star, example_alpha, fit_envelope, optimal_delta, sweep_delta,
    theorem1_certificate, AlphaProfile, CertificateConfig, ConvergenceBound, Envelope,
    EnvelopeMode, InitialNorms, PatternSearch, ScalingFamily, ScalingRule, SignPattern, SweepRow,
};
pub use chain::{ChainClass, ChainModel, GeneratorMatrix, Multipliers, StateRate, Transitions};
pub use error::{Error, Result};
pub use rates::RateFunction;
pub use scenario::Scenario;
pub use solver::{
    compute_u, contraction_check, integrate, pair_report, truncation_doubling, PairReport,
    Trajectory, Verdict,
};
pub use transform::{
    bstar_closed_form, bstar_numeric, conjugate_dense, conjugate_numeric, oracle_reference, reduce,
    scale_d, ConjugatedMatrix, OracleKind, ReducedMatrix,
};
