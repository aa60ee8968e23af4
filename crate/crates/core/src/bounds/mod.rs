//! Decay rates, envelopes and convergence certificates.

mod alpha;
mod certificate;
mod envelope;
mod example;
mod family;

pub use alpha::{
    alpha_for_d, alpha_star, few_change_patterns, AlphaEvaluator, AlphaPoint, BStarBands,
    FixedScalingAlpha, PatternSearch, EXHAUSTIVE_LIMIT,
};
pub use certificate::{
    sweep_delta, theorem1_certificate, CertificateConfig, ConvergenceBound, GridInfo, InitialNorms,
    SweepRow,
};
pub use envelope::{fit_envelope, AlphaProfile, Envelope, EnvelopeMode};
pub use example::{example_alpha, optimal_delta};
pub use family::{ScalingFamily, ScalingRule, SignPattern};

pub(crate) use alpha::cumulative_exact;
