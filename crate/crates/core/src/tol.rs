//! Numerical tolerances used across the crate.

/// Squared norm of a normalized state vector.
pub const NORM: f64 = 1e-10;
/// Hermiticity, PSD and trace checks on density operators.
pub const STATE: f64 = 1e-10;
/// `V†V = I` for isometries and `Σ K†K ≤ I` for Kraus channels.
pub const ISOMETRY: f64 = 1e-9;
/// Completeness and idempotence of projective measurements.
pub const PROJECTOR: f64 = 1e-9;
/// Probability sums.
pub const PROBABILITY: f64 = 1e-9;
/// Transcript branches below this probability are pruned.
pub const BRANCH: f64 = 1e-12;
/// Eigenvalues below this are treated as outside the support.
pub const SUPPORT: f64 = 1e-12;
/// Largest fidelity shortfall accepted from an Uhlmann synthesis.
pub const UHLMANN_GAP: f64 = 1e-6;
/// Slack on inequalities checked numerically against the analytic bounds.
pub const BOUND_SLACK: f64 = 1e-6;

/// Environment variable scaling every slack used in pass/fail decisions.
pub const SCALE_ENV: &str = "QSRD_TOLERANCE_SCALE";

/// Multiplier read from `QSRD_TOLERANCE_SCALE`; 1 when unset or unparsable.
pub fn scale_from_env() -> f64 {
    std::env::var(SCALE_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .unwrap_or(1.0)
}
