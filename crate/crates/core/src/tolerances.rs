//! Tolerance constants used by the solver post-checks and the property suite.
//!
//! Relative slacks (`*_ETA`) multiply the quantity being bounded. Checks on
//! closed-form samples use [`ORACLE_ETA`]; checks on mesh-based samples use
//! the per-check numeric defaults, which can be overridden per run through
//! [`crate::properties::Tolerances`].

/// Relative slack for checks evaluated on closed-form values.
pub const ORACLE_ETA: f64 = 1e-12;

/// Hölder modulus slack for numeric samples.
pub const HOLDER_ETA: f64 = 0.05;

/// Upper envelope slack for numeric samples.
pub const BOUNDS_ETA: f64 = 0.05;

/// Absolute slack on the volume lower bound, which must hold exactly.
pub const LOWER_BOUND_SLACK: f64 = 1e-10;

/// Slack for the weighted p-monotonicity check on numeric samples.
pub const MONOTONE_ETA: f64 = 0.02;

/// Slack for midpoint concavity (relative to the largest sampled value).
pub const CONCAVITY_ETA: f64 = 0.02;

/// Slack for the discrete pointwise inequality `|v(x)| <= s ||grad v||_p`.
pub const POINTWISE_ETA: f64 = 1e-10;

/// Relative tolerance on the fitted near-pole exponent.
pub const ASYMPTOTIC_SLOPE_REL: f64 = 0.10;

/// Relative tolerance on the fitted near-pole prefactor.
pub const ASYMPTOTIC_PREFACTOR_REL: f64 = 0.15;

/// Minimum annulus vertex count for the near-pole fit.
pub const ASYMPTOTIC_MIN_VERTICES: usize = 8;

/// Relative part of the large-p tolerance, `max(LIMIT_REL * d, LIMIT_CONSTANT / p)`.
pub const LIMIT_REL: f64 = 0.05;

/// Absolute part of the large-p tolerance. On the unit disk the center gap
/// `1 - s_p(0)` times `p` stays below 0.84 for all `p >= 3`; this is twice that.
pub const LIMIT_CONSTANT: f64 = 1.7;

/// Observational floor for `min (u_q - u_p)` with `p < q` on convex domains.
pub const UP_MONOTONE_DEFECT: f64 = 0.02;

/// Cone comparison slack in units of the lattice spacing.
pub const CONE_SLACK_H: f64 = 2.0;

/// Base of the `u_p` to `u_inf` gap tolerance `UP_GAP_BASE + 2 h`.
pub const UP_GAP_BASE: f64 = 0.05;

/// Numeric entries may exceed a closed-form value by at most this relative amount.
pub const ORACLE_DOMINANCE: f64 = 1e-9;

/// Planar solves require `p >= N + PLANAR_P_MARGIN`.
pub const PLANAR_P_MARGIN: f64 = 0.1;

/// Round-off allowance for the discrete maximum principle post-check.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-12;

/// Poles closer than this are treated as the same point when matching midpoints.
pub const POLE_MATCH: f64 = 1e-12;

/// Exponent at which the `u_p` gap tolerance equals `UP_GAP_BASE + 2 h`; the
/// base part scales like `1 / p` elsewhere.
pub const UP_GAP_REFERENCE_P: f64 = 50.0;

/// Allowed increase of the `u_p` to `u_inf` gap between consecutive exponents,
/// on top of the lattice resolution.
pub const UP_GAP_MONOTONE_SLACK: f64 = 1e-8;
