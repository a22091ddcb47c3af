//! Default tolerances and thresholds shared by the checks.
//!
//! Every check takes its tolerance from a config struct whose `Default`
//! points here, so experiments can override any of them.

/// Absolute tolerance for identities that hold exactly in real arithmetic
/// (metric axioms on cached matrices).
pub const EXACT: f64 = 1e-9;

/// Residual bound for algebraic identities evaluated in f64, such as the
/// composition law of dilations or the rescaling identity of Euclidean
/// distances on dyadic probes.
pub const ALGEBRAIC: f64 = 1e-12;

/// Maximum number of violation witnesses kept in a report.
pub const WITNESS_CAP: usize = 32;

/// Number of trailing ladder rungs used for the limit verdict.
pub const LADDER_TAIL: usize = 5;

/// A ladder tail whose (detrended) spread stays below
/// `LADDER_CONVERGE * (1 + |limit|)` counts as settled.
pub const LADDER_CONVERGE: f64 = 1e-6;

/// A ladder tail whose raw spread reaches `LADDER_OSCILLATION * (1 + |mean|)`
/// is declared oscillating when it is not explained by power-law decay.
pub const LADDER_OSCILLATION: f64 = 0.1;

/// Smallest fitted log-log rate accepted as genuine convergence.
pub const LADDER_MIN_RATE: f64 = 0.5;

/// The last rung must lie within `LADDER_AGREEMENT * (1 + |limit|)` of the
/// extrapolated limit.
pub const LADDER_AGREEMENT: f64 = 1e-3;

/// Spread below `LADDER_CONSTANT * (1 + |mean|)` is treated as a constant ladder.
pub const LADDER_CONSTANT: f64 = 1e-12;

/// A converged residual ladder must extrapolate to within this of zero.
pub const RESIDUAL_LIMIT: f64 = 1e-6;

/// Derivative residual limits below this count as derivable.
pub const DERIVATIVE_LIMIT: f64 = 1e-4;
