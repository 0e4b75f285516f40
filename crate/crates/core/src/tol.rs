//! Centralized numerical tolerances and iteration limits.
//!
//! Every tolerance the library relies on lives here with its justification,
//! so tests and callers pin against named constants instead of magic numbers.

/// Margin below which a spectral abscissa counts as strictly negative
/// (Hurwitz). Integrator blocks make exact-zero real parts routine, so
/// eigenvalues with |Re λ| below this margin are reported *marginal* rather
/// than silently stable. Units: 1/s.
pub const HURWITZ_MARGIN: f64 = 1e-12;

/// Required backward error ‖Mv − λv‖₂ / ‖M‖_F for every eigenpair returned
/// by the eigensolver's verification pass. Loose enough for clustered
/// eigenvalues of badly scaled matrices, tight enough to catch any
/// convergence failure.
pub const EIG_BACKWARD_ERROR: f64 = 1e-10;

/// Agreement required between the Perron root obtained from the left
/// eigenvector solve and the spectral abscissa from the QR sweep. Units: 1/s.
pub const PERRON_ABSCISSA_TOL: f64 = 1e-9;

/// Fixed-point iteration for the rotated equilibrium: converged when
/// ‖Δq‖∞ < FIXED_POINT_TOL · max(1, ‖q‖∞).
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Iteration cap for the damped fixed-point equilibrium solver.
pub const FIXED_POINT_MAX_ITERS: usize = 1_000_000;

/// Residual certificate ‖ẋ(x*)‖∞ required of a converged full-state
/// equilibrium. At the worked systems' scales (rates ≤ 1e-2/s,
/// concentrations ≤ 1e2 nM) this is ~1e9× below the smallest flux of
/// interest. Units: nM/s.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-10;

/// Damped-Newton iteration cap for the full-state equilibrium solver.
pub const NEWTON_MAX_ITERS: usize = 200;

/// Default relative tolerance for adaptive integration.
pub const SIM_REL_TOL: f64 = 1e-8;

/// Default absolute tolerance for adaptive integration. Units: nM.
pub const SIM_ABS_TOL: f64 = 1e-12;

/// Default state-norm threshold above which a trajectory is flagged
/// divergent and integration stops. Far beyond physical plausibility; keeps
/// runtimes bounded on unstable parameterizations. Units: nM.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Slack below zero tolerated on any concentration before a run is declared
/// invalid; round-off dips smaller than this are clipped to zero and logged.
/// Units: nM.
pub const NONNEG_SLACK: f64 = 1e-9;
