//! Deterministic integration of the mass-action dynamics.
//!
//! Two embedded methods cover the two regimes this pipeline meets: an
//! explicit Dormand–Prince 5(4) pair for the mildly stiff network-level
//! dynamics, and an L-stable Rosenbrock 2(3) pair for the strand-level
//! dynamics, whose fuel-scale bimolecular rates make explicit stepping
//! hopeless. Reference profiles are piecewise constant; every step lands
//! exactly on a profile breakpoint, so discontinuous forcing never smears
//! across a step.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::crn::structure::{p_of, q_of, x_of, StructuredSystem};
use crate::crn::CrnField;
use crate::float;
use crate::linalg::{vecops, Lu, Mat};
use crate::tol;

/// One piecewise-constant reference segment starting at `t_start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileStep {
    pub t_start: f64,
    pub r_plus: f64,
    pub r_minus: f64,
}

/// A validated piecewise-constant reference signal. Before the first step
/// the reference is zero; each step holds until the next one begins.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile {
    steps: Vec<ProfileStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("step {index}: start times must be finite, nonnegative and strictly increasing")]
    BadTime { index: usize },
    #[error("step {index}: rail values must be finite and nonnegative")]
    NegativeValue { index: usize },
    #[error("step {index}: at most one rail may be nonzero at a time")]
    BothRails { index: usize },
}

impl ReferenceProfile {
    pub fn new(steps: Vec<ProfileStep>) -> Result<ReferenceProfile, ProfileError> {
        let mut prev = -1.0;
        for (index, s) in steps.iter().enumerate() {
            if !s.t_start.is_finite() || s.t_start < 0.0 || s.t_start <= prev {
                return Err(ProfileError::BadTime { index });
            }
            if !s.r_plus.is_finite() || !s.r_minus.is_finite() || s.r_plus < 0.0 || s.r_minus < 0.0
            {
                return Err(ProfileError::NegativeValue { index });
            }
            if s.r_plus > 0.0 && s.r_minus > 0.0 {
                return Err(ProfileError::BothRails { index });
            }
            prev = s.t_start;
        }
        Ok(ReferenceProfile { steps })
    }

    /// The zero reference.
    pub fn zero() -> ReferenceProfile {
        ReferenceProfile { steps: Vec::new() }
    }

    /// A single constant segment from t = 0.
    pub fn constant(r_plus: f64, r_minus: f64) -> Result<ReferenceProfile, ProfileError> {
        ReferenceProfile::new(vec![ProfileStep { t_start: 0.0, r_plus, r_minus }])
    }

    pub fn steps(&self) -> &[ProfileStep] {
        &self.steps
    }

    /// Reference value at time t as `[r⁺, r⁻]`.
    pub fn value_at(&self, t: f64) -> [f64; 2] {
        let mut value = [0.0, 0.0];
        for s in &self.steps {
            if s.t_start <= t {
                value = [s.r_plus, s.r_minus];
            } else {
                break;
            }
        }
        value
    }

    /// Segment boundaries inside (t0, t1), in order.
    fn breakpoints_within(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.steps.iter().map(|s| s.t_start).filter(|t| *t > t0 && *t < t1).collect()
    }
}

/// A vector field ẋ = f(r, x) the integrators can drive.
///
/// Implementations expose the dual-rail signal content of their state via
/// [`OdeField::rails`], so trajectory views (p, q) and divergence checks look
/// at signal concentrations, not auxiliary species such as fuels.
pub trait OdeField {
    /// Full state dimension.
    fn dim(&self) -> usize;

    /// Number of dual-rail base signals N.
    fn n_bases(&self) -> usize;

    /// Evaluates ẋ into `dxdt` for the reference value `r = [r⁺, r⁻]`.
    fn eval(&self, r: &[f64; 2], x: &[f64], dxdt: &mut [f64]);

    /// Writes the 2N signal rail concentrations into `rails`.
    fn rails(&self, x: &[f64], rails: &mut [f64]);

    /// ∂f/∂x at (r, x), if available. Required by the Rosenbrock method.
    fn jacobian(&self, _r: &[f64; 2], _x: &[f64], _jac: &mut Mat) -> bool {
        false
    }

    /// Hint that the field is stiff enough to default to the implicit method.
    fn prefers_stiff_solver(&self) -> bool {
        false
    }

    /// Whether states live in the nonnegative orthant (rotated-coordinate
    /// fields carry signed states and opt out of clipping).
    fn nonnegative_states(&self) -> bool {
        true
    }
}

impl OdeField for CrnField {
    fn dim(&self) -> usize {
        CrnField::dim(self)
    }

    fn n_bases(&self) -> usize {
        CrnField::dim(self) / 2
    }

    fn eval(&self, r: &[f64; 2], x: &[f64], dxdt: &mut [f64]) {
        self.eval_into(r, x, dxdt);
    }

    fn rails(&self, x: &[f64], rails: &mut [f64]) {
        rails.copy_from_slice(x);
    }

    fn jacobian(&self, _r: &[f64; 2], x: &[f64], jac: &mut Mat) -> bool {
        self.jacobian_into(x, jac);
        true
    }
}

/// Integration method selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Pick by the field's stiffness hint.
    Auto,
    /// Explicit Dormand–Prince 5(4).
    DormandPrince,
    /// L-stable Rosenbrock 2(3) (needs a Jacobian).
    Rosenbrock,
}

/// Solver options; the defaults reproduce the pinned tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub method: Method,
    /// ‖rails‖∞ above this sets the divergence flag and stops the run.
    pub divergence_threshold: f64,
    /// Samples are recorded at most this densely (0 = every accepted step).
    pub min_record_dt: f64,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            rel_tol: tol::SIM_REL_TOL,
            abs_tol: tol::SIM_ABS_TOL,
            method: Method::Auto,
            divergence_threshold: tol::DIVERGENCE_THRESHOLD,
            min_record_dt: 0.0,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("step size underflow at t = {t} s (stiffness failure); ‖x‖∞ = {state_inf_norm} nM")]
    StepUnderflow { t: f64, state_inf_norm: f64 },
    #[error("state persistently driven negative at t = {t} s; the dynamics leave the nonnegative orthant")]
    PersistentNegativity { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t} s")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("the selected method needs a Jacobian but the field provides none")]
    JacobianUnavailable,
    #[error("initial state must be nonnegative and of dimension {expected}")]
    BadInitialState { expected: usize },
}

/// Recorded integration event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The reference changed value.
    ReferenceStep,
    /// Negative round-off was clipped to zero.
    ClippedNegative,
    /// The divergence threshold was crossed; the run stopped here.
    Divergence,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ReferenceStep => "reference_step",
            EventKind::ClippedNegative => "clipped_negative",
            EventKind::Divergence => "divergence",
        }
    }
}

/// Solver counters for the run report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub method: String,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
    pub jacobian_evaluations: usize,
    pub lu_factorizations: usize,
    pub min_step: f64,
    pub max_step: f64,
}

/// A recorded trajectory: full states plus the dual-rail signal view.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Names of the full state's species, one per state column.
    pub species_names: Vec<String>,
    /// Number of dual-rail base signals N.
    pub n_bases: usize,
    pub t: Vec<f64>,
    /// Full state per sample.
    pub states: Vec<Vec<f64>>,
    /// Signal rails per sample (length 2N, plus rails then minus rails).
    pub rails: Vec<Vec<f64>>,
    /// ‖ẋ‖∞ at each sample.
    pub deriv_inf: Vec<f64>,
    pub events: Vec<Event>,
    pub diverged: bool,
    pub stats: SolverStats,
}

impl Trajectory {
    /// Signal values p = x⁺ − x⁻ at one sample.
    pub fn p_at(&self, sample: usize) -> Vec<f64> {
        p_of(&self.rails[sample])
    }

    /// Parity values q = x⁺ + x⁻ at one sample.
    pub fn q_at(&self, sample: usize) -> Vec<f64> {
        q_of(&self.rails[sample])
    }

    /// Time series of one signal coordinate p_j.
    pub fn p_series(&self, base: usize) -> Vec<f64> {
        self.rails.iter().map(|r| r[base] - r[base + self.n_bases]).collect()
    }

    /// Time series of one parity coordinate q_j.
    pub fn q_series(&self, base: usize) -> Vec<f64> {
        self.rails.iter().map(|r| r[base] + r[base + self.n_bases]).collect()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial sample")
    }

    pub fn last_time(&self) -> f64 {
        *self.t.last().expect("trajectory has at least the initial sample")
    }
}

/// Earliest time after which ‖ẋ‖∞ stays below `eps` for a full `window`,
/// with the state at that time. Absent when the trajectory never settles
/// (or ends before the window completes).
pub fn detect_steady_state(traj: &Trajectory, window: f64, eps: f64) -> Option<(f64, Vec<f64>)> {
    let n = traj.t.len();
    let t_last = *traj.t.last()?;
    let mut candidate: Option<usize> = None;
    for i in 0..n {
        if traj.deriv_inf[i] < eps {
            if candidate.is_none() {
                candidate = Some(i);
            }
        } else {
            candidate = None;
        }
        if let Some(start) = candidate {
            if traj.t[i] - traj.t[start] >= window {
                return Some((traj.t[start], traj.states[start].clone()));
            }
        }
    }
    // A quiet tail that reaches the end of the run also counts only if the
    // window is fully covered.
    if let Some(start) = candidate {
        if t_last - traj.t[start] >= window {
            return Some((traj.t[start], traj.states[start].clone()));
        }
    }
    None
}

/// Integrates `field` from `x0` under `profile` to `t_end`.
///
/// Accepted steps are recorded (thinned by `min_record_dt`); breakpoints and
/// `t_end` are always hit exactly and always recorded.
pub fn integrate<F: OdeField>(
    field: &F,
    x0: &[f64],
    profile: &ReferenceProfile,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    let names = (0..field.dim()).map(|i| format!("s{i}")).collect();
    integrate_named(field, names, x0, profile, t_end, opts)
}

/// As [`integrate`], with explicit species names for the trajectory.
pub fn integrate_named<F: OdeField>(
    field: &F,
    species_names: Vec<String>,
    x0: &[f64],
    profile: &ReferenceProfile,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    let dim = field.dim();
    if x0.len() != dim || (field.nonnegative_states() && x0.iter().any(|v| *v < 0.0)) {
        return Err(SimError::BadInitialState { expected: dim });
    }

    let use_rosenbrock = match opts.method {
        Method::Rosenbrock => true,
        Method::DormandPrince => false,
        Method::Auto => field.prefers_stiff_solver(),
    };

    let mut run = Run::new(field, species_names, x0, opts, use_rosenbrock);

    // Segment boundaries: profile breakpoints inside (0, t_end), then t_end.
    let mut boundaries = profile.breakpoints_within(0.0, t_end);
    boundaries.push(t_end);

    let mut t = 0.0;
    run.record(t, &profile.value_at(t), true);
    for boundary in boundaries {
        if run.halted {
            break;
        }
        let r = profile.value_at(0.5 * (t + boundary));
        run.integrate_segment(t, boundary, &r)?;
        t = boundary;
        if t < t_end && !run.halted {
            let r_next = profile.value_at(t);
            run.events.push(Event {
                t,
                kind: EventKind::ReferenceStep,
                detail: format!("r = [{}, {}] nM", r_next[0], r_next[1]),
            });
            // The boundary sample's derivative should reflect the incoming
            // segment's forcing, not the one that just ended.
            run.refresh_last_deriv(&r_next);
        }
    }

    Ok(run.finish())
}

/// Integrates the rotated dynamics of `system`, optionally with the
/// cross-coupling blocks R₁₂, R₂₁ forced to zero.
///
/// `x0` is given in natural (rail) coordinates and converted internally; the
/// trajectory's `states` hold `[p; q]`, while its rail view converts back,
/// so downstream consumers see the same shape as a natural integration.
pub fn integrate_decoupled(
    system: &StructuredSystem,
    x0: &[f64],
    profile: &ReferenceProfile,
    t_end: f64,
    opts: &SimOptions,
    decouple: bool,
) -> Result<Trajectory, SimError> {
    let field = RotatedField::new(system, decouple);
    let p0 = p_of(x0);
    let q0 = q_of(x0);
    let mut z0 = p0;
    z0.extend_from_slice(&q0);
    let n = system.n;
    let names = (0..n)
        .map(|i| format!("p{}", i + 1))
        .chain((0..n).map(|i| format!("q{}", i + 1)))
        .collect();
    integrate_named(&field, names, &z0, profile, t_end, opts)
}

/// The rotated-coordinate vector field over z = [p; q]:
///   ṗ = R₁₁p + R₁₂q + (W_pB)r
///   q̇ = R₂₁p + R₂₂q + (W_qB)r − (η/2)(q∘q − p∘p)
/// With `decouple`, the R₁₂/R₂₁ terms are dropped.
pub struct RotatedField {
    r11: Mat,
    r12: Mat,
    r21: Mat,
    r22: Mat,
    rb: Mat,
    eta: f64,
    n: usize,
    decouple: bool,
}

impl RotatedField {
    pub fn new(system: &StructuredSystem, decouple: bool) -> RotatedField {
        RotatedField {
            r11: system.r11.clone(),
            r12: system.r12.clone(),
            r21: system.r21.clone(),
            r22: system.r22.clone(),
            rb: system.rb.clone(),
            eta: system.eta,
            n: system.n,
            decouple,
        }
    }
}

impl OdeField for RotatedField {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn n_bases(&self) -> usize {
        self.n
    }

    fn eval(&self, r: &[f64; 2], z: &[f64], dzdt: &mut [f64]) {
        let n = self.n;
        let (p, q) = z.split_at(n);
        for i in 0..n {
            let mut dp = self.rb[(i, 0)] * r[0] + self.rb[(i, 1)] * r[1];
            let mut dq = self.rb[(i + n, 0)] * r[0] + self.rb[(i + n, 1)] * r[1];
            for j in 0..n {
                dp += self.r11[(i, j)] * p[j];
                dq += self.r22[(i, j)] * q[j];
                if !self.decouple {
                    dp += self.r12[(i, j)] * q[j];
                    dq += self.r21[(i, j)] * p[j];
                }
            }
            dq -= 0.5 * self.eta * (q[i] * q[i] - p[i] * p[i]);
            dzdt[i] = dp;
            dzdt[i + n] = dq;
        }
    }

    fn rails(&self, z: &[f64], rails: &mut [f64]) {
        let n = self.n;
        let x = x_of(&z[..n], &z[n..]);
        rails.copy_from_slice(&x);
    }

    fn jacobian(&self, _r: &[f64; 2], z: &[f64], jac: &mut Mat) -> bool {
        let n = self.n;
        let (p, q) = z.split_at(n);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = self.r11[(i, j)];
                jac[(i, j + n)] = if self.decouple { 0.0 } else { self.r12[(i, j)] };
                jac[(i + n, j)] = if self.decouple { 0.0 } else { self.r21[(i, j)] };
                jac[(i + n, j + n)] = self.r22[(i, j)];
            }
            jac[(i + n, i)] += self.eta * p[i];
            jac[(i + n, i + n)] -= self.eta * q[i];
        }
        true
    }

    fn nonnegative_states(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// The integration engine shared by both methods.

struct Run<'a, F: OdeField> {
    field: &'a F,
    opts: &'a SimOptions,
    rosenbrock: bool,
    x: Vec<f64>,
    species_names: Vec<String>,
    t_grid: Vec<f64>,
    states: Vec<Vec<f64>>,
    rails_samples: Vec<Vec<f64>>,
    deriv_inf: Vec<f64>,
    events: Vec<Event>,
    diverged: bool,
    halted: bool,
    stats: SolverStats,
    last_recorded_t: f64,
    // scratch
    rails_buf: Vec<f64>,
    h_prev: Option<f64>,
    clip_streak: usize,
}

impl<'a, F: OdeField> Run<'a, F> {
    fn new(
        field: &'a F,
        species_names: Vec<String>,
        x0: &[f64],
        opts: &'a SimOptions,
        rosenbrock: bool,
    ) -> Self {
        Run {
            field,
            opts,
            rosenbrock,
            x: x0.to_vec(),
            species_names,
            t_grid: Vec::new(),
            states: Vec::new(),
            rails_samples: Vec::new(),
            deriv_inf: Vec::new(),
            events: Vec::new(),
            diverged: false,
            halted: false,
            stats: SolverStats {
                method: if rosenbrock { "rosenbrock23" } else { "dormand_prince54" }.to_string(),
                min_step: f64::INFINITY,
                ..SolverStats::default()
            },
            last_recorded_t: f64::NEG_INFINITY,
            rails_buf: vec![0.0; 2 * field.n_bases()],
            h_prev: None,
            clip_streak: 0,
        }
    }

    fn eval(&mut self, r: &[f64; 2], x: &[f64], out: &mut [f64]) {
        self.field.eval(r, x, out);
        self.stats.rhs_evaluations += 1;
    }

    /// Records the current state as a sample (forced records always land).
    fn record(&mut self, t: f64, r: &[f64; 2], force: bool) {
        if !force && t - self.last_recorded_t < self.opts.min_record_dt {
            return;
        }
        self.last_recorded_t = t;
        let mut dxdt = vec![0.0; self.field.dim()];
        self.field.eval(r, &self.x, &mut dxdt);
        self.stats.rhs_evaluations += 1;
        self.field.rails(&self.x, &mut self.rails_buf);
        self.t_grid.push(t);
        self.states.push(self.x.clone());
        self.rails_samples.push(self.rails_buf.clone());
        self.deriv_inf.push(vecops::inf_norm(&dxdt));
    }

    /// Recomputes the last sample's ‖ẋ‖∞ under a new reference value.
    fn refresh_last_deriv(&mut self, r: &[f64; 2]) {
        if self.deriv_inf.is_empty() {
            return;
        }
        let mut dxdt = vec![0.0; self.field.dim()];
        self.field.eval(r, &self.x, &mut dxdt);
        self.stats.rhs_evaluations += 1;
        let last = self.deriv_inf.len() - 1;
        self.deriv_inf[last] = vecops::inf_norm(&dxdt);
    }

    /// Whether the field drives some boundary component negative at the
    /// current (clipped) state. Mass-action production terms are sums of
    /// nonnegative products, so a tiny relative tolerance separates genuine
    /// outward flow from evaluation round-off.
    fn field_points_outward(&mut self, r: &[f64; 2]) -> bool {
        let mut dxdt = vec![0.0; self.field.dim()];
        self.field.eval(r, &self.x, &mut dxdt);
        self.stats.rhs_evaluations += 1;
        let tol = 1e-12 * (1.0 + vecops::inf_norm(&dxdt));
        self.x.iter().zip(&dxdt).any(|(x, dx)| *x == 0.0 && *dx < -tol)
    }

    /// Advances from t0 to t1 under constant reference r.
    fn integrate_segment(&mut self, t0: f64, t1: f64, r: &[f64; 2]) -> Result<(), SimError> {
        if t1 <= t0 {
            return Ok(());
        }
        let mut t = t0;
        let mut h = match self.h_prev {
            Some(h) => h,
            None => self.initial_step(t0, t1, r),
        }
        .min(t1 - t0);

        while t < t1 {
            if self.stats.steps_accepted + self.stats.steps_rejected >= self.opts.max_steps {
                return Err(SimError::MaxStepsExceeded { t, max_steps: self.opts.max_steps });
            }
            let h_floor = 1e-13 * float::abs(t).max(1.0);
            if h < h_floor {
                return Err(SimError::StepUnderflow {
                    t,
                    state_inf_norm: vecops::inf_norm(&self.x),
                });
            }
            let clipped_to_end = h >= t1 - t;
            let h_try = if clipped_to_end { t1 - t } else { h };

            let (x_new, err_norm) = if self.rosenbrock {
                self.rosenbrock_step(r, h_try)?
            } else {
                self.dormand_prince_step(r, h_try)
            };

            // Nonnegativity guard: beyond-slack undershoot means the step
            // was too coarse for the dynamics; inside the slack we clip.
            let mut worst_negative = 0.0f64;
            if self.field.nonnegative_states() {
                for v in &x_new {
                    if *v < worst_negative {
                        worst_negative = *v;
                    }
                }
            }
            let acceptable = err_norm <= 1.0 && worst_negative >= -tol::NONNEG_SLACK;

            if acceptable {
                let t_new = if clipped_to_end { t1 } else { t + h_try };
                self.x = x_new;
                if worst_negative < 0.0 {
                    let mut clipped = 0usize;
                    for v in self.x.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                            clipped += 1;
                        }
                    }
                    self.events.push(Event {
                        t: t_new,
                        kind: EventKind::ClippedNegative,
                        detail: format!(
                            "{clipped} component(s) clipped; worst {worst_negative:.3e} nM"
                        ),
                    });
                    // Round-off clipping is sporadic, but a species pinned at
                    // the boundary can also clip on every step. Only an
                    // unbroken run of clipped steps with the field actually
                    // pointing out of the orthant means clipping would
                    // silently distort the dynamics.
                    self.clip_streak += 1;
                    if self.clip_streak > 32 {
                        if self.field_points_outward(r) {
                            return Err(SimError::PersistentNegativity { t: t_new });
                        }
                        self.clip_streak = 0;
                    }
                } else {
                    self.clip_streak = 0;
                }
                t = t_new;
                self.stats.steps_accepted += 1;
                self.stats.min_step = self.stats.min_step.min(h_try);
                self.stats.max_step = self.stats.max_step.max(h_try);

                // Divergence check on the signal rails.
                self.field.rails(&self.x, &mut self.rails_buf);
                let rail_norm = vecops::inf_norm(&self.rails_buf);
                if rail_norm > self.opts.divergence_threshold {
                    self.diverged = true;
                    self.halted = true;
                    self.events.push(Event {
                        t,
                        kind: EventKind::Divergence,
                        detail: format!(
                            "‖rails‖∞ = {rail_norm:.3e} nM exceeds {:.1e} nM",
                            self.opts.divergence_threshold
                        ),
                    });
                    self.record(t, r, true);
                    return Ok(());
                }
                self.record(t, r, t >= t1);
            } else {
                self.stats.steps_rejected += 1;
            }

            // Step-size controller.
            let order = if self.rosenbrock { 3.0 } else { 5.0 };
            let mut factor = if err_norm > 0.0 {
                0.9 * float::powf(err_norm, -1.0 / order)
            } else {
                5.0
            };
            if worst_negative < -tol::NONNEG_SLACK {
                factor = factor.min(0.5);
            }
            factor = factor.clamp(0.2, 5.0);
            if !acceptable {
                factor = factor.min(1.0);
            }
            h = (h_try * factor).max(f64::MIN_POSITIVE);
        }
        self.h_prev = Some(h);
        Ok(())
    }

    /// Conservative first step from the local derivative scale.
    fn initial_step(&mut self, t0: f64, t1: f64, r: &[f64; 2]) -> f64 {
        let dim = self.field.dim();
        let mut f0 = vec![0.0; dim];
        self.field.eval(r, &self.x, &mut f0);
        self.stats.rhs_evaluations += 1;
        let mut scale = 0.0f64;
        for i in 0..dim {
            let sc = self.opts.abs_tol + self.opts.rel_tol * float::abs(self.x[i]);
            scale = scale.max(float::abs(f0[i]) / sc);
        }
        let h = if scale > 0.0 { 0.01 / scale } else { (t1 - t0) * 1e-6 };
        h.min(t1 - t0).max(1e-12)
    }

    fn error_norm(&self, err: &[f64], x_old: &[f64], x_new: &[f64]) -> f64 {
        let dim = err.len();
        let mut acc = 0.0;
        for i in 0..dim {
            let sc = self.opts.abs_tol
                + self.opts.rel_tol * float::abs(x_old[i]).max(float::abs(x_new[i]));
            let e = err[i] / sc;
            acc += e * e;
        }
        float::sqrt(acc / dim as f64)
    }

    /// One explicit Dormand–Prince 5(4) attempt; returns (candidate, error).
    fn dormand_prince_step(&mut self, r: &[f64; 2], h: f64) -> (Vec<f64>, f64) {
        let dim = self.field.dim();
        let x = self.x.clone();
        let mut k = vec![vec![0.0; dim]; 7];
        let mut tmp = vec![0.0; dim];

        let mut k0 = vec![0.0; dim];
        self.eval(r, &x, &mut k0);
        k[0] = k0;

        const A: [[f64; 6]; 6] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [
                19372.0 / 6561.0,
                -25360.0 / 2187.0,
                64448.0 / 6561.0,
                -212.0 / 729.0,
                0.0,
                0.0,
            ],
            [
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
                0.0,
            ],
            [
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
            ],
        ];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];

        for stage in 0..6 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    let a = A[stage][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                tmp[i] = x[i] + h * acc;
            }
            let mut knext = vec![0.0; dim];
            self.eval(r, &tmp, &mut knext);
            k[stage + 1] = knext;
        }
        // The 6th stage combination IS the 5th-order solution (FSAL pair).
        let x_new = tmp.clone();
        let mut err = vec![0.0; dim];
        for i in 0..dim {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    acc += E[j] * kj[i];
                }
            }
            err[i] = h * acc;
        }
        let err_norm = self.error_norm(&err, &x, &x_new);
        (x_new, err_norm)
    }

    /// One Rosenbrock 2(3) attempt; returns (candidate, error).
    fn rosenbrock_step(&mut self, r: &[f64; 2], h: f64) -> Result<(Vec<f64>, f64), SimError> {
        let dim = self.field.dim();
        let x = self.x.clone();
        let d = 1.0 / (2.0 + core::f64::consts::SQRT_2);
        let e32 = 6.0 + core::f64::consts::SQRT_2;

        let mut jac = Mat::zeros(dim, dim);
        if !self.field.jacobian(r, &x, &mut jac) {
            return Err(SimError::JacobianUnavailable);
        }
        self.stats.jacobian_evaluations += 1;

        // W = I − h·d·J
        let mut w = Mat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                w[(i, j)] = -h * d * jac[(i, j)];
            }
            w[(i, i)] += 1.0;
        }
        let lu = Lu::factor(&w, 0.0);
        self.stats.lu_factorizations += 1;

        let mut f0 = vec![0.0; dim];
        self.eval(r, &x, &mut f0);
        let k1 = lu.solve(&f0);

        let mut tmp: Vec<f64> = (0..dim).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let mut f1 = vec![0.0; dim];
        self.eval(r, &tmp, &mut f1);
        let rhs2: Vec<f64> = (0..dim).map(|i| f1[i] - k1[i]).collect();
        let mut k2 = lu.solve(&rhs2);
        for i in 0..dim {
            k2[i] += k1[i];
        }

        let x_new: Vec<f64> = (0..dim).map(|i| x[i] + h * k2[i]).collect();
        let mut f2 = vec![0.0; dim];
        self.eval(r, &x_new, &mut f2);
        for i in 0..dim {
            tmp[i] = f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]);
        }
        let k3 = lu.solve(&tmp);

        let err: Vec<f64> =
            (0..dim).map(|i| (h / 6.0) * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
        let err_norm = self.error_norm(&err, &x, &x_new);
        Ok((x_new, err_norm))
    }

    fn finish(self) -> Trajectory {
        Trajectory {
            species_names: self.species_names,
            n_bases: self.field.n_bases(),
            t: self.t_grid,
            states: self.states,
            rails: self.rails_samples,
            deriv_inf: self.deriv_inf,
            events: self.events,
            diverged: self.diverged,
            stats: self.stats,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// ẋ = −k x, closed form x(t) = x0 e^{−kt}.
    struct Decay {
        k: f64,
    }

    impl OdeField for Decay {
        fn dim(&self) -> usize {
            2
        }
        fn n_bases(&self) -> usize {
            1
        }
        fn eval(&self, _r: &[f64; 2], x: &[f64], dxdt: &mut [f64]) {
            dxdt[0] = -self.k * x[0];
            dxdt[1] = -self.k * x[1];
        }
        fn rails(&self, x: &[f64], rails: &mut [f64]) {
            rails.copy_from_slice(x);
        }
        fn jacobian(&self, _r: &[f64; 2], _x: &[f64], jac: &mut Mat) -> bool {
            jac[(0, 0)] = -self.k;
            jac[(0, 1)] = 0.0;
            jac[(1, 0)] = 0.0;
            jac[(1, 1)] = -self.k;
            true
        }
    }

    #[test]
    fn exponential_decay_matches_the_closed_form() {
        let field = Decay { k: 0.25 };
        let opts = SimOptions::default();
        let traj =
            integrate(&field, &[2.0, 1.0], &ReferenceProfile::zero(), 20.0, &opts).unwrap();
        assert_relative_eq!(traj.last_time(), 20.0);
        let expect = 2.0 * (-0.25f64 * 20.0).exp();
        assert_relative_eq!(traj.last_state()[0], expect, max_relative = 1e-7);
    }

    #[test]
    fn rosenbrock_agrees_with_dormand_prince_on_the_decay() {
        let field = Decay { k: 0.25 };
        let mut opts = SimOptions::default();
        opts.method = Method::Rosenbrock;
        let traj =
            integrate(&field, &[2.0, 1.0], &ReferenceProfile::zero(), 20.0, &opts).unwrap();
        let expect = 2.0 * (-0.25f64 * 20.0).exp();
        // Second-order method: the global error sits well above the local
        // tolerance but must still track the closed form closely.
        assert_relative_eq!(traj.last_state()[0], expect, max_relative = 1e-4);
        assert_eq!(traj.stats.method, "rosenbrock23");
        assert!(traj.stats.lu_factorizations > 0);
    }

    #[test]
    fn profile_validation_enforces_one_rail_and_ordering() {
        assert!(ReferenceProfile::new(vec![
            ProfileStep { t_start: 0.0, r_plus: 1.0, r_minus: 0.0 },
            ProfileStep { t_start: 5.0, r_plus: 0.0, r_minus: 0.5 },
        ])
        .is_ok());
        assert_eq!(
            ReferenceProfile::new(vec![ProfileStep { t_start: 0.0, r_plus: 1.0, r_minus: 1.0 }]),
            Err(ProfileError::BothRails { index: 0 })
        );
        assert_eq!(
            ReferenceProfile::new(vec![
                ProfileStep { t_start: 3.0, r_plus: 1.0, r_minus: 0.0 },
                ProfileStep { t_start: 3.0, r_plus: 0.0, r_minus: 0.0 },
            ]),
            Err(ProfileError::BadTime { index: 1 })
        );
    }

    #[test]
    fn steps_land_exactly_on_profile_breakpoints() {
        let field = Decay { k: 0.01 };
        let profile = ReferenceProfile::new(vec![
            ProfileStep { t_start: 1.0, r_plus: 1.0, r_minus: 0.0 },
            ProfileStep { t_start: 2.5, r_plus: 0.0, r_minus: 0.0 },
        ])
        .unwrap();
        let traj =
            integrate(&field, &[1.0, 1.0], &profile, 10.0, &SimOptions::default()).unwrap();
        assert!(traj.t.iter().any(|t| *t == 1.0));
        assert!(traj.t.iter().any(|t| *t == 2.5));
        assert_eq!(traj.events.iter().filter(|e| e.kind == EventKind::ReferenceStep).count(), 2);
    }

    /// A field that drives its state firmly negative.
    struct SinkBelowZero;

    impl OdeField for SinkBelowZero {
        fn dim(&self) -> usize {
            2
        }
        fn n_bases(&self) -> usize {
            1
        }
        fn eval(&self, _r: &[f64; 2], x: &[f64], dxdt: &mut [f64]) {
            dxdt[0] = -1.0 - x[0];
            dxdt[1] = 0.0;
        }
        fn rails(&self, x: &[f64], rails: &mut [f64]) {
            rails.copy_from_slice(x);
        }
    }

    #[test]
    fn a_field_that_needs_negative_states_fails_loudly() {
        let err = integrate(
            &SinkBelowZero,
            &[0.5, 0.0],
            &ReferenceProfile::zero(),
            10.0,
            &SimOptions::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, SimError::PersistentNegativity { .. } | SimError::StepUnderflow { .. }),
            "got {err:?}"
        );
    }

    /// ẋ = +x, unbounded growth.
    struct Exploder;

    impl OdeField for Exploder {
        fn dim(&self) -> usize {
            2
        }
        fn n_bases(&self) -> usize {
            1
        }
        fn eval(&self, _r: &[f64; 2], x: &[f64], dxdt: &mut [f64]) {
            dxdt[0] = x[0];
            dxdt[1] = x[1];
        }
        fn rails(&self, x: &[f64], rails: &mut [f64]) {
            rails.copy_from_slice(x);
        }
    }

    #[test]
    fn divergence_sets_the_flag_and_stops_early() {
        let mut opts = SimOptions::default();
        opts.divergence_threshold = 100.0;
        let traj =
            integrate(&Exploder, &[1.0, 1.0], &ReferenceProfile::zero(), 50.0, &opts).unwrap();
        assert!(traj.diverged);
        assert!(traj.last_time() < 50.0);
        assert!(traj.events.iter().any(|e| e.kind == EventKind::Divergence));
        // Growth of e^t: the threshold of 100 is crossed near t = ln(100).
        assert_relative_eq!(traj.last_time(), 100.0f64.ln(), epsilon = 0.5);
    }

    #[test]
    fn steady_state_detection_finds_the_settled_tail() {
        let field = Decay { k: 0.5 };
        let traj = integrate(
            &field,
            &[1.0, 0.5],
            &ReferenceProfile::zero(),
            60.0,
            &SimOptions::default(),
        )
        .unwrap();
        let (t_ss, x_ss) = detect_steady_state(&traj, 5.0, 1e-6).expect("settles");
        // ‖ẋ‖∞ = 0.5·x(t) < 1e-6 once x < 2e-6, i.e. t > ln(5e5)/0.5 ≈ 26.2.
        assert!(t_ss > 20.0 && t_ss < 40.0, "t_ss = {t_ss}");
        assert!(x_ss[0] < 3e-6);
        // A diverging run never settles.
        let mut opts = SimOptions::default();
        opts.divergence_threshold = 100.0;
        let boom =
            integrate(&Exploder, &[1.0, 1.0], &ReferenceProfile::zero(), 50.0, &opts).unwrap();
        assert!(detect_steady_state(&boom, 5.0, 1e-6).is_none());
    }

    #[test]
    fn record_thinning_keeps_boundaries() {
        let field = Decay { k: 0.1 };
        let mut opts = SimOptions::default();
        opts.min_record_dt = 7.0;
        let profile =
            ReferenceProfile::new(vec![ProfileStep { t_start: 13.0, r_plus: 1.0, r_minus: 0.0 }])
                .unwrap();
        let traj = integrate(&field, &[1.0, 1.0], &profile, 40.0, &opts).unwrap();
        assert!(traj.t.iter().any(|t| *t == 13.0));
        assert!(traj.t.iter().any(|t| *t == 40.0));
        for pair in traj.t.windows(2) {
            assert!(pair[1] - pair[0] >= 1e-9, "non-monotone grid");
        }
    }

    #[test]
    fn bad_initial_state_is_rejected() {
        let field = Decay { k: 0.1 };
        let err = integrate(
            &field,
            &[-0.5, 1.0],
            &ReferenceProfile::zero(),
            1.0,
            &SimOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, SimError::BadInitialState { expected: 2 });
    }
}
