//! Equilibrium solvers: the parity fixed point and the full-state Newton
//! iteration with its three-way seeding strategy.

use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::{frobenius_perron, is_metzler};
use crate::crn::structure::{extract_structure, x_of};
use crate::crn::{mass_action_field, Crn, CrnField};
use crate::float;
use crate::linalg::{vecops, Lu, Mat};
use crate::sim::{integrate, Method, ReferenceProfile, SimOptions};
use crate::tol;

/// Which kind of equilibrium a solve landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// All components vanish.
    Origin,
    /// Every parity component is strictly positive.
    Positive,
    /// Some components vanish while others do not — structurally suspect
    /// for irreducible systems and excluded from verdicts.
    MixedInvalid,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Origin => "origin",
            Classification::Positive => "positive",
            Classification::MixedInvalid => "mixed-invalid",
        }
    }
}

/// A converged (or best-effort) equilibrium with its residual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// The state (nM): parity coordinates for [`equilibrium_q`], full rail
    /// coordinates for [`equilibrium_full`].
    pub x_star: Vec<f64>,
    /// ‖ẋ(x*)‖∞ (nM/s).
    pub residual: f64,
    pub classification: Classification,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EquilibriumError {
    #[error("no equilibrium solve converged; best residual {residual} nM/s")]
    NoConvergence { last: Vec<f64>, residual: f64 },
}

fn classify(values: impl Iterator<Item = f64> + Clone) -> Classification {
    let max = values.clone().fold(0.0f64, |m, v| m.max(float::abs(v)));
    let eps = 1e-9 * max.max(1.0);
    if values.clone().all(|v| float::abs(v) <= eps) {
        Classification::Origin
    } else if values.clone().all(|v| v > eps) {
        Classification::Positive
    } else {
        Classification::MixedInvalid
    }
}

/// Residual of the parity equation Mq + v − k q∘q.
fn q_residual(m: &Mat, k: f64, v: &[f64], q: &[f64]) -> f64 {
    let n = q.len();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut acc = v[j] - k * q[j] * q[j];
        for i in 0..n {
            acc += m[(j, i)] * q[i];
        }
        worst = worst.max(float::abs(acc));
    }
    worst
}

/// One damped fixed-point run of the componentwise root update
/// q_j ← (m_jj + √(m_jj² + 4k(Σ_{i≠j} m_ji q_i + v_j)))/(2k).
fn fixed_point_branch(m: &Mat, k: f64, v: &[f64], seed: &[f64]) -> (Vec<f64>, bool) {
    let n = seed.len();
    let mut q = seed.to_vec();
    let mut delta_prev = vec![0.0; n];
    for _ in 0..tol::FIXED_POINT_MAX_ITERS {
        let mut q_new = vec![0.0; n];
        for j in 0..n {
            let mut c = v[j];
            for i in 0..n {
                if i != j {
                    c += m[(j, i)] * q[i];
                }
            }
            // Metzler structure keeps c ≥ 0; clamp round-off.
            c = c.max(0.0);
            let mjj = m[(j, j)];
            q_new[j] = (mjj + float::sqrt(mjj * mjj + 4.0 * k * c)) / (2.0 * k);
        }
        let mut delta: Vec<f64> = (0..n).map(|j| q_new[j] - q[j]).collect();
        // Damp on oscillation: successive updates pointing against each
        // other halve the step instead of ping-ponging.
        if vecops::dot(&delta, &delta_prev) < 0.0 {
            for d in delta.iter_mut() {
                *d *= 0.5;
            }
        }
        for j in 0..n {
            q[j] += delta[j];
        }
        let q_scale = vecops::inf_norm(&q).max(1.0);
        if vecops::inf_norm(&delta) < tol::FIXED_POINT_TOL * q_scale {
            return (q, true);
        }
        delta_prev = delta;
    }
    (q, false)
}

/// Solves the parity equilibrium equation Mq + v = k q∘q over q ≥ 0.
///
/// Runs the origin branch (seed q = 0, reaching the least fixed point) and,
/// when M is irreducible Metzler with λ_F > 0, the positive branch seeded at
/// (λ_F/k)·1; the positive branch wins when it converges to a strictly
/// positive vector. Cascaded (reducible) unforced systems therefore report
/// the origin.
pub fn equilibrium_q(m: &Mat, k: f64, v: &[f64]) -> Result<EquilibriumResult, EquilibriumError> {
    let n = m.rows();
    assert!(k > 0.0, "annihilation-derived rate k must be positive");
    assert_eq!(v.len(), n, "forcing vector length must match the matrix");

    let (q_origin, origin_converged) = fixed_point_branch(m, k, v, &vec![0.0; n]);

    let positive = if is_metzler(m) {
        match frobenius_perron(m) {
            Ok(pair) if pair.lambda_f > tol::PERRON_ABSCISSA_TOL => {
                let seed = vec![pair.lambda_f / k; n];
                Some(fixed_point_branch(m, k, v, &seed))
            }
            _ => None,
        }
    } else {
        None
    };

    let pick = |q: Vec<f64>, converged: bool| EquilibriumResult {
        residual: q_residual(m, k, v, &q),
        classification: classify(q.iter().copied()),
        x_star: q,
        converged,
    };

    if let Some((q_pos, pos_converged)) = positive {
        if pos_converged {
            let result = pick(q_pos, true);
            if result.classification == Classification::Positive {
                return Ok(result);
            }
        }
    }
    if origin_converged {
        return Ok(pick(q_origin, true));
    }
    let residual = q_residual(m, k, v, &q_origin);
    Err(EquilibriumError::NoConvergence { last: q_origin, residual })
}

struct Candidate {
    x: Vec<f64>,
    residual: f64,
    classification: Classification,
}

/// Damped Newton on g(x) = Ax + Br − η(Px)∘x with Jacobian A + ηJ{x}.
fn newton(field: &CrnField, r: &[f64; 2], seed: Vec<f64>) -> Option<Candidate> {
    let dim = field.dim();
    let n = dim / 2;
    let mut x = seed;
    let mut g = vec![0.0; dim];
    field.eval_into(r, &x, &mut g);
    let mut res = vecops::inf_norm(&g);

    for _ in 0..tol::NEWTON_MAX_ITERS {
        if res <= tol::EQUILIBRIUM_RESIDUAL {
            break;
        }
        let mut jac = Mat::zeros(dim, dim);
        field.jacobian_into(&x, &mut jac);
        let lu = Lu::factor(&jac, 1e-300);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = lu.solve(&rhs);
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }

        // Backtracking line search on the residual norm, with trials
        // projected onto the nonnegative orthant: concentrations outside it
        // are not states, and the mass-action residual landscape there has
        // spurious minima that trap the raw Newton step.
        let mut s = 1.0;
        let mut accepted = false;
        while s >= 1.0 / 1024.0 {
            let x_try: Vec<f64> =
                (0..dim).map(|i| (x[i] + s * step[i]).max(0.0)).collect();
            let mut g_try = vec![0.0; dim];
            field.eval_into(r, &x_try, &mut g_try);
            let res_try = vecops::inf_norm(&g_try);
            if res_try < (1.0 - 0.25 * s) * res || res_try <= tol::EQUILIBRIUM_RESIDUAL {
                x = x_try;
                g = g_try;
                res = res_try;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if res > tol::EQUILIBRIUM_RESIDUAL {
        return None;
    }
    field.eval_into(r, &x, &mut g);
    let residual = vecops::inf_norm(&g);
    let q: Vec<f64> = (0..n).map(|j| x[j] + x[j + n]).collect();
    Some(Candidate { residual, classification: classify(q.iter().copied()), x })
}

/// Solves ẋ = 0 for the full dual-rail dynamics under constant reference r.
///
/// Seeds: (a) the origin; (b) a parity seed built from [`equilibrium_q`] on
/// the R₂₂ block, mapped back through p = 0; (c) the tail of a coarse
/// pre-integration (skipped when that trajectory diverges). Among converged
/// candidates a strictly positive equilibrium is preferred, then the origin.
pub fn equilibrium_full(crn: &Crn, r: [f64; 2]) -> Result<EquilibriumResult, EquilibriumError> {
    let field = mass_action_field(crn);
    let dim = field.dim();
    let n = dim / 2;
    let mut candidates: Vec<Candidate> = Vec::new();

    // Seed (a): the origin.
    if let Some(c) = newton(&field, &r, vec![0.0; dim]) {
        candidates.push(c);
    }

    // Seed (b): parity equilibrium of the R₂₂ block, entered with p = 0.
    let structure = extract_structure(crn);
    let v_q: Vec<f64> =
        (0..n).map(|i| structure.rb[(i + n, 0)] * r[0] + structure.rb[(i + n, 1)] * r[1]).collect();
    if let Ok(parity) = equilibrium_q(&structure.r22, 0.5 * crn.eta, &v_q) {
        let seed = x_of(&vec![0.0; n], &parity.x_star);
        if let Some(c) = newton(&field, &r, seed) {
            candidates.push(c);
        }
    }

    // Seed (c): pre-integration tail; a divergent trajectory disqualifies it.
    let profile = if r[0] > 0.0 || r[1] > 0.0 {
        ReferenceProfile::constant(r[0], r[1]).expect("constant reference")
    } else {
        ReferenceProfile::zero()
    };
    let tail = 2.0e6;
    let mut opts = SimOptions::default();
    opts.rel_tol = 1e-6;
    opts.abs_tol = 1e-9;
    opts.method = Method::DormandPrince;
    opts.min_record_dt = tail;
    if let Ok(traj) = integrate(&field, &vec![1.0; dim], &profile, tail, &opts) {
        if !traj.diverged {
            if let Some(c) = newton(&field, &r, traj.last_state().to_vec()) {
                candidates.push(c);
            }
        }
    }

    let rank = |c: &Candidate| match c.classification {
        Classification::Positive => 2,
        Classification::Origin => 1,
        Classification::MixedInvalid => 0,
    };
    candidates.sort_by(|a, b| {
        rank(b).cmp(&rank(a)).then(a.residual.partial_cmp(&b.residual).expect("finite residuals"))
    });

    match candidates.into_iter().next() {
        Some(best) => Ok(EquilibriumResult {
            residual: best.residual,
            classification: best.classification,
            x_star: best.x,
            converged: true,
        }),
        None => {
            // Report the best effort: a fresh origin evaluation.
            let mut g = vec![0.0; dim];
            field.eval_into(&r, &vec![0.0; dim], &mut g);
            Err(EquilibriumError::NoConvergence {
                last: vec![0.0; dim],
                residual: vecops::inf_norm(&g),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crn::compile_dual_rail;
    use crate::frontend::{pi_feedback_loop, two_state_loop, RateTable};
    use approx::assert_relative_eq;

    /// Bisection root of q³ + 2q² + 3q − 2 on [0, 1] as an independent
    /// check on the positive parity equilibrium of the two-state loop.
    fn cubic_root_oracle() -> f64 {
        let f = |q: f64| q * q * q + 2.0 * q * q + 3.0 * q - 2.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn parity_equilibrium_matches_the_cubic_oracle() {
        // Two-state loop with unit rates and gain 2, k = 1.
        let m = Mat::from_rows(&[vec![-1.0, 2.0], vec![1.0, -1.0]]);
        let eq = equilibrium_q(&m, 1.0, &[0.0, 0.0]).unwrap();
        assert!(eq.converged);
        assert_eq!(eq.classification, Classification::Positive);
        let q1 = cubic_root_oracle();
        let q2 = (q1 + 1.0) * q1 / 2.0;
        assert_relative_eq!(eq.x_star[0], q1, epsilon = 1e-9);
        assert_relative_eq!(eq.x_star[1], q2, epsilon = 1e-9);
        assert!(eq.residual < 1e-10);
    }

    #[test]
    fn hurwitz_triangular_systems_settle_at_the_origin() {
        let m = Mat::from_rows(&[vec![-1.0, 0.0, 0.0], vec![0.5, -2.0, 0.0], vec![0.0, 1.0, -0.5]]);
        let eq = equilibrium_q(&m, 1.0, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(eq.classification, Classification::Origin);
        assert_eq!(eq.x_star, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn weak_gain_gives_only_the_origin() {
        // c₂c₁ = 0.5 < d₂d₁ = 1: λ_F < 0, no positive branch.
        let m = Mat::from_rows(&[vec![-1.0, 0.5], vec![1.0, -1.0]]);
        let eq = equilibrium_q(&m, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(eq.classification, Classification::Origin);
    }

    #[test]
    fn forced_parity_equilibrium_is_positive_and_scales_with_k() {
        let m = Mat::from_rows(&[vec![-1.0, 0.5], vec![1.0, -1.0]]);
        let v = [0.3, 0.0];
        let eq = equilibrium_q(&m, 1.0, &v).unwrap();
        assert_eq!(eq.classification, Classification::Positive);
        assert!(eq.residual < 1e-10);
    }

    #[test]
    fn full_equilibrium_of_a_cascade_is_the_origin() {
        let open =
            compile_dual_rail(&pi_feedback_loop(&RateTable::nominal()).without_feedback())
                .unwrap();
        let eq = equilibrium_full(&open, [0.0, 0.0]).unwrap();
        assert_eq!(eq.classification, Classification::Origin);
        assert!(eq.residual <= 1e-10);
    }

    #[test]
    fn nominal_loop_has_a_positive_symmetric_equilibrium() {
        let crn = compile_dual_rail(&pi_feedback_loop(&RateTable::nominal())).unwrap();
        let eq = equilibrium_full(&crn, [0.0, 0.0]).unwrap();
        assert_eq!(eq.classification, Classification::Positive);
        // Symmetric rates and zero reference: both rails agree.
        for j in 0..5 {
            let plus = eq.x_star[j];
            let minus = eq.x_star[j + 5];
            assert!(plus > 0.0);
            assert_relative_eq!(plus, minus, max_relative = 1e-8);
        }
    }

    #[test]
    fn asymmetric_loop_equilibrium_is_found_despite_divergence() {
        // Pre-integration diverges here; the parity seed must carry it.
        let crn = compile_dual_rail(&pi_feedback_loop(&RateTable::asymmetric())).unwrap();
        let eq = equilibrium_full(&crn, [0.0, 0.0]).unwrap();
        assert_eq!(eq.classification, Classification::Positive);
        assert!(eq.residual <= 1e-10);
    }

    #[test]
    fn equilibrium_scales_inversely_with_the_annihilation_rate() {
        use crate::frontend::RatePair;
        let crn = compile_dual_rail(&pi_feedback_loop(&RateTable::nominal())).unwrap();
        let eq1 = equilibrium_full(&crn, [0.0, 0.0]).unwrap();
        let mut factors = alloc::collections::BTreeMap::new();
        factors.insert(alloc::string::String::from("eta"), RatePair::symmetric(10.0));
        let scaled = crate::crn::apply_perturbation(&crn, &factors).unwrap();
        let eq10 = equilibrium_full(&scaled, [0.0, 0.0]).unwrap();
        for j in 0..10 {
            assert_relative_eq!(eq1.x_star[j], 10.0 * eq10.x_star[j], max_relative = 1e-6);
        }
    }

    #[test]
    fn two_state_full_equilibrium_matches_the_parity_solution() {
        let crn = compile_dual_rail(&two_state_loop(1.0, 1.0, 1.0, 2.0)).unwrap();
        // Unit loop rates with the compiled η: k = η/2.
        let eq = equilibrium_full(&crn, [0.0, 0.0]).unwrap();
        assert_eq!(eq.classification, Classification::Positive);
        let k = 0.5 * crn.eta;
        let m = Mat::from_rows(&[vec![-1.0, 2.0], vec![1.0, -1.0]]);
        let parity = equilibrium_q(&m, k, &[0.0, 0.0]).unwrap();
        for j in 0..2 {
            let q_full = eq.x_star[j] + eq.x_star[j + 2];
            assert_relative_eq!(q_full, parity.x_star[j], max_relative = 1e-7);
        }
    }
}

