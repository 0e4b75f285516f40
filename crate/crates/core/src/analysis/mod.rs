//! The numerical backend: spectra, positivity-structure predicates,
//! Frobenius–Perron data, equilibria, linearization, boundedness bounds,
//! and the stability decision tree.

pub mod equilibrium;
pub mod report;

pub use equilibrium::{
    equilibrium_full, equilibrium_q, Classification, EquilibriumError, EquilibriumResult,
};
pub use report::{stability_report, StabilityReport, Verdict};

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::crn::CrnField;
use crate::float;
use crate::linalg::eigen::{self, EigenError};
use crate::linalg::{Lu, Mat};
use crate::tol;

/// The eigenvalue content of a real square matrix, with the derived
/// stability flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues sorted by descending real part (1/s).
    pub eigenvalues: Vec<Complex64>,
    /// α = max over real parts (1/s).
    pub spectral_abscissa: f64,
    /// α < −tolerance: strictly stable.
    pub is_hurwitz: bool,
    /// |α| within the tolerance: never silently reported stable.
    pub is_marginal: bool,
    /// Worst ‖Mv − λv‖₂/‖M‖_F over all eigenpairs.
    pub max_backward_error: f64,
}

impl Spectrum {
    /// The eigenvalue with the largest real part (ties by |imaginary part|).
    pub fn dominant(&self) -> Complex64 {
        let mut best = self.eigenvalues[0];
        for ev in &self.eigenvalues {
            if ev.re > best.re + 1e-300
                || (ev.re == best.re && float::abs(ev.im) > float::abs(best.im))
            {
                best = *ev;
            }
        }
        best
    }
}

/// Full spectrum of `m`, with backward-error verification per eigenpair.
pub fn spectrum(m: &Mat) -> Result<Spectrum, EigenError> {
    let eigenvalues = eigen::eig(m)?;
    let mut alpha = f64::NEG_INFINITY;
    let mut max_backward_error = 0.0f64;
    for ev in &eigenvalues {
        if ev.re > alpha {
            alpha = ev.re;
        }
        let be = eigen::backward_error(m, *ev);
        if be > max_backward_error {
            max_backward_error = be;
        }
    }
    Ok(Spectrum {
        eigenvalues,
        spectral_abscissa: alpha,
        is_hurwitz: alpha < -tol::HURWITZ_MARGIN,
        is_marginal: float::abs(alpha) <= tol::HURWITZ_MARGIN,
        max_backward_error,
    })
}

/// True iff every off-diagonal entry is nonnegative.
pub fn is_metzler(m: &Mat) -> bool {
    let n = m.rows();
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] < 0.0 {
                return false;
            }
        }
    }
    true
}

/// True iff the digraph of nonzero off-diagonal entries (edge j→i for
/// m_ij ≠ 0) is strongly connected, i.e. no permutation brings the matrix
/// to block lower-triangular form.
pub fn is_irreducible(m: &Mat) -> bool {
    let n = m.rows();
    if n == 0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    reaches_all(m, false) && reaches_all(m, true)
}

/// BFS from node 0 along edges j→i (entry m_ij ≠ 0), or the transpose.
fn reaches_all(m: &Mat, transpose: bool) -> bool {
    let n = m.rows();
    let mut seen = vec![false; n];
    let mut queue = vec![0usize];
    seen[0] = true;
    let mut found = 1usize;
    while let Some(j) = queue.pop() {
        for i in 0..n {
            let entry = if transpose { m[(j, i)] } else { m[(i, j)] };
            if i != j && entry != 0.0 && !seen[i] {
                seen[i] = true;
                found += 1;
                queue.push(i);
            }
        }
    }
    found == n
}

/// The left Perron pair of an irreducible Metzler matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    /// λ_F = α{M}, the real dominant eigenvalue (1/s).
    pub lambda_f: f64,
    /// Left eigenvector, strictly positive, ‖w_F‖₁ = 1.
    pub w_f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("the matrix is not Metzler")]
    NotMetzler,
    #[error("the matrix is not irreducible")]
    NotIrreducible,
    #[error("eigenvalue iteration failed: {0}")]
    Eigen(#[from] EigenError),
    #[error("Perron pair verification failed: residual {residual}")]
    ResidualTooLarge { residual: f64 },
}

/// Computes (λ_F, w_F) with w_Fᵀ M = λ_F w_Fᵀ for irreducible Metzler M.
pub fn frobenius_perron(m: &Mat) -> Result<PerronPair, StructureError> {
    if !is_metzler(m) {
        return Err(StructureError::NotMetzler);
    }
    if !is_irreducible(m) {
        return Err(StructureError::NotIrreducible);
    }
    let spec = spectrum(m)?;
    let lambda_f = spec.spectral_abscissa;
    let w_f = eigen::left_eigenvector_real(m, lambda_f);

    // Verification: the residual must vanish and the vector must be
    // strictly positive (Perron's theorem guarantees both in exact math).
    let n = m.rows();
    let scale = m.norm_inf().max(1.0);
    let mut residual = 0.0f64;
    for j in 0..n {
        let mut acc = -lambda_f * w_f[j];
        for i in 0..n {
            acc += w_f[i] * m[(i, j)];
        }
        residual = residual.max(float::abs(acc));
    }
    if residual > tol::PERRON_ABSCISSA_TOL * scale {
        return Err(StructureError::ResidualTooLarge { residual });
    }
    if w_f.iter().any(|v| *v <= 0.0) {
        return Err(StructureError::ResidualTooLarge { residual: f64::INFINITY });
    }
    Ok(PerronPair { lambda_f, w_f })
}

/// Existence condition for a positive equilibrium of the two-state loop:
/// the loop gain must beat the degradation product, c₂c₁ > d₂d₁
/// (the boundary case has no positive root and is excluded).
pub fn descartes_condition(d1: f64, d2: f64, c1: f64, c2: f64) -> bool {
    c2 * c1 > d2 * d1
}

/// Linearization of the mass-action dynamics at a state x*.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// A_s = A + ηJ{x*} with J{x*} = −D{Px*} − D{x*}P.
    pub a_s: Mat,
    /// W_p·J{x*} (N×2N): identically zero — the I/O block of the
    /// linearization never depends on the equilibrium.
    pub wp_j: Mat,
}

/// Builds A_s and the W_p·J{x*} invariant witness at `x_star`.
pub fn linearize(field: &CrnField, x_star: &[f64]) -> Linearization {
    let dim = field.dim();
    let n = dim / 2;
    let mut a_s = Mat::zeros(dim, dim);
    field.jacobian_into(x_star, &mut a_s);

    // J{x*} entries: J_ii = −(Px*)_i and J_{i,swap(i)} = −x*_i.
    // Row k of W_p·J is row k minus row k+N of J.
    let mut wp_j = Mat::zeros(n, dim);
    for k in 0..n {
        // Column k: J_kk − J_{k+N,k} = −x*_{k+N} − (−x*_{k+N}).
        wp_j[(k, k)] = -x_star[k + n] - (-x_star[k + n]);
        // Column k+N: J_{k,k+N} − J_{k+N,k+N} = −x*_k − (−x*_k).
        wp_j[(k, k + n)] = -x_star[k] - (-x_star[k]);
    }
    Linearization { a_s, wp_j }
}

/// Concentration bound for the parity dynamics q̇ = Mq + v − (η/2)q∘q.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessBound {
    /// Unforced bound 2√N‖M‖₂/η (nM).
    pub unforced: f64,
    /// Forced bound: positive root of (η/2)B² − √N‖M‖₂B − ‖v‖₁ = 0 (nM).
    /// Present only when v ≠ 0.
    pub forced: Option<f64>,
    /// The forced figure solves an implicit inequality at its fixed point;
    /// it is an estimate, not a certified level set.
    pub forced_is_estimate: bool,
}

/// Evaluates the boundedness bound for the parity block `r22` with
/// annihilation rate `eta` and constant forcing `v` (pass an empty or zero
/// slice for the unforced case).
pub fn boundedness_bound(r22: &Mat, eta: f64, v: &[f64]) -> BoundednessBound {
    let n = r22.rows() as f64;
    let k = 0.5 * eta;
    let m2 = r22.norm_2();
    let unforced = float::sqrt(n) * m2 / k;
    let v1: f64 = v.iter().map(|x| float::abs(*x)).sum();
    let forced = if v1 > 0.0 {
        let a = float::sqrt(n) * m2;
        Some((a + float::sqrt(a * a + 4.0 * k * v1)) / (2.0 * k))
    } else {
        None
    };
    BoundednessBound { unforced, forced, forced_is_estimate: true }
}

/// A verified diagonal Lyapunov certificate for a Hurwitz Metzler matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCertificate {
    /// d > 0 with MᵀD{d} + D{d}M negative definite.
    pub d: Vec<f64>,
    /// Verified spectral abscissa of the symmetric form (< 0).
    pub gram_abscissa: f64,
}

/// Constructs d via ξ = −M⁻¹1 > 0, w = −M⁻ᵀ1 > 0, d_i = w_i/ξ_i, then
/// verifies MᵀD + DM ≺ 0 numerically. Returns None when M is not Metzler,
/// not strictly Hurwitz, or verification fails.
pub fn diagonal_stability_certificate(m: &Mat) -> Option<DiagonalCertificate> {
    let n = m.rows();
    if n == 0 || !is_metzler(m) {
        return None;
    }
    let lu = Lu::factor(m, 0.0);
    let ones = vec![1.0; n];
    let xi: Vec<f64> = lu.solve(&ones).iter().map(|v| -v).collect();
    let lu_t = Lu::factor(&m.transpose(), 0.0);
    let w: Vec<f64> = lu_t.solve(&ones).iter().map(|v| -v).collect();
    if xi.iter().any(|v| !v.is_finite() || *v <= 0.0)
        || w.iter().any(|v| !v.is_finite() || *v <= 0.0)
    {
        return None;
    }
    let d: Vec<f64> = (0..n).map(|i| w[i] / xi[i]).collect();

    // S = MᵀD + DM is symmetric Metzler with Sξ < 0, hence negative
    // definite; verify the abscissa numerically anyway.
    let mut s = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = m[(j, i)] * d[j] + d[i] * m[(i, j)];
        }
    }
    let spec = spectrum(&s).ok()?;
    if spec.spectral_abscissa >= 0.0 {
        return None;
    }
    Some(DiagonalCertificate { d, gram_abscissa: spec.spectral_abscissa })
}

/// d/dt of V_d(x) = xᵀD{d}x along a trajectory point: 2Σᵢ dᵢ xᵢ ẋᵢ.
pub fn quadratic_lyapunov_rate(d: &[f64], x: &[f64], dxdt: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d.len() {
        acc += d[i] * x[i] * dxdt[i];
    }
    2.0 * acc
}
