//! Rail partition and rotated coordinates of the compiled linear dynamics.
//!
//! With the state ordered `x = [x⁺; x⁻]`, the linear map splits into four
//! N×N blocks: same-rail maps A₁± on the diagonal and crossed-rail maps A₂±
//! off it. The similarity transformation
//!
//! ```text
//! W = [ I  −I ]        W⁻¹ = ½ Wᵀ
//!     [ I   I ]
//! ```
//!
//! takes the state to the signal/parity pair (p, q) = (x⁺−x⁻, x⁺+x⁻). When
//! every rate is rail-symmetric the rotated map is block diagonal: the signal
//! block R̄₁₁ = Ā₁−Ā₂ carries the designed input–output dynamics and the
//! parity block R̄₂₂ = Ā₁+Ā₂ carries the internal (annihilation-limited)
//! dynamics.

use alloc::vec::Vec;

use super::{assemble_linear, Crn};
use crate::linalg::Mat;

/// The compiled linear dynamics refined into rail blocks and rotated
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSystem {
    /// Number of base species N.
    pub n: usize,
    /// Full linear state map, 2N×2N, Metzler.
    pub a: Mat,
    /// Forcing map, 2N×2 (columns: reference rails).
    pub b: Mat,
    /// Annihilation rate, 1/(nM·s).
    pub eta: f64,
    /// Same-rail block acting on x⁺ (includes the negative diagonal).
    pub a1_plus: Mat,
    /// Same-rail block acting on x⁻.
    pub a1_minus: Mat,
    /// Crossed block: plus-rail catalysts producing minus-rail species.
    pub a2_plus: Mat,
    /// Crossed block: minus-rail catalysts producing plus-rail species.
    pub a2_minus: Mat,
    /// Reference forcing into the plus rails (column for r⁺).
    pub b1_plus: Vec<f64>,
    /// Reference forcing into the minus rails (column for r⁻).
    pub b1_minus: Vec<f64>,
    /// Rotated blocks: ṗ = R₁₁p + R₁₂q + …, q̇ = R₂₁p + R₂₂q + …
    pub r11: Mat,
    pub r12: Mat,
    pub r21: Mat,
    pub r22: Mat,
    /// Rotated forcing W·B, 2N×2.
    pub rb: Mat,
    /// True iff every rate is rail-symmetric (A₁⁺=A₁⁻, A₂⁺=A₂⁻, B mirrors).
    pub symmetric: bool,
    /// Signal block Ā₁−Ā₂; populated only in the symmetric case.
    pub r11_bar: Option<Mat>,
    /// Parity block Ā₁+Ā₂; populated only in the symmetric case.
    pub r22_bar: Option<Mat>,
}

/// Splits the compiled dynamics into rail blocks and computes the rotation.
pub fn extract_structure(crn: &Crn) -> StructuredSystem {
    let (a, b) = assemble_linear(crn);
    let n = crn.n_bases();

    let a1_plus = a.block(0, 0, n, n);
    let a2_minus = a.block(0, n, n, n);
    let a2_plus = a.block(n, 0, n, n);
    let a1_minus = a.block(n, n, n, n);

    let b1_plus: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
    let b1_minus: Vec<f64> = (0..n).map(|i| b[(i + n, 1)]).collect();

    // Closed-form rotated blocks (expanding W·A·W⁻¹ blockwise):
    //   R₁₁ = ½(A₁⁺ + A₁⁻ − A₂⁺ − A₂⁻)     R₁₂ = ½(A₁⁺ − A₁⁻ − A₂⁺ + A₂⁻)
    //   R₂₁ = ½(A₁⁺ − A₁⁻ + A₂⁺ − A₂⁻)     R₂₂ = ½(A₁⁺ + A₁⁻ + A₂⁺ + A₂⁻)
    let half = 0.5;
    let r11 = a1_plus.add(&a1_minus).sub(&a2_plus).sub(&a2_minus).scaled(half);
    let r12 = a1_plus.sub(&a1_minus).sub(&a2_plus).add(&a2_minus).scaled(half);
    let r21 = a1_plus.sub(&a1_minus).add(&a2_plus).sub(&a2_minus).scaled(half);
    let r22 = a1_plus.add(&a1_minus).add(&a2_plus).add(&a2_minus).scaled(half);

    // Rotated forcing W·B.
    let mut rb = Mat::zeros(2 * n, 2);
    for i in 0..n {
        for c in 0..2 {
            rb[(i, c)] = b[(i, c)] - b[(i + n, c)];
            rb[(i + n, c)] = b[(i, c)] + b[(i + n, c)];
        }
    }

    // Rail symmetry: same-rail and crossed blocks agree exactly, and the
    // reference drives both rails identically.
    let b_mirrors = (0..n).all(|i| b[(i, 0)] == b[(i + n, 1)] && b[(i, 1)] == b[(i + n, 0)]);
    let symmetric = a1_plus == a1_minus && a2_plus == a2_minus && b_mirrors;

    let (r11_bar, r22_bar) = if symmetric {
        (Some(a1_plus.sub(&a2_plus)), Some(a1_plus.add(&a2_plus)))
    } else {
        (None, None)
    };

    StructuredSystem {
        n,
        a,
        b,
        eta: crn.eta,
        a1_plus,
        a1_minus,
        a2_plus,
        a2_minus,
        b1_plus,
        b1_minus,
        r11,
        r12,
        r21,
        r22,
        rb,
        symmetric,
        r11_bar,
        r22_bar,
    }
}

impl StructuredSystem {
    /// The rotation W = [[I, −I], [I, I]] as an explicit matrix.
    pub fn rotation(&self) -> Mat {
        let n = self.n;
        let mut w = Mat::zeros(2 * n, 2 * n);
        for i in 0..n {
            w[(i, i)] = 1.0;
            w[(i, i + n)] = -1.0;
            w[(i + n, i)] = 1.0;
            w[(i + n, i + n)] = 1.0;
        }
        w
    }

    /// W⁻¹ = ½Wᵀ.
    pub fn rotation_inverse(&self) -> Mat {
        self.rotation().transpose().scaled(0.5)
    }

    /// The rotated map R = W·A·W⁻¹ reassembled from its four blocks.
    pub fn rotated(&self) -> Mat {
        let n = self.n;
        let mut r = Mat::zeros(2 * n, 2 * n);
        r.set_block(0, 0, &self.r11);
        r.set_block(0, n, &self.r12);
        r.set_block(n, 0, &self.r21);
        r.set_block(n, n, &self.r22);
        r
    }
}

/// Signal coordinates p = x⁺ − x⁻ (the first half of Wx).
pub fn p_of(x: &[f64]) -> Vec<f64> {
    let n = x.len() / 2;
    (0..n).map(|i| x[i] - x[i + n]).collect()
}

/// Parity coordinates q = x⁺ + x⁻ (the second half of Wx).
pub fn q_of(x: &[f64]) -> Vec<f64> {
    let n = x.len() / 2;
    (0..n).map(|i| x[i] + x[i + n]).collect()
}

/// Inverse rotation: rails from signal/parity pairs, x± = ½(q ± p).
pub fn x_of(p: &[f64], q: &[f64]) -> Vec<f64> {
    let n = p.len();
    debug_assert_eq!(q.len(), n);
    let mut x = Vec::with_capacity(2 * n);
    for i in 0..n {
        x.push(0.5 * (q[i] + p[i]));
    }
    for i in 0..n {
        x.push(0.5 * (q[i] - p[i]));
    }
    x
}

/// The rail-swap image Px (plus and minus halves exchanged).
pub fn swap_rails(x: &[f64]) -> Vec<f64> {
    let n = x.len() / 2;
    let mut out = Vec::with_capacity(x.len());
    out.extend_from_slice(&x[n..]);
    out.extend_from_slice(&x[..n]);
    out
}
