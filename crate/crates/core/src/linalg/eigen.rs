//! Eigenvalues of real nonsymmetric matrices.
//!
//! Pipeline: Householder reduction to upper Hessenberg form, then the
//! implicit double-shift QR iteration (Francis steps with the classic
//! exceptional-shift escape). Eigenvalues come back deterministically sorted
//! (descending real part, then descending imaginary part). Eigenvectors are
//! recovered on demand by shifted inverse iteration, which also powers the
//! backward-error verification pass.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{Lu, Mat};
use crate::float;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EigenError {
    /// The QR iteration failed to deflate within the sweep budget.
    #[error("QR iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Total Francis-sweep budget: generous, since typical matrices deflate in
/// well under 10·n sweeps.
fn sweep_cap(n: usize) -> usize {
    100 * n
}

/// All eigenvalues of a real square matrix, deterministically ordered.
pub fn eig(a: &Mat) -> Result<Vec<Complex64>, EigenError> {
    assert!(a.is_square(), "eigenvalues need a square matrix");
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![Complex64::new(a[(0, 0)], 0.0)]);
    }
    let mut h = hessenberg(a);
    let mut eigs = hqr(&mut h)?;
    eigs.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(eigs)
}

/// Householder similarity reduction to upper Hessenberg form.
pub fn hessenberg(a: &Mat) -> Mat {
    let n = a.rows();
    let mut h = a.clone();
    if n < 3 {
        return h;
    }
    for k in 0..n - 2 {
        // Householder vector annihilating column k below the subdiagonal.
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += h[(i, k)] * h[(i, k)];
        }
        let norm = float::sqrt(norm2);
        if norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = -float::copysign(norm, x0);
        let mut v = vec![0.0; n - k - 1];
        v[0] = x0 - alpha;
        for i in k + 2..n {
            v[i - k - 1] = h[(i, k)];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // Left update: H[k+1.., k..] -= β v (vᵀ H[k+1.., k..]).
        for j in k..n {
            let mut dot = 0.0;
            for i in 0..v.len() {
                dot += v[i] * h[(k + 1 + i, j)];
            }
            let f = beta * dot;
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= f * v[i];
            }
        }
        // Right update: H[.., k+1..] -= β (H[.., k+1..] v) vᵀ.
        for i in 0..n {
            let mut dot = 0.0;
            for j in 0..v.len() {
                dot += h[(i, k + 1 + j)] * v[j];
            }
            let f = beta * dot;
            for j in 0..v.len() {
                h[(i, k + 1 + j)] -= f * v[j];
            }
        }
        // The column is now exactly [*, α, 0, …]ᵀ.
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    h
}

/// Implicit double-shift QR on an upper Hessenberg matrix (destroys `h`).
fn hqr(h: &mut Mat) -> Result<Vec<Complex64>, EigenError> {
    let n = h.rows();
    let cap = sweep_cap(n);
    let eps = f64::EPSILON;
    let mut eigs = vec![Complex64::new(0.0, 0.0); n];

    // Norm over the Hessenberg band, used as scale for negligibility tests.
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += float::abs(h[(i, j)]);
        }
    }

    let mut nn = n as isize - 1;
    let mut t = 0.0; // accumulated exceptional shifts
    let mut sweeps = 0usize;

    while nn >= 0 {
        let mut its = 0;
        loop {
            // Look for a negligible subdiagonal element.
            let mut l = nn;
            while l >= 1 {
                let mut s =
                    float::abs(h[(l as usize - 1, l as usize - 1)]) + float::abs(h[(l as usize, l as usize)]);
                if s == 0.0 {
                    s = anorm;
                }
                if float::abs(h[(l as usize, l as usize - 1)]) <= eps * s {
                    h[(l as usize, l as usize - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = h[(nn as usize, nn as usize)];
            if l == nn {
                // One real root found.
                eigs[nn as usize] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = h[(nn as usize - 1, nn as usize - 1)];
            let mut w = h[(nn as usize, nn as usize - 1)] * h[(nn as usize - 1, nn as usize)];
            if l == nn - 1 {
                // A 2×2 block has isolated: two roots.
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = float::sqrt(float::abs(q));
                let x = x + t;
                if q >= 0.0 {
                    let z = p + float::copysign(z, p);
                    eigs[nn as usize - 1] = Complex64::new(x + z, 0.0);
                    eigs[nn as usize] = if z != 0.0 {
                        Complex64::new(x - w / z, 0.0)
                    } else {
                        Complex64::new(x + z, 0.0)
                    };
                } else {
                    eigs[nn as usize] = Complex64::new(x + p, -z);
                    eigs[nn as usize - 1] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }

            // No root isolated yet: one more Francis sweep.
            if sweeps >= cap {
                return Err(EigenError::NoConvergence { sweeps });
            }
            if its == 10 || its == 20 {
                // Exceptional shift to break symmetry-induced cycling.
                t += x;
                for i in 0..=nn as usize {
                    h[(i, i)] -= x;
                }
                let s = float::abs(h[(nn as usize, nn as usize - 1)])
                    + float::abs(h[(nn as usize - 1, nn as usize - 2)]);
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            sweeps += 1;

            // Find two consecutive small subdiagonals to start the sweep at.
            let mut m = nn - 2;
            let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
            while m >= l {
                let mu = m as usize;
                let z = h[(mu, mu)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(mu + 1, mu)] + h[(mu, mu + 1)];
                q = h[(mu + 1, mu + 1)] - z - rr - ss;
                r = h[(mu + 2, mu + 1)];
                let s = float::abs(p) + float::abs(q) + float::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = float::abs(h[(mu, mu - 1)]) * (float::abs(q) + float::abs(r));
                let v = float::abs(p)
                    * (float::abs(h[(mu - 1, mu - 1)]) + float::abs(z) + float::abs(h[(mu + 1, mu + 1)]));
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                let iu = i as usize;
                h[(iu, iu - 2)] = 0.0;
                if i != m + 2 {
                    h[(iu, iu - 3)] = 0.0;
                }
            }

            // The double QR sweep itself: chase the bulge from m to nn-1.
            for k in m..=nn - 1 {
                let ku = k as usize;
                if k != m {
                    p = h[(ku, ku - 1)];
                    q = h[(ku + 1, ku - 1)];
                    r = if k != nn - 1 { h[(ku + 2, ku - 1)] } else { 0.0 };
                    x = float::abs(p) + float::abs(q) + float::abs(r);
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = float::copysign(float::sqrt(p * p + q * q + r * r), p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        h[(ku, ku - 1)] = -h[(ku, ku - 1)];
                    }
                } else {
                    h[(ku, ku - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                // Row modification.
                for j in ku..=nn as usize {
                    let mut pp = h[(ku, j)] + q * h[(ku + 1, j)];
                    if k != nn - 1 {
                        pp += r * h[(ku + 2, j)];
                        h[(ku + 2, j)] -= pp * z;
                    }
                    h[(ku + 1, j)] -= pp * y;
                    h[(ku, j)] -= pp * x;
                }
                // Column modification.
                let mmin = if nn < k + 3 { nn } else { k + 3 } as usize;
                for i in l as usize..=mmin {
                    let mut pp = x * h[(i, ku)] + y * h[(i, ku + 1)];
                    if k != nn - 1 {
                        pp += z * h[(i, ku + 2)];
                        h[(i, ku + 2)] -= pp * r;
                    }
                    h[(i, ku + 1)] -= pp * q;
                    h[(i, ku)] -= pp;
                }
            }
        }
    }
    Ok(eigs)
}

/// Right eigenvector for `lambda` by shifted inverse iteration.
///
/// Near-singularity of (A − λI) is exactly what makes the iteration converge
/// in one or two applications; exactly-zero pivots are clamped inside the LU.
pub fn eigenvector(a: &Mat, lambda: Complex64) -> Vec<Complex64> {
    let n = a.rows();
    let scale = a.norm_fro().max(f64::MIN_POSITIVE);
    let mut m = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, Complex64::new(a[(i, j)], 0.0));
        }
        let d = m.get(i, i) - lambda;
        m.set(i, i, d);
    }
    let lu = CLu::factor(m, f64::EPSILON * scale);
    // Deterministic start vector with no accidental structure.
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 / (i as f64 + 1.0), 1.0 / (i as f64 + 2.0)))
        .collect();
    normalize(&mut v);
    for _ in 0..3 {
        let mut w = lu.solve(&v);
        normalize(&mut w);
        v = w;
    }
    v
}

/// Backward error ‖Av − λv‖₂ / ‖A‖_F of the eigenpair recovered for λ.
pub fn backward_error(a: &Mat, lambda: Complex64) -> f64 {
    let v = eigenvector(a, lambda);
    let n = a.rows();
    let mut res = 0.0;
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += a[(i, j)] * v[j];
        }
        acc -= lambda * v[i];
        res += acc.norm_sqr();
    }
    float::sqrt(res) / a.norm_fro().max(f64::MIN_POSITIVE)
}

/// Left Perron vector: solves wᵀM = λw by inverse iteration on Mᵀ with a
/// real shift, returning a real vector normalized to ‖w‖₁ = 1 and flipped to
/// nonnegative orientation.
pub fn left_eigenvector_real(m: &Mat, lambda: f64) -> Vec<f64> {
    let n = m.rows();
    let mt = m.transpose();
    let scale = mt.norm_fro().max(f64::MIN_POSITIVE);
    let mut shifted = mt.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let lu = Lu::factor(&shifted, f64::EPSILON * scale);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    for _ in 0..4 {
        let w = lu.solve(&v);
        let norm = super::vecops::two_norm(&w);
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        v = w.iter().map(|x| x / norm).collect();
    }
    // Orient positively and normalize to unit 1-norm.
    let sum: f64 = v.iter().sum();
    let sign = if sum < 0.0 { -1.0 } else { 1.0 };
    let one: f64 = v.iter().map(|x| float::abs(*x)).sum();
    v.iter().map(|x| sign * x / one).collect()
}

fn normalize(v: &mut [Complex64]) {
    let norm = float::sqrt(v.iter().map(|c| c.norm_sqr()).sum());
    if norm > 0.0 && norm.is_finite() {
        for c in v.iter_mut() {
            *c /= norm;
        }
    }
}

/// Minimal dense complex matrix, used only for inverse iteration.
struct CMat {
    n: usize,
    data: Vec<Complex64>,
}

impl CMat {
    fn zeros(n: usize) -> Self {
        CMat { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }
    #[inline]
    fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }
    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }
}

/// Partial-pivot LU over complex entries with pivot clamping.
struct CLu {
    m: CMat,
    piv: Vec<usize>,
}

impl CLu {
    fn factor(mut m: CMat, clamp: f64) -> CLu {
        let n = m.n;
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut pmax = m.get(k, k).norm_sqr();
            for i in k + 1..n {
                let v = m.get(i, k).norm_sqr();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    let tmp = m.get(k, j);
                    m.set(k, j, m.get(p, j));
                    m.set(p, j, tmp);
                }
                piv.swap(k, p);
            }
            if float::sqrt(m.get(k, k).norm_sqr()) < clamp {
                m.set(k, k, Complex64::new(clamp, 0.0));
            }
            let pivot = m.get(k, k);
            for i in k + 1..n {
                let f = m.get(i, k) / pivot;
                m.set(i, k, f);
                for j in k + 1..n {
                    let v = m.get(i, j) - f * m.get(k, j);
                    m.set(i, j, v);
                }
            }
        }
        CLu { m, piv }
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.m.n;
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.m.get(i, j) * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.m.get(i, j) * x[j];
            }
            x[i] = acc / self.m.get(i, i);
        }
        x
    }
}
