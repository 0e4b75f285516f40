//! Cross-validation of the QR eigensolver against an independent route:
//! characteristic-polynomial coefficients by the Faddeev–LeVerrier recursion,
//! then simultaneous root finding with the Aberth–Ehrlich iteration. The two
//! methods share no code beyond basic matrix arithmetic, so agreement to
//! eight digits on random matrices is strong evidence both are right.

use dualrail_core::linalg::{eigen, Mat};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coefficients of det(λI − A) = λⁿ + c[0]λⁿ⁻¹ + … + c[n−1].
fn charpoly(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = Vec::with_capacity(n);
    let mut m = a.clone();
    let mut c = -trace(&m);
    coeffs.push(c);
    for k in 2..=n {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += c;
        }
        m = a.matmul(&shifted);
        c = -trace(&m) / k as f64;
        coeffs.push(c);
    }
    coeffs
}

fn trace(m: &Mat) -> f64 {
    (0..m.rows()).map(|i| m[(i, i)]).sum()
}

/// All roots of the monic polynomial λⁿ + c[0]λⁿ⁻¹ + … + c[n−1].
fn aberth_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    // Fujiwara bound on root magnitude for the starting circle.
    let mut radius: f64 = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        radius = radius.max(2.0 * c.abs().powf(1.0 / (k as f64 + 1.0)));
    }
    radius = radius.max(0.5);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            radius * Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    for _ in 0..400 {
        let mut max_step = 0.0f64;
        let snapshot = z.clone();
        for k in 0..n {
            let (p, dp) = horner(coeffs, snapshot[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = p / dp;
            let mut repulsion = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    repulsion += (snapshot[k] - snapshot[j]).finv();
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let step = newton / denom;
            z[k] -= step;
            max_step = max_step.max(step.norm() / (1.0 + z[k].norm()));
        }
        if max_step < 1e-14 {
            break;
        }
    }
    z
}

/// Value and derivative of the monic polynomial at z (Horner).
fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Greedy bipartite match: every QR eigenvalue must be within `tol` of a
/// distinct polynomial root.
fn assert_spectra_match(qr: &[Complex64], oracle: &[Complex64], tol: f64) {
    let mut remaining: Vec<Complex64> = oracle.to_vec();
    for lam in qr {
        let (idx, dist) = remaining
            .iter()
            .enumerate()
            .map(|(i, r)| (i, (r - lam).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("oracle root list exhausted");
        assert!(
            dist <= tol,
            "eigenvalue {lam} is {dist:.3e} away from nearest polynomial root (tol {tol:.1e})"
        );
        remaining.swap_remove(idx);
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = rng.gen_range(-scale..scale);
        }
    }
    m
}

#[test]
fn qr_spectra_match_charpoly_roots_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    for trial in 0..40 {
        let n = 2 + (trial % 6); // sizes 2..=7
        let m = random_matrix(&mut rng, n, 2.0);
        let eigs = eigen::eig(&m).expect("QR converged");
        let roots = aberth_roots(&charpoly(&m));
        // Scale-aware tolerance: both routes are accurate to ~1e-10 here.
        let scale = eigs.iter().map(|e| e.norm()).fold(1.0f64, f64::max);
        assert_spectra_match(&eigs, &roots, 1e-8 * scale);
    }
}

#[test]
fn qr_eigenpairs_pass_the_backward_error_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for _ in 0..20 {
        let m = random_matrix(&mut rng, 6, 1.5);
        for lam in eigen::eig(&m).expect("QR converged") {
            let be = eigen::backward_error(&m, lam);
            assert!(be < 1e-10, "backward error {be:.3e} for eigenvalue {lam}");
        }
    }
}

#[test]
fn metzler_like_random_matrices_also_agree() {
    // Off-diagonal nonnegative, diagonal negative: the structure every
    // compiled rate matrix has. Checks the solver on the relevant class.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for _ in 0..30 {
        let n = 5;
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    m[(i, j)] = -rng.gen_range(0.01..2.0);
                } else if rng.gen_bool(0.6) {
                    m[(i, j)] = rng.gen_range(0.0..1.0);
                }
            }
        }
        let eigs = eigen::eig(&m).expect("QR converged");
        let roots = aberth_roots(&charpoly(&m));
        let scale = eigs.iter().map(|e| e.norm()).fold(1.0f64, f64::max);
        assert_spectra_match(&eigs, &roots, 1e-8 * scale);
        // The spectral abscissa of a Metzler matrix is attained by a real
        // eigenvalue; the sorted list must lead with it.
        assert!(
            eigs[0].im.abs() <= 1e-9 * scale,
            "dominant eigenvalue of a Metzler matrix must be real, got {}",
            eigs[0]
        );
    }
}

#[test]
fn repeated_and_clustered_roots_stay_within_loose_match() {
    // (λ−1)²(λ+2) via a Jordan-ish companion construction.
    let m = Mat::from_rows(&[
        vec![1.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, -2.0],
    ]);
    let eigs = eigen::eig(&m).unwrap();
    let roots = aberth_roots(&charpoly(&m));
    // Defective pairs split as O(√ε); allow the square-root blowup.
    assert_spectra_match(&eigs, &roots, 1e-6);
}
