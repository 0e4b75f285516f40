//! Dense linear algebra sized for this problem domain.
//!
//! The matrices here are small (the worked systems top out around 10×10 for
//! analysis and a few hundred for strand-displacement Jacobians), so the
//! implementations favor clarity and determinism over blocking or SIMD:
//! row-major storage, partial-pivot LU, and an explicit eigensolver in
//! [`eigen`].

pub mod eigen;

use alloc::vec;
use alloc::vec::Vec;

use crate::float;

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for a in &mut out.data {
            *a *= s;
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Copy of the `nr × nc` block with top-left corner `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols);
        let mut out = Mat::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    /// Writes `block` into `self` with top-left corner `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    /// Maximum absolute row sum (operator ∞-norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| float::abs(*v)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        float::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| float::abs(*v)).fold(0.0, f64::max)
    }

    /// Largest singular value, computed as √λ_max(MᵀM).
    pub fn norm_2(&self) -> f64 {
        let gram = self.transpose().matmul(self);
        // MᵀM is symmetric positive semidefinite; its eigenvalues are real
        // and the QR sweep recovers them reliably.
        let eigs = eigen::eig(&gram).expect("Gram matrix eigenvalues");
        let lmax = eigs.iter().map(|l| l.re).fold(0.0, f64::max);
        float::sqrt(lmax.max(0.0))
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub struct Lu {
    lu: Mat,
    piv: Vec<usize>,
    /// True when a pivot fell below the clamp threshold and was replaced.
    pub clamped: bool,
}

impl Lu {
    /// Factors `m`; exactly-zero pivots are replaced by `clamp` (pass a tiny
    /// positive value to keep near-singular solves usable, e.g. for inverse
    /// iteration; pass 0.0 to let singularity surface as ±inf/NaN).
    pub fn factor(m: &Mat, clamp: f64) -> Lu {
        assert!(m.is_square());
        let n = m.rows;
        let mut lu = m.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let mut clamped = false;
        for k in 0..n {
            // Pivot search.
            let mut p = k;
            let mut pmax = float::abs(lu[(k, k)]);
            for i in k + 1..n {
                let v = float::abs(lu[(i, k)]);
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                piv.swap(k, p);
            }
            if float::abs(lu[(k, k)]) < clamp {
                lu[(k, k)] = if lu[(k, k)] < 0.0 { -clamp } else { clamp };
                clamped = true;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let sub = f * lu[(k, j)];
                    lu[(i, j)] -= sub;
                }
            }
        }
        Lu { lu, piv, clamped }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        // Forward substitution (unit lower triangle).
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }

    /// Solves M X = B column by column.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let n = self.lu.rows;
        assert_eq!(b.rows, n);
        let mut out = Mat::zeros(n, b.cols);
        for j in 0..b.cols {
            let col: Vec<f64> = (0..n).map(|i| b[(i, j)]).collect();
            let x = self.solve(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Vector helpers used across the analysis and simulation modules.
pub mod vecops {
    use crate::float;

    pub fn inf_norm(x: &[f64]) -> f64 {
        x.iter().map(|v| float::abs(*v)).fold(0.0, f64::max)
    }

    pub fn one_norm(x: &[f64]) -> f64 {
        x.iter().map(|v| float::abs(*v)).sum()
    }

    pub fn two_norm(x: &[f64]) -> f64 {
        float::sqrt(x.iter().map(|v| v * v).sum())
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// y ← y + s·x
    pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
        debug_assert_eq!(y.len(), x.len());
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += s * xi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matmul_and_transpose_agree_with_hand_products() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.row(0), &[19.0, 22.0]);
        assert_eq!(c.row(1), &[43.0, 50.0]);
        let t = a.transpose();
        assert_eq!(t.row(0), &[1.0, 3.0]);
    }

    #[test]
    fn lu_solves_a_known_system() {
        let a = Mat::from_rows(&[
            vec![2.0, 1.0, 1.0],
            vec![4.0, -6.0, 0.0],
            vec![-2.0, 7.0, 2.0],
        ]);
        let lu = Lu::factor(&a, 0.0);
        let x = lu.solve(&[5.0, -2.0, 9.0]);
        let back = a.mul_vec(&x);
        for (b, want) in back.iter().zip([5.0, -2.0, 9.0]) {
            assert_relative_eq!(*b, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn spectral_norm_of_diagonal_is_max_abs_entry() {
        let d = Mat::from_rows(&[vec![-3.0, 0.0], vec![0.0, 2.0]]);
        assert_relative_eq!(d.norm_2(), 3.0, max_relative = 1e-10);
    }

    #[test]
    fn block_roundtrip() {
        let mut m = Mat::zeros(4, 4);
        let b = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        m.set_block(2, 0, &b);
        assert_eq!(m.block(2, 0, 2, 2), b);
        assert_eq!(m[(2, 1)], 2.0);
        assert_eq!(m[(0, 0)], 0.0);
    }
}
