//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! and the scaling-and-squaring matrix exponential.
//!
//! Sizes in this crate stay in the hundreds, so everything is plain `O(n^3)`.

use std::ops::{Index, IndexMut};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "row-major data of length {} does not fill {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Extract the sub-matrix with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-T::one()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn lu(&self) -> Result<Lu<T>> {
        Lu::factor(self)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.lu()?.inverse()
    }

    /// Exact 1-norm condition number `||A||_1 ||A^-1||_1`.
    pub fn condition_1(&self) -> Result<T> {
        Ok(self.norm1() * self.inverse()?.norm1())
    }

    /// Cholesky test on the symmetric part `(A + A^T)/2`.
    pub fn symmetric_part_is_positive_definite(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let half = T::lit(0.5);
        let mut l = Self::from_fn(n, n, |i, j| half * (self[(i, j)] + self[(j, i)]));
        for j in 0..n {
            let mut d = l[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return false;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = l[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        true
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return invalid(format!("LU of non-square {}x{} matrix", a.rows, a.cols));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= scale * T::epsilon() * T::lit(1e-3) {
                return Err(Error::Singular {
                    context: format!("zero pivot in column {k}"),
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in (k + 1)..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Result<DenseMatrix<T>> {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        crate::scalar::ensure_finite(&inv.data, "matrix inverse")?;
        Ok(inv)
    }
}

const PADE_ORDER: usize = 8;

/// `exp(t A)` by scaling and squaring with the diagonal `[8/8]` Padé approximant.
///
/// The scaled argument satisfies `||t A / 2^s||_1 <= 1/2`, where the `[8/8]`
/// truncation error is far below double precision.
pub fn expm<T: Real>(a: &DenseMatrix<T>, t: T) -> Result<DenseMatrix<T>> {
    if !a.is_square() {
        return invalid(format!("exponential of non-square {}x{} matrix", a.rows, a.cols));
    }
    crate::scalar::ensure_finite(&a.data, "matrix exponential argument")?;
    let n = a.rows;
    let ta = a.scaled(t);
    let norm = ta.norm1();
    let mut squarings = 0i32;
    if norm > T::lit(0.5) {
        squarings = (norm / T::lit(0.5)).log2().ceil().to_i32().unwrap_or(0).max(0);
    }
    let x = ta.scaled(T::lit(0.5).powi(squarings));

    // Padé coefficients c_k = (2m-k)! m! / ((2m)! k! (m-k)!), built by the ratio recurrence.
    let m = PADE_ORDER;
    let mut coeffs = vec![T::one(); m + 1];
    for k in 1..=m {
        let ratio = T::from_usize_lossy(m + 1 - k) / T::from_usize_lossy(k * (2 * m + 1 - k));
        coeffs[k] = coeffs[k - 1] * ratio;
    }

    let ident = DenseMatrix::identity(n);
    let mut power = ident.clone();
    let mut num = ident.clone();
    let mut den = ident;
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        power = power.matmul(&x);
        let term = power.scaled(c);
        num = num.add(&term);
        den = if k % 2 == 0 {
            den.add(&term)
        } else {
            den.sub(&term)
        };
    }
    let lu = den.lu()?;
    let mut result = DenseMatrix::zeros(n, n);
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = num[(i, j)];
        }
        let sol = lu.solve(&col);
        for i in 0..n {
            result[(i, j)] = sol[i];
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

/// Exponential-integrator weights for `Z`: returns `(e^Z, phi1(Z), phi2(Z))` with
/// `phi1(Z) = \int_0^1 e^{(1-s)Z} ds` and `phi2(Z) = \int_0^1 e^{(1-s)Z} s ds`.
///
/// Computed as blocks of the exponential of the augmented matrix
/// `[[Z, I, 0], [0, 0, I], [0, 0, 0]]`, which needs no inverse of `Z`.
pub fn phi_functions<T: Real>(
    z: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>, DenseMatrix<T>)> {
    if !z.is_square() {
        return invalid("phi functions of non-square matrix");
    }
    let n = z.rows;
    let mut aug = DenseMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = z[(i, j)];
        }
        aug[(i, n + i)] = T::one();
        aug[(n + i, 2 * n + i)] = T::one();
    }
    let e = expm(&aug, T::one())?;
    let block = |c0: usize| DenseMatrix::from_fn(n, n, |i, j| e[(i, c0 + j)]);
    Ok((block(0), block(n), block(2 * n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_exp(a: &DenseMatrix<f64>, terms: usize) -> DenseMatrix<f64> {
        let n = a.rows();
        let mut sum = DenseMatrix::identity(n);
        let mut term = DenseMatrix::identity(n);
        for k in 1..terms {
            term = term.matmul(a).scaled(1.0 / k as f64);
            sum = sum.add(&term);
        }
        sum
    }

    #[test]
    fn lu_solves_small_system() {
        let a = DenseMatrix::<f64>::from_row_major(3, 3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0])
            .unwrap();
        let x = [1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let got = a.lu().unwrap().solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(a.lu(), Err(Error::Singular { .. })));
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&DenseMatrix::<f64>::zeros(4, 4), 1.0).unwrap();
        assert_eq!(e.max_abs_diff(&DenseMatrix::identity(4)), 0.0);
    }

    #[test]
    fn expm_diagonal_closed_form() {
        let a = DenseMatrix::from_diagonal(&[-1.0, -2.0]);
        let e = expm(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_matches_taylor_on_small_norm() {
        let a = DenseMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.45);
        let a = a.scaled(0.5 / a.norm1());
        let e = expm(&a, 1.0).unwrap();
        let t = taylor_exp(&a, 30);
        assert!(e.max_abs_diff(&t) / t.max_abs() < 1e-12);
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(expm(&DenseMatrix::<f64>::zeros(2, 3), 1.0).is_err());
    }

    #[test]
    fn phi_functions_scalar_case() {
        let z = -0.7f64;
        let (e, p1, p2) = phi_functions(&DenseMatrix::from_diagonal(&[z])).unwrap();
        assert!((e[(0, 0)] - z.exp()).abs() < 1e-14);
        assert!((p1[(0, 0)] - (z.exp() - 1.0) / z).abs() < 1e-14);
        assert!((p2[(0, 0)] - (z.exp() - 1.0 - z) / (z * z)).abs() < 1e-13);
    }

    #[test]
    fn positive_definite_test() {
        let spd = DenseMatrix::from_row_major(2, 2, vec![2.0, 1.0, -0.5, 1.0]).unwrap();
        assert!(spd.symmetric_part_is_positive_definite());
        let indef = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(!indef.symmetric_part_is_positive_definite());
    }
}
