//! Small fixed-size and dense linear algebra used by the solvers.
//!
//! Problem sizes are desk scale (a few hundred unknowns), so everything here
//! is dense, row-major and sequential.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Two-component column vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    /// Outer product `self · otherᵀ`.
    pub fn outer(self, other: Self) -> Mat2<T> {
        Mat2::new(
            self.x * other.x,
            self.x * other.y,
            self.y * other.x,
            self.y * other.y,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// 2×2 matrix stored row-major as `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> Mat2<T> {
    pub const fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one())
    }

    pub fn diag(xx: T, yy: T) -> Self {
        Self::new(xx, T::zero(), T::zero(), yy)
    }

    pub fn transpose(self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn trace(self) -> T {
        self.a + self.d
    }

    pub fn det(self) -> T {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(self) -> Option<Self> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        Some(Self::new(
            self.d / det,
            -self.b / det,
            -self.c / det,
            self.a / det,
        ))
    }

    pub fn mul_vec(self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn scale(self, k: T) -> Self {
        Self::new(self.a * k, self.b * k, self.c * k, self.d * k)
    }

    /// Quadratic form `vᵀ·self·v`.
    pub fn quad(self, v: Vec2<T>) -> T {
        v.dot(self.mul_vec(v))
    }

    pub fn is_symmetric(self) -> bool {
        self.b == self.c
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(self) -> (T, T) {
        let half = lit::<T>(0.5);
        let off = (self.b + self.c) * half;
        let mean = (self.a + self.d) * half;
        let dev = ((self.a - self.d) * half).hypot(off);
        (mean - dev, mean + dev)
    }

    /// True when the matrix is symmetric and admits a Cholesky factor.
    pub fn is_spd(self) -> bool {
        self.is_symmetric() && self.a > T::zero() && self.det() > T::zero()
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Self::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Self::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Self::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == T::zero() {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::Dimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &Matrix<T> {
        &self.l
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `A·X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let bt = b.transpose();
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = self.solve(bt.row(j));
            for (i, v) in col.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Rebuilds `L·Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        self.l.matmul(&self.l.transpose())
    }
}

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::Dimension(format!(
                "lu needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let scale = a.max_abs();
        let tiny = scale * T::EPS * lit::<T>(n.max(1) as f64);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold(
                        (k, -T::one()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if !(pmax > tiny) || !pmax.is_finite() {
                return Err(Error::SingularSystem {
                    condition_estimate: f64::INFINITY,
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        let n = self.lu.rows();
        if n == 0 {
            return 1.0;
        }
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0_f64), |(lo, hi), i| {
            let v = self.lu[(i, i)].abs().to_f64().unwrap_or(f64::NAN);
            (lo.min(v), hi.max(v))
        });
        hi / lo
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

/// Solves a general square system, rejecting numerically singular matrices.
pub fn solve_dense<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let lu = Lu::factor(a)?;
    let ratio = lu.pivot_ratio();
    if !(ratio < 1.0 / to_eps::<T>()) {
        return Err(Error::SingularSystem {
            condition_estimate: ratio,
        });
    }
    let x = lu.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem {
            condition_estimate: ratio,
        });
    }
    Ok(x)
}

/// Solves `A·x = b` where the unknowns listed in `fixed` are prescribed.
///
/// Equivalent to replacing each fixed row by an identity equation, but the
/// prescribed entries are copied into `x` verbatim and eliminated from the
/// remaining equations, so they hold exactly.
pub fn solve_with_fixed<T: Scalar>(a: &Matrix<T>, b: &[T], fixed: &[(usize, T)]) -> Result<Vec<T>> {
    let n = a.rows();
    assert_eq!(b.len(), n);
    let mut value: Vec<Option<T>> = vec![None; n];
    for &(i, v) in fixed {
        value[i] = Some(v);
    }
    let free: Vec<usize> = (0..n).filter(|&i| value[i].is_none()).collect();
    let mut x: Vec<T> = value.iter().map(|v| v.unwrap_or(T::zero())).collect();
    if free.is_empty() {
        return Ok(x);
    }
    let sub = Matrix::from_fn(free.len(), free.len(), |r, c| a[(free[r], free[c])]);
    let rhs: Vec<T> = free
        .iter()
        .map(|&i| {
            let mut r = b[i];
            for &(j, v) in fixed {
                r -= a[(i, j)] * v;
            }
            r
        })
        .collect();
    let sol = solve_dense(&sub, &rhs)?;
    for (&i, v) in free.iter().zip(sol) {
        x[i] = v;
    }
    Ok(x)
}

fn to_eps<T: Scalar>() -> f64 {
    T::EPS.to_f64().unwrap_or(f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Matrix<f64> {
        Matrix::from_rows(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let a = spd3();
        let ch = Cholesky::factor(&a).unwrap();
        let r = ch.reconstruct();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[(i, j)] - a[(i, j)]).abs() < 1e-14);
            }
        }
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        assert!((back[0] - 1.0).abs() < 1e-13);
        assert!((back[2] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let a = Matrix::<f64>::from_rows(3, 3, vec![0.0, 2.0, 1.0, 1.0, -1.0, 0.0, 3.0, 0.0, 1.0]);
        let x = solve_dense(&a, &[3.0, 0.0, 4.0]).unwrap();
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([3.0, 0.0, 4.0]) {
            assert!((b - e).abs() < 1e-13);
        }
    }

    #[test]
    fn lu_reports_singular() {
        let a = Matrix::from_rows(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            solve_dense(&a, &[1.0, 1.0]),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn mat2_inverse_and_eigenvalues() {
        let m = Mat2::<f64>::new(2.0, 1.0, 1.0, 2.0);
        let inv = m.inverse().unwrap();
        let p = m * inv;
        assert!((p.a - 1.0).abs() < 1e-15 && p.b.abs() < 1e-15);
        let (lo, hi) = m.sym_eigenvalues();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
    }
}
