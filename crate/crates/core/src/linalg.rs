//! Small dense linear algebra: row-major matrices, Householder QR with column
//! pivoting, and Cholesky factorization.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative pivot threshold below which a column is treated as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
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

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self::from_fn(self.rows, columns.len(), |r, c| self[(r, columns[c])])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Householder QR factorization with column pivoting, `A P = Q R`.
///
/// Factorization stops at the first pivot whose magnitude falls below
/// `RANK_TOLERANCE * |R[0,0]|`; the number of accepted pivots is the rank.
#[derive(Debug, Clone)]
pub struct PivotedQr<T> {
    rows: usize,
    cols: usize,
    // column-major working copy; upper triangle holds R
    a: Vec<Vec<T>>,
    reflectors: Vec<(Vec<T>, T)>,
    perm: Vec<usize>,
    rank: usize,
}

impl<T: Real> PivotedQr<T> {
    pub fn new(m: &Matrix<T>) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let mut a: Vec<Vec<T>> = (0..cols).map(|c| m.column(c)).collect();
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut reflectors = Vec::new();
        let tol = T::lit(RANK_TOLERANCE);
        let mut first_pivot = T::zero();
        let mut rank = 0;

        for k in 0..rows.min(cols) {
            let (best, best_norm) = (k..cols)
                .map(|j| {
                    let n: T = a[j][k..].iter().map(|&v| v * v).sum();
                    (j, n)
                })
                .fold((k, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let norm = best_norm.sqrt();
            if k == 0 {
                first_pivot = norm;
            }
            if norm == T::zero() || norm <= tol * first_pivot {
                break;
            }
            a.swap(k, best);
            perm.swap(k, best);

            let x0 = a[k][k];
            let alpha = if x0 >= T::zero() { -norm } else { norm };
            let mut v: Vec<T> = a[k][k..].to_vec();
            v[0] -= alpha;
            let vtv: T = v.iter().map(|&e| e * e).sum();
            let beta = if vtv > T::zero() { T::lit(2.0) / vtv } else { T::zero() };
            a[k][k] = alpha;
            for e in a[k][k + 1..].iter_mut() {
                *e = T::zero();
            }
            for col in a.iter_mut().skip(k + 1) {
                let dot: T = v.iter().zip(&col[k..]).map(|(&vi, &ci)| vi * ci).sum();
                let s = beta * dot;
                for (ci, &vi) in col[k..].iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            reflectors.push((v, beta));
            rank += 1;
        }

        Self {
            rows,
            cols,
            a,
            reflectors,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.cols
    }

    /// Absolute diagonal of R in pivot order.
    pub fn pivots(&self) -> Vec<T> {
        (0..self.rank).map(|k| self.a[k][k].abs()).collect()
    }

    /// Least-squares solution of `A x = b`; errors unless A has full column rank.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} for {} rows",
                b.len(),
                self.rows
            )));
        }
        if !self.is_full_rank() {
            return Err(Error::RankDeficient {
                rank: self.rank,
                columns: self.cols,
            });
        }
        let mut qtb = b.to_vec();
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            let dot: T = v.iter().zip(&qtb[k..]).map(|(&vi, &bi)| vi * bi).sum();
            let s = *beta * dot;
            for (bi, &vi) in qtb[k..].iter_mut().zip(v) {
                *bi -= s * vi;
            }
        }
        let n = self.cols;
        let mut z = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut acc = qtb[i];
            for j in i + 1..n {
                acc -= self.a[j][i] * z[j];
            }
            z[i] = acc / self.a[i][i];
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        Ok(x)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Fails with [`Error::SingularCovariance`] when a pivot is not positive
    /// relative to the matrix scale.
    pub fn new(m: &Matrix<T>) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::DimensionMismatch("Cholesky needs a square matrix".into()));
        }
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(T::zero(), T::max);
        let tol = T::lit(RANK_TOLERANCE) * scale;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return Err(Error::SingularCovariance);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    /// Solves `L z = v` by forward substitution.
    pub fn forward(&self, v: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut z = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = v[i];
            for k in 0..i {
                acc -= self.l[(i, k)] * z[k];
            }
            z[i] = acc / self.l[(i, i)];
        }
        z
    }

    /// `v' M^{-1} v`.
    pub fn inverse_quadratic_form(&self, v: &[T]) -> T {
        self.forward(v).iter().map(|&z| z * z).sum()
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_square_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = PivotedQr::new(&a).solve(&[3.0, 5.0]).unwrap();
        assert!(f64::abs(x[0] - 0.8) < 1e-12);
        assert!(f64::abs(x[1] - 1.4) < 1e-12);
    }

    #[test]
    fn qr_detects_collinear_columns() {
        let a = Matrix::from_rows(&[
            vec![1.0, 2.0, 1.0],
            vec![1.0, 4.0, 2.0],
            vec![1.0, 6.0, 3.0],
            vec![1.0, 8.0, 4.0],
        ])
        .unwrap();
        let qr = PivotedQr::new(&a);
        assert_eq!(qr.rank(), 2);
        assert!(matches!(
            qr.solve(&[1.0, 2.0, 3.0, 4.0]),
            Err(Error::RankDeficient { rank: 2, columns: 3 })
        ));
    }

    #[test]
    fn qr_least_squares_overdetermined() {
        // y = 1 + 2x exactly
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let x = PivotedQr::new(&a).solve(&[1.0, 3.0, 5.0]).unwrap();
        assert!(f64::abs(x[0] - 1.0) < 1e-12 && f64::abs(x[1] - 2.0) < 1e-12);
    }

    #[test]
    fn cholesky_quadratic_form_matches_inverse() {
        let m = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let ch = Cholesky::new(&m).unwrap();
        // inverse = [[3,-2],[-2,4]]/8
        let v = [1.0, 2.0];
        let expected = (3.0 * 1.0 - 2.0 * 2.0 * 2.0 + 4.0 * 4.0) / 8.0;
        assert!(f64::abs(ch.inverse_quadratic_form(&v) - expected) < 1e-12);
        let ll = ch.factor().matmul(&ch.factor().transpose()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(f64::abs(ll[(i, j)] - m[(i, j)]) < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(Cholesky::new(&m).unwrap_err(), Error::SingularCovariance);
    }
}
