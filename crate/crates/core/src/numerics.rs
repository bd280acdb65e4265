//! Dense linear algebra for desk-scale problems.
//!
//! Everything here is row-major and allocation-friendly rather than fast:
//! the programs built by the engine rarely exceed a few dozen variables.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Absolute tolerance on `|M - Mᵀ|` entries before a matrix counts as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

const JACOBI_SWEEP_CAP: usize = 100;

/// Row-major dense matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                if (self[(r, c)] - self[(c, r)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> DenseMatrix {
        let mut s = self.clone();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let v = 0.5 * (self[(r, c)] + self[(c, r)]);
                s[(r, c)] = v;
                s[(c, r)] = v;
            }
        }
        s
    }

    fn check_symmetric(&self) -> Result<DenseMatrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        if !self.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::NotSymmetric);
        }
        Ok(self.symmetrized())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `a + s·b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        let m = m.check_symmetric()?;
        let n = m.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = m[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = diag.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let mut y = rhs.to_vec();
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

    /// `log det M`
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.l.rows();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv.symmetrized()
    }
}

/// Solves `M x = rhs` for symmetric positive-definite `M`.
pub fn solve_spd(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            found: rhs.len(),
        });
    }
    Ok(Cholesky::factor(m)?.solve(rhs))
}

/// Solves a general square system by LU with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-14 · max|M|`.
pub fn solve_general(m: &DenseMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = m.rows();
    debug_assert!(m.is_square() && rhs.len() == n);
    let mut a = m.clone();
    let mut b = rhs.to_vec();
    let floor = 1e-14 * a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|r| (r, a[(r, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= floor {
            return None;
        }
        if piv != k {
            for c in 0..n {
                let tmp = a[(k, c)];
                a[(k, c)] = a[(piv, c)];
                a[(piv, c)] = tmp;
            }
            b.swap(k, piv);
        }
        for r in (k + 1)..n {
            let f = a[(r, k)] / a[(k, k)];
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[(r, c)] -= f * a[(k, c)];
            }
            b[r] -= f * b[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for c in (i + 1)..n {
            s -= a[(i, c)] * b[c];
        }
        b[i] = s / a[(i, i)];
    }
    Some(b)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DenseMatrix,
}

impl SymEigen {
    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let v = &self.eigenvectors;
        let lv = DenseMatrix::from_diagonal(&self.eigenvalues);
        v.matmul(&lv).matmul(&v.transpose())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Splits `M = P - N` with `P, N` positive semi-definite from the sign of each eigenvalue.
    pub fn psd_split(&self) -> (DenseMatrix, DenseMatrix) {
        let pos: Vec<f64> = self.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let neg: Vec<f64> = self.eigenvalues.iter().map(|&l| (-l).max(0.0)).collect();
        let v = &self.eigenvectors;
        let vt = v.transpose();
        let p = v.matmul(&DenseMatrix::from_diagonal(&pos)).matmul(&vt);
        let n = v.matmul(&DenseMatrix::from_diagonal(&neg)).matmul(&vt);
        (p.symmetrized(), n.symmetrized())
    }
}

/// Cyclic Jacobi eigenvalue iteration.
pub fn sym_eigen(m: &DenseMatrix) -> Result<SymEigen> {
    sym_eigen_with_cap(m, JACOBI_SWEEP_CAP)
}

pub fn sym_eigen_with_cap(m: &DenseMatrix, max_sweeps: usize) -> Result<SymEigen> {
    let mut a = m.check_symmetric()?;
    let n = a.rows();
    let mut v = DenseMatrix::identity(n);
    let scale = a.max_abs();
    let mut converged = n <= 1 || scale == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence {
                iterations: max_sweeps,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|r| ((r + 1)..n).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)] * a[(r, c)])
            .sum::<f64>()
            .sqrt();
        converged = off <= 1e-15 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        // Sign convention: first nonzero component of each eigenvector is positive.
        let col = v.column(src);
        let flip = col
            .iter()
            .find(|c| c.abs() > 1e-12)
            .is_some_and(|&c| c < 0.0);
        for r in 0..n {
            vectors[(r, dst)] = if flip { -col[r] } else { col[r] };
        }
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn spd_identity_and_diagonal() {
        let x = solve_spd(&DenseMatrix::identity(2), &[3.0, -1.0]).unwrap();
        assert_eq!(x, vec![3.0, -1.0]);
        let x = solve_spd(&DenseMatrix::from_diagonal(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() <= 1e-15));
    }

    #[test]
    fn spd_coupled_multiplies_back() {
        let a = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let x = solve_spd(&a, &[3.0, 3.0]).unwrap();
        let back = a.matvec(&x);
        assert!(norm_inf(&sub(&back, &[3.0, 3.0])) <= 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spd_rejects_indefinite() {
        let a = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn rejects_asymmetric() {
        let a = m(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(sym_eigen(&a), Err(Error::NotSymmetric)));
        assert!(matches!(solve_spd(&a, &[1.0, 1.0]), Err(Error::NotSymmetric)));
    }

    #[test]
    fn eigen_diagonal_and_identity() {
        let e = sym_eigen(&DenseMatrix::from_diagonal(&[1.0, -1.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![-1.0, 1.0]);
        assert_eq!(e.eigenvector(0), vec![0.0, 1.0]);
        assert_eq!(e.eigenvector(1), vec![1.0, 0.0]);
        let e = sym_eigen(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eigen_swap_matrix() {
        let e = sym_eigen(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_sweep_cap_reports_no_convergence() {
        let a = m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]);
        assert!(matches!(
            sym_eigen_with_cap(&a, 0),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn psd_split_recovers_matrix() {
        let a = m(&[&[1.0, 2.0], &[2.0, -3.0]]);
        let (p, n) = sym_eigen(&a).unwrap().psd_split();
        assert!(p.sub(&n).sub(&a).max_abs() < 1e-12);
        assert!(sym_eigen(&p).unwrap().min_eigenvalue() > -1e-12);
        assert!(sym_eigen(&n).unwrap().min_eigenvalue() > -1e-12);
    }

    #[test]
    fn general_solve_handles_indefinite() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(solve_general(&a, &[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
        assert!(solve_general(&DenseMatrix::zeros(2, 2), &[1.0, 1.0]).is_none());
    }
}
