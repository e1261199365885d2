//! Dense complex linear algebra.
//!
//! Everything here works on square matrices stored row-major. The dimensions
//! that occur in practice (a truncated cavity times a handful of qubits) stay
//! in the low hundreds, so dense storage is used for states and operators.
//! [`SparseMatrix`] is a compiled, read-only view of an operator used by the
//! master-equation kernels, where most operators have only a few non-zero
//! entries per row.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance on `max |M - M^dagger|` accepted by the eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("dimension product {left} x {right} overflows")]
    DimensionOverflow { left: usize, right: usize },
    #[error("matrix is not Hermitian: max |M - M^dagger| = {max_asymmetry:e}")]
    NotHermitian { max_asymmetry: f64 },
    #[error("expected {expected} entries for a {dim}x{dim} matrix, got {got}")]
    BadShape {
        dim: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix dimension must be positive")]
    EmptyMatrix,
    #[error("tridiagonal QL iteration did not converge")]
    NoConvergence,
}

fn check_same_dim(op: &'static str, a: usize, b: usize) -> Result<(), LinalgError> {
    if a == b {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch {
            op,
            left: a,
            right: b,
        })
    }
}

/// Dense square complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = self
                .row(i)
                .iter()
                .map(|z| format!("{:+.4}{:+.4}i", z.re, z.im))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_entries(dim: usize, entries: Vec<C64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        let expected = dim.checked_mul(dim).ok_or(LinalgError::DimensionOverflow {
            left: dim,
            right: dim,
        })?;
        if entries.len() != expected {
            return Err(LinalgError::BadShape {
                dim,
                expected,
                got: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    /// Builds a matrix from real rows; handy for literals in tests and docs.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::BadShape {
                    dim,
                    expected: dim * dim,
                    got: row.len() * dim,
                });
            }
            entries.extend(row.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self::from_entries(dim, entries)
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &z) in diag.iter().enumerate() {
            m.set(i, i, z);
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.entries[i * self.dim + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        let d = self.dim;
        &mut self.entries[i * d..(i + 1) * d]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn fill_zero(&mut self) {
        self.entries.fill(C64::new(0.0, 0.0));
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.entries[j * d + i] = self.entries[i * d + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&z| z * factor).collect(),
        }
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, factor: C64, other: &Self) -> Result<(), LinalgError> {
        check_same_dim("add_scaled", self.dim, other.dim)?;
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
        Ok(())
    }

    /// Largest entry-wise deviation from Hermiticity, `max |M[i][j] - conj(M[j][i])|`.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let dev = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(dev);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    /// Replaces the matrix by `(M + M^dagger) / 2` in place.
    pub fn hermitize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            let z = self.entries[i * d + i];
            self.entries[i * d + i] = C64::new(z.re, 0.0);
            for j in (i + 1)..d {
                let avg = 0.5 * (self.entries[i * d + j] + self.entries[j * d + i].conj());
                self.entries[i * d + j] = avg;
                self.entries[j * d + i] = avg.conj();
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |self - other|` entry-wise.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff: dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn has_non_finite(&self) -> bool {
        self.entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
    }

    /// Restriction to the rows and columns listed in `indices`, in that order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        let mut out = Self::zeros(k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.entries[a * k + b] = self.get(i, j);
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "add: dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "sub: dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.dim, rhs.dim, "add_assign: dimension mismatch");
        for (a, b) in self.entries.iter_mut().zip(&rhs.entries) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.dim, rhs.dim, "sub_assign: dimension mismatch");
        for (a, b) in self.entries.iter_mut().zip(&rhs.entries) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: f64) -> ComplexMatrix {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Mul<C64> for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: C64) -> ComplexMatrix {
        self.scale(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Exact dense product `A B`.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    check_same_dim("matmul", a.dim, b.dim)?;
    let d = a.dim;
    let mut out = ComplexMatrix::zeros(d);
    for i in 0..d {
        let out_row = &mut out.entries[i * d..(i + 1) * d];
        for k in 0..d {
            let aik = a.entries[i * d + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            let b_row = &b.entries[k * d..(k + 1) * d];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `[A, B] = AB - BA`
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    Ok(&matmul(a, b)? - &matmul(b, a)?)
}

/// `{A, B} = AB + BA`
pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    Ok(&matmul(a, b)? + &matmul(b, a)?)
}

/// Kronecker product with `(A ⊗ B)[i*db + k][j*db + l] = A[i][j] B[k][l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let (da, db) = (a.dim, b.dim);
    let dim = da.checked_mul(db).ok_or(LinalgError::DimensionOverflow {
        left: da,
        right: db,
    })?;
    dim.checked_mul(dim).ok_or(LinalgError::DimensionOverflow {
        left: da,
        right: db,
    })?;
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..da {
        for j in 0..da {
            let aij = a.get(i, j);
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    out.entries[(i * db + k) * dim + (j * db + l)] = aij * b.get(k, l);
                }
            }
        }
    }
    Ok(out)
}

/// `Tr[M rho]`.
pub fn expectation(m: &ComplexMatrix, rho: &ComplexMatrix) -> Result<C64, LinalgError> {
    check_same_dim("expectation", m.dim, rho.dim)?;
    let d = m.dim;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += m.entries[i * d + j] * rho.entries[j * d + i];
        }
    }
    Ok(acc)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// The input is symmetrized first. The complex Hermitian problem is mapped to
/// the real symmetric matrix `[[Re M, -Im M], [Im M, Re M]]`, whose spectrum is
/// that of `M` with every eigenvalue doubled; it is reduced to tridiagonal form
/// with Householder reflections and diagonalized by implicit-shift QL.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>, LinalgError> {
    let scale = m.max_abs().max(1.0);
    let asym = m.max_asymmetry();
    if asym > HERMITIAN_TOL * scale {
        return Err(LinalgError::NotHermitian {
            max_asymmetry: asym,
        });
    }
    let mut h = m.clone();
    h.hermitize();
    let n = h.dim;
    if n == 1 {
        return Ok(vec![h.get(0, 0).re]);
    }
    if n == 2 {
        return Ok(two_by_two_eigenvalues(&h));
    }

    let n2 = 2 * n;
    let mut s = vec![0.0; n2 * n2];
    for i in 0..n {
        for j in 0..n {
            let z = h.get(i, j);
            s[i * n2 + j] = z.re;
            s[(i + n) * n2 + (j + n)] = z.re;
            s[i * n2 + (j + n)] = -z.im;
            s[(i + n) * n2 + j] = z.im;
        }
    }
    let (mut d, mut e) = householder_tridiagonalize(&mut s, n2);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect())
}

fn two_by_two_eigenvalues(h: &ComplexMatrix) -> Vec<f64> {
    let a = h.get(0, 0).re;
    let d = h.get(1, 1).re;
    let b = h.get(0, 1).norm();
    let mean = 0.5 * (a + d);
    let half_gap = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    vec![mean - half_gap, mean + half_gap]
}

/// Reduces the dense symmetric matrix `s` (n x n, row-major, destroyed) to
/// tridiagonal form. Returns the diagonal and the sub-diagonal, where `e[i]`
/// couples rows `i` and `i + 1` and `e[n - 1] = 0`.
fn householder_tridiagonalize(s: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let lo = k + 1;
        let norm = (lo..n).map(|i| s[i * n + k] * s[i * n + k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = s[lo * n + k];
        let alpha = if x0 > 0.0 { -norm } else { norm };
        for i in lo..n {
            v[i] = s[i * n + k];
        }
        v[lo] -= alpha;
        let vnorm2: f64 = (lo..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        for i in lo..n {
            let row = &s[i * n..(i + 1) * n];
            p[i] = beta * (lo..n).map(|j| row[j] * v[j]).sum::<f64>();
        }
        let kfac = 0.5 * beta * (lo..n).map(|i| v[i] * p[i]).sum::<f64>();
        for i in lo..n {
            p[i] -= kfac * v[i];
        }
        for i in lo..n {
            for j in lo..n {
                s[i * n + j] -= v[i] * p[j] + p[i] * v[j];
            }
        }
        s[lo * n + k] = alpha;
        s[k * n + lo] = alpha;
        for i in (lo + 1)..n {
            s[i * n + k] = 0.0;
            s[k * n + i] = 0.0;
        }
    }
    let d = (0..n).map(|i| s[i * n + i]).collect();
    let mut e = vec![0.0; n];
    for i in 0..n - 1 {
        e[i] = s[(i + 1) * n + i];
    }
    (d, e)
}

/// Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal matrix.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = d.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() < 1e-300 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 64 {
                return Err(LinalgError::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Complex column vector, used for pure states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    entries: Vec<C64>,
}

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Result<Self, LinalgError> {
        if entries.is_empty() {
            return Err(LinalgError::EmptyMatrix);
        }
        Ok(Self { entries })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut entries = vec![C64::new(0.0, 0.0); dim];
        entries[index] = C64::new(1.0, 0.0);
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        Self {
            entries: self.entries.iter().map(|z| z / n).collect(),
        }
    }

    /// The projector `|v><v|`.
    pub fn projector(&self) -> ComplexMatrix {
        let d = self.dim();
        let mut out = ComplexMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.set(i, j, self.entries[i] * self.entries[j].conj());
            }
        }
        out
    }
}

/// Compressed-sparse-row copy of an operator.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Keeps every entry that is not exactly zero.
    pub fn from_dense(m: &ComplexMatrix) -> Self {
        let d = m.dim();
        let mut row_start = Vec::with_capacity(d + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_start.push(0);
        for i in 0..d {
            for (j, &z) in m.row(i).iter().enumerate() {
                if z != C64::new(0.0, 0.0) {
                    cols.push(j);
                    values.push(z);
                }
            }
            row_start.push(cols.len());
        }
        Self {
            dim: d,
            row_start,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let range = self.row_start[i]..self.row_start[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for (j, z) in self.row(i) {
                out.set(i, j, z);
            }
        }
        out
    }

    /// Writes row `i` of `factor * self * rho` into `out_row`.
    #[inline]
    pub fn row_times_dense(&self, i: usize, factor: C64, rho: &ComplexMatrix, out_row: &mut [C64]) {
        for (k, z) in self.row(i) {
            let f = factor * z;
            for (o, &r) in out_row.iter_mut().zip(rho.row(k)) {
                *o += f * r;
            }
        }
    }

    /// `Tr[self * rho]`.
    pub fn expectation(&self, rho: &ComplexMatrix) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for (k, z) in self.row(i) {
                acc += z * rho.get(k, i);
            }
        }
        acc
    }
}
