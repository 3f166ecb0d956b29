//! Dense complex linear algebra kernel.
//!
//! Everything else in the crate is expressed in terms of [`ComplexMatrix`]:
//! row-major storage, explicit shape, finite entries only. Matrices are small
//! (side ≤ 64), so there is no sparse path and no blocking.
//!
//! Equality between matrices is Frobenius-relative throughout:
//! `‖A − B‖_F ≤ tol · (1 + ‖A‖_F)`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Numerical thresholds shared by every predicate in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Frobenius-relative equality threshold.
    pub eq_tol: f64,
    /// Eigenvalue floor for positivity checks.
    pub psd_tol: f64,
    /// Residual accepted from the feasibility engine.
    pub feas_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eq_tol: 1e-9,
            psd_tol: 1e-9,
            feas_tol: 1e-7,
        }
    }
}

impl Tolerances {
    /// Equality and positivity thresholds raised to `feas_tol`, for solver-built witnesses.
    pub fn for_witness(&self) -> Self {
        Self {
            eq_tol: self.eq_tol.max(self.feas_tol),
            psd_tol: self.psd_tol.max(self.feas_tol),
            feas_tol: self.feas_tol,
        }
    }

    pub fn new(eq_tol: f64, psd_tol: f64, feas_tol: f64) -> Result<Self> {
        for v in [eq_tol, psd_tol, feas_tol] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self {
            eq_tol,
            psd_tol,
            feas_tol,
        })
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::BadShape {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows of real numbers.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    /// Builds a matrix from nested rows of complex numbers.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::BadShape {
                expected: c,
                found: rows.iter().map(|row| row.len()).find(|&l| l != c).unwrap_or(0),
            });
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// Column vector from entries.
    pub fn column(entries: &[C64]) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries.to_vec(),
        }
    }

    /// Canonical basis vector `|k⟩` of length `n` as a column.
    pub fn basis_vector(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n, 1);
        v[(k, 0)] = ONE;
        v
    }

    /// Matrix unit `|i⟩⟨j|` of side `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    /// Rank-one operator `|u⟩⟨v|`.
    pub fn outer(u: &ComplexMatrix, v: &ComplexMatrix) -> Self {
        debug_assert!(u.cols == 1 && v.cols == 1);
        Self::from_fn(u.rows, v.rows, |i, j| u.data[i] * v.data[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Side length, or an error if the matrix is not square.
    pub fn side(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · other · self†`.
    pub fn sandwich(&self, inner: &ComplexMatrix) -> Self {
        self.matmul(inner).matmul(&self.adjoint())
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()) * 0.5
        })
    }

    /// `AB − BA`.
    pub fn commutator(&self, other: &ComplexMatrix) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Frobenius-relative equality: `‖A − B‖_F ≤ tol·(1 + ‖A‖_F)`.
    pub fn approx_eq(&self, other: &ComplexMatrix, tol: f64) -> bool {
        self.shape() == other.shape() && rel_distance(self, other) <= tol
    }

    /// Copies `self` into `other`'s block starting at `(r0, c0)`.
    pub fn write_block(&self, target: &mut ComplexMatrix, r0: usize, c0: usize) {
        for r in 0..self.rows {
            for c in 0..self.cols {
                target[(r0 + r, c0 + c)] = self[(r, c)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn col(&self, c: usize) -> Self {
        Self::from_fn(self.rows, 1, |r, _| self[(r, c)])
    }

    /// `⟨u, v⟩ = u† v` for column vectors.
    pub fn dot(&self, other: &ComplexMatrix) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)])
    }
}

/// Row space of a real matrix with the data for minimum-norm least squares.
///
/// Built from the eigendecomposition of `AᵀA`. nalgebra's SVD was observed to return
/// factors reconstructing `A` only to ~1e-3 when singular values cluster, which the
/// symmetric eigensolver does not suffer from.
pub(crate) struct RowSpace {
    /// Orthonormal basis, `n × rank`.
    pub basis: DMatrix<f64>,
    /// Squared singular values belonging to the basis columns.
    pub gram: Vec<f64>,
}

impl RowSpace {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.ncols();
        if n == 0 || a.nrows() == 0 {
            return Self {
                basis: DMatrix::zeros(n, 0),
                gram: Vec::new(),
            };
        }
        let eig = (a.transpose() * a).symmetric_eigen();
        let top = eig.eigenvalues.max().max(1.0);
        let thr = top * 1e-13 * a.nrows().max(n) as f64;
        let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > thr).collect();
        Self {
            basis: DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]),
            gram: keep.iter().map(|&i| eig.eigenvalues[i]).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.gram.len()
    }

    /// `A⁺ B`, with one step of iterative refinement.
    pub fn solve(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let once = |rhs: &DMatrix<f64>| {
            let mut y = self.basis.tr_mul(&a.tr_mul(rhs));
            for (i, g) in self.gram.iter().enumerate() {
                y.row_mut(i).scale_mut(1.0 / g);
            }
            &self.basis * y
        };
        let x = once(b);
        let r = b - a * &x;
        x + once(&r)
    }
}

/// Minimum-norm least-squares solution of `A X = B`, with the numerical rank of `A`.
///
/// Works on the real embedding `[[Re A, −Im A], [Im A, Re A]]`.
pub(crate) fn lstsq(a: &ComplexMatrix, b: &ComplexMatrix) -> (ComplexMatrix, usize) {
    let (m, n, p) = (a.rows, a.cols, b.cols);
    let big = DMatrix::<f64>::from_fn(2 * m, 2 * n, |r, c| {
        let z = a[(r % m, c % n)];
        match (r < m, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let rhs = DMatrix::<f64>::from_fn(2 * m, p, |r, c| {
        let z = b[(r % m, c)];
        if r < m {
            z.re
        } else {
            z.im
        }
    });
    let rs = RowSpace::new(&big);
    let x = rs.solve(&big, &rhs);
    (
        ComplexMatrix::from_fn(n, p, |r, c| C64::new(x[(r, c)], x[(r + n, c)])),
        rs.rank() / 2,
    )
}

/// `‖A − B‖_F / (1 + ‖A‖_F)`.
pub fn rel_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let diff: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    diff / (1.0 + a.frob_norm())
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

// Owned-operand forms reuse the left buffer.
impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(mut self, rhs: ComplexMatrix) -> ComplexMatrix {
        self += &rhs;
        self
    }
}

impl Add<&ComplexMatrix> for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(mut self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self += rhs;
        self
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(mut self, rhs: ComplexMatrix) -> ComplexMatrix {
        self -= &rhs;
        self
    }
}

impl Sub<&ComplexMatrix> for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(mut self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self -= rhs;
        self
    }
}

/// Kronecker product; the first factor is the slow index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Which tensor factor survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

/// Partial trace of a square matrix on `C^d0 ⊗ C^d1`, keeping `keep`.
pub fn partial_trace(m: &ComplexMatrix, dims: (usize, usize), keep: Slot) -> Result<ComplexMatrix> {
    let (d0, d1) = dims;
    let side = m.side()?;
    if side != d0 * d1 {
        return Err(Error::DimensionMismatch {
            context: "partial trace",
            expected: d0 * d1,
            found: side,
        });
    }
    Ok(match keep {
        Slot::First => ComplexMatrix::from_fn(d0, d0, |i, j| {
            (0..d1).map(|k| m[(i * d1 + k, j * d1 + k)]).sum()
        }),
        Slot::Second => ComplexMatrix::from_fn(d1, d1, |k, l| {
            (0..d0).map(|i| m[(i * d1 + k, i * d1 + l)]).sum()
        }),
    })
}

/// Largest entrywise deviation from Hermiticity, `max |A − A†|`.
pub fn hermitian_deviation(h: &ComplexMatrix) -> f64 {
    if !h.is_square() {
        return f64::INFINITY;
    }
    let n = h.rows;
    let mut dev: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            dev = dev.max((h[(r, c)] - h[(c, r)].conj()).norm());
        }
    }
    dev
}

pub fn is_hermitian(h: &ComplexMatrix, tol: f64) -> bool {
    h.is_square() && hermitian_deviation(h) <= tol * (1.0 + h.max_abs())
}

/// Frobenius inner product `tr(A† B)`.
pub fn frob_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.dot(b)
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: ComplexMatrix,
}

impl HermEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `U f(Λ) U†`.
    pub fn rebuild_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        let fv: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &w) in fv.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let a = u[(r, k)] * w;
                for c in 0..n {
                    out[(r, c)] += a * u[(c, k)].conj();
                }
            }
        }
        out
    }

    pub fn vector(&self, k: usize) -> ComplexMatrix {
        self.vectors.col(k)
    }
}

/// Eigendecomposition of a Hermitian matrix; values ascending.
///
/// Fails when the input is not Hermitian within `tol`. The input is
/// symmetrized before decomposing so rounding noise in the lower triangle
/// cannot leak into the spectrum.
pub fn herm_eig_tol(h: &ComplexMatrix, tol: f64) -> Result<HermEig> {
    h.side()?;
    let dev = hermitian_deviation(h);
    if dev > tol * (1.0 + h.max_abs()) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(herm_eig_unchecked(h))
}

pub fn herm_eig(h: &ComplexMatrix) -> Result<HermEig> {
    herm_eig_tol(h, Tolerances::default().eq_tol)
}

pub(crate) fn herm_eig_unchecked(h: &ComplexMatrix) -> HermEig {
    let n = h.rows;
    if n == 0 {
        return HermEig {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        };
    }
    let sym = h.hermitian_part().to_nalgebra();
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    HermEig { values, vectors }
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(h: &ComplexMatrix) -> f64 {
    herm_eig_unchecked(h).min()
}

/// Largest eigenvalue of the Hermitian part.
pub fn max_eigenvalue(h: &ComplexMatrix) -> f64 {
    herm_eig_unchecked(h).max()
}

/// Operator norm of a Hermitian matrix, `max |λ|`.
pub fn herm_op_norm(h: &ComplexMatrix) -> f64 {
    let e = herm_eig_unchecked(h);
    e.min().abs().max(e.max().abs())
}

/// Operator norm of an arbitrary matrix (largest singular value).
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    let g = m.adjoint().matmul(m);
    max_eigenvalue(&g).max(0.0).sqrt()
}

pub fn is_psd(h: &ComplexMatrix, tol: f64) -> bool {
    is_hermitian(h, Tolerances::default().eq_tol.max(tol)) && min_eigenvalue(h) >= -tol
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn project_psd(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let e = herm_eig(h)?;
    Ok(e.rebuild_with(|v| v.max(0.0)))
}

/// Principal square root of a PSD matrix.
pub fn mat_sqrt(p: &ComplexMatrix, psd_tol: f64) -> Result<ComplexMatrix> {
    let e = herm_eig(p)?;
    if e.min() < -psd_tol {
        return Err(Error::NotPsd {
            min_eigenvalue: e.min(),
        });
    }
    Ok(e.rebuild_with(|v| v.max(0.0).sqrt()))
}

/// Number of eigenvalues above `threshold`.
pub fn rank_above(h: &ComplexMatrix, threshold: f64) -> usize {
    herm_eig_unchecked(h)
        .values
        .iter()
        .filter(|&&v| v > threshold)
        .count()
}

/// Orthonormal basis (as columns) of the eigenspace with eigenvalue above `threshold`.
pub fn support_basis(h: &ComplexMatrix, threshold: f64) -> ComplexMatrix {
    let e = herm_eig_unchecked(h);
    let keep: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > threshold).collect();
    ComplexMatrix::from_fn(h.rows, keep.len(), |r, c| e.vectors[(r, keep[c])])
}

/// Frobenius-orthonormal basis of the `d×d` Hermitian matrices.
///
/// Ordered as: `I/√d`, then for each pair `j<k` the symmetric and
/// antisymmetric off-diagonal elements, then the traceless diagonals. For
/// `d = 2` this is the normalized Pauli basis `{I, σx, σy, σz}/√2`.
pub fn hermitian_basis(d: usize) -> Vec<ComplexMatrix> {
    let mut basis = Vec::with_capacity(d * d);
    basis.push(ComplexMatrix::identity(d).scale_real(1.0 / (d as f64).sqrt()));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in j + 1..d {
            let mut sym = ComplexMatrix::zeros(d, d);
            sym[(j, k)] = C64::new(s, 0.0);
            sym[(k, j)] = C64::new(s, 0.0);
            basis.push(sym);
            let mut anti = ComplexMatrix::zeros(d, d);
            anti[(j, k)] = C64::new(0.0, -s);
            anti[(k, j)] = C64::new(0.0, s);
            basis.push(anti);
        }
    }
    for l in 1..d {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = ComplexMatrix::zeros(d, d);
        for j in 0..l {
            diag[(j, j)] = C64::new(norm, 0.0);
        }
        diag[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        basis.push(diag);
    }
    basis
}

/// Pauli matrices and the qubit projections used all over the tests and fixtures.
pub mod pauli {
    use super::{ComplexMatrix, C64};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn y() -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(0.0, -1.0);
        m[(1, 0)] = C64::new(0.0, 1.0);
        m
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    fn proj(sigma: ComplexMatrix, sign: f64) -> ComplexMatrix {
        (&ComplexMatrix::identity(2) + &sigma.scale_real(sign)).scale_real(0.5)
    }

    /// `P_x = (I + σx)/2`.
    pub fn px() -> ComplexMatrix {
        proj(x(), 1.0)
    }
    /// `P_{-x} = (I − σx)/2`.
    pub fn pmx() -> ComplexMatrix {
        proj(x(), -1.0)
    }
    pub fn py() -> ComplexMatrix {
        proj(y(), 1.0)
    }
    pub fn pmy() -> ComplexMatrix {
        proj(y(), -1.0)
    }
    pub fn pz() -> ComplexMatrix {
        proj(z(), 1.0)
    }
    pub fn pmz() -> ComplexMatrix {
        proj(z(), -1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(n: usize, m: usize, seed: u64) -> ComplexMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        ComplexMatrix::from_fn(n, m, |_, _| C64::new(next(), next()))
    }

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        lcg_matrix(n, n, seed).hermitian_part()
    }

    #[test]
    fn kron_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_pauli_blocks() {
        let k = kron(&pauli::x(), &pauli::z());
        let z = pauli::z();
        assert_eq!(k.block(0, 0, 2, 2), ComplexMatrix::zeros(2, 2));
        assert_eq!(k.block(0, 2, 2, 2), z);
        assert_eq!(k.block(2, 0, 2, 2), z);
        assert_eq!(k.block(2, 2, 2, 2), ComplexMatrix::zeros(2, 2));
    }

    #[test]
    fn kron_index_formula() {
        let a = lcg_matrix(3, 3, 1);
        let b = lcg_matrix(3, 3, 2);
        let k = kron(&a, &b);
        for i in 0..3 {
            for j in 0..3 {
                for r in 0..3 {
                    for l in 0..3 {
                        assert_eq!(k[(i * 3 + r, j * 3 + l)], a[(i, j)] * b[(r, l)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_products() {
        let a = lcg_matrix(2, 2, 3);
        let b = lcg_matrix(3, 3, 4);
        let ab = kron(&a, &b);
        let first = partial_trace(&ab, (2, 3), Slot::First).unwrap();
        assert!(first.approx_eq(&a.scale(b.trace()), 1e-12));
        let second = partial_trace(&ab, (2, 3), Slot::Second).unwrap();
        assert!(second.approx_eq(&b.scale(a.trace()), 1e-12));
    }

    #[test]
    fn partial_trace_identity() {
        let r = partial_trace(&ComplexMatrix::identity(4), (2, 2), Slot::Second).unwrap();
        assert_eq!(r, ComplexMatrix::identity(2).scale_real(2.0));
    }

    #[test]
    fn partial_trace_keeps_trace() {
        let m = random_hermitian(6, 5);
        for keep in [Slot::First, Slot::Second] {
            let r = partial_trace(&m, (2, 3), keep).unwrap();
            assert!((r.trace() - m.trace()).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let m = ComplexMatrix::identity(5);
        assert!(matches!(
            partial_trace(&m, (2, 3), Slot::First),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eig_pauli_and_projection() {
        let e = herm_eig(&pauli::z()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let e = herm_eig(&pauli::px()).unwrap();
        assert!(e.values[0].abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstruction() {
        let h = random_hermitian(8, 6);
        let e = herm_eig(&h).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let rebuilt = e.rebuild_with(|v| v);
        assert!((&rebuilt - &h).frob_norm() <= 1e-10);
        let uu = e.vectors.adjoint().matmul(&e.vectors);
        assert!(uu.approx_eq(&ComplexMatrix::identity(8), 1e-12));
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = lcg_matrix(3, 3, 7);
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_is_deterministic() {
        let h = random_hermitian(7, 8);
        let a = herm_eig(&h).unwrap();
        let b = herm_eig(&h).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn psd_projection_examples() {
        let p = project_psd(&pauli::z()).unwrap();
        assert!(p.approx_eq(&pauli::pz(), 1e-14));
        let px = pauli::px();
        assert!(project_psd(&px).unwrap().approx_eq(&px, 1e-14));
    }

    #[test]
    fn psd_projection_is_nearest_on_sampled_neighbourhood() {
        let h = random_hermitian(3, 9);
        let p = project_psd(&h).unwrap();
        let best = (&h - &p).frob_norm();
        let basis = hermitian_basis(3);
        // Perturb the projection along every basis direction; keep only PSD candidates.
        for b in &basis {
            for step in [-0.2, -0.05, -0.01, 0.01, 0.05, 0.2] {
                let cand = &p + &b.scale_real(step);
                if min_eigenvalue(&cand) >= 0.0 {
                    assert!((&h - &cand).frob_norm() >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_is_pauli_for_qubits() {
        let b = hermitian_basis(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [
            ComplexMatrix::identity(2),
            pauli::x(),
            pauli::y(),
            pauli::z(),
        ];
        for (got, want) in b.iter().zip(expected.iter()) {
            assert!(got.approx_eq(&want.scale_real(s), 1e-15));
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for d in 1..5 {
            let b = hermitian_basis(d);
            assert_eq!(b.len(), d * d);
            for (i, x) in b.iter().enumerate() {
                assert!(is_hermitian(x, 1e-15));
                for (j, y) in b.iter().enumerate() {
                    let ip = frob_inner(x, y);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - C64::new(want, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn basis_expansion_resums() {
        let h = random_hermitian(4, 10);
        let basis = hermitian_basis(4);
        let mut acc = ComplexMatrix::zeros(4, 4);
        for b in &basis {
            let c = frob_inner(b, &h);
            assert!(c.im.abs() < 1e-12);
            acc += &b.scale(c);
        }
        assert!(acc.approx_eq(&h, 1e-12));
    }

    #[test]
    fn sqrt_examples() {
        let px = pauli::px();
        assert!(mat_sqrt(&px, 1e-9).unwrap().approx_eq(&px, 1e-14));
        let four = ComplexMatrix::identity(2).scale_real(4.0);
        assert!(mat_sqrt(&four, 1e-9)
            .unwrap()
            .approx_eq(&ComplexMatrix::identity(2).scale_real(2.0), 1e-14));
        let g = lcg_matrix(5, 5, 11);
        let p = g.adjoint().matmul(&g);
        let s = mat_sqrt(&p, 1e-9).unwrap();
        assert!((&s.matmul(&s) - &p).frob_norm() <= 1e-10);
        assert!(min_eigenvalue(&s) >= -1e-12);
    }

    #[test]
    fn sqrt_rejects_negative() {
        assert!(matches!(
            mat_sqrt(&pauli::z(), 1e-9),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![ZERO; 3]),
            Err(Error::BadShape { .. })
        ));
        assert!(matches!(
            ComplexMatrix::new(1, 1, vec![C64::new(f64::NAN, 0.0)]),
            Err(Error::NonFinite)
        ));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn arb_matrix(n: usize, m: usize) -> impl Strategy<Value = ComplexMatrix> {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * m).prop_map(move |v| {
                ComplexMatrix::new(n, m, v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
                    .unwrap()
            })
        }

        proptest! {
            #[test]
            fn kron_associative(a in arb_matrix(2, 3), b in arb_matrix(2, 2), c in arb_matrix(3, 2)) {
                let left = kron(&kron(&a, &b), &c);
                let right = kron(&a, &kron(&b, &c));
                prop_assert!((&left - &right).frob_norm() <= 1e-10);
            }

            #[test]
            fn kron_bilinear(a in arb_matrix(2, 2), a2 in arb_matrix(2, 2), b in arb_matrix(3, 3), s in -2.0f64..2.0) {
                let lhs = kron(&(&a + &a2.scale_real(s)), &b);
                let rhs = &kron(&a, &b) + &kron(&a2, &b).scale_real(s);
                prop_assert!((&lhs - &rhs).frob_norm() <= 1e-10);
            }

            #[test]
            fn projection_idempotent(m in arb_matrix(4, 4)) {
                let h = m.hermitian_part();
                let p = project_psd(&h).unwrap();
                prop_assert!(min_eigenvalue(&p) >= -1e-9);
                let pp = project_psd(&p).unwrap();
                prop_assert!(pp.approx_eq(&p, 1e-10));
            }

            #[test]
            fn partial_trace_factorizes(a in arb_matrix(2, 2), b in arb_matrix(3, 3)) {
                let ab = kron(&a, &b);
                let first = partial_trace(&ab, (2, 3), Slot::First).unwrap();
                let second = partial_trace(&ab, (2, 3), Slot::Second).unwrap();
                prop_assert!((&first - &a.scale(b.trace())).frob_norm() <= 1e-10);
                prop_assert!((&second - &b.scale(a.trace())).frob_norm() <= 1e-10);
            }
        }
    }
}
