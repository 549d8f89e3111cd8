//! Compressed-row sparse matrices over real or complex scalars.
//!
//! Every operator in the pipeline (Laplacian, Carleman blocks, the Hermitian
//! split, the upwind gradient and the enlarged generator) is stored as a
//! [`CsrMatrix`]. The type is deliberately small: construction from triplets,
//! matrix-vector products, transposition, Kronecker products and a Matrix
//! Market writer cover everything the solvers need.

use std::fmt::{self, Debug, Display};
use std::io::{self, Write};
use std::ops::{AddAssign, Mul, MulAssign, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar field the sparse kernels are generic over.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + PartialEq
    + Send
    + Sync
    + AddAssign
    + MulAssign
    + Neg<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + std::ops::Add<Output = Self>
    + 'static
{
    const IS_COMPLEX: bool;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn real(self) -> f64;
    fn imag(self) -> f64;
    fn is_finite(self) -> bool;
    fn into_complex(self) -> Complex64;
    fn scale(self, s: f64) -> Self;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn real(self) -> f64 {
        self
    }
    fn imag(self) -> f64 {
        0.0
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn into_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn real(self) -> f64 {
        self.re
    }
    fn imag(self) -> f64 {
        self.im
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn into_complex(self) -> Complex64 {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Sparse matrix in compressed sparse row form.
///
/// Column indices inside a row are strictly increasing and explicit zeros
/// are never stored.
#[derive(Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Debug for CsrMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CsrMatrix({}x{}, nnz={})", self.nrows, self.ncols, self.nnz())?;
        if self.nrows * self.ncols <= 64 {
            for row in self.to_dense() {
                write!(f, "\n  {:?}", row)?;
            }
        }
        Ok(())
    }
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut triplets = Vec::with_capacity(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            triplets.push((i, i, v));
        }
        Self::from_triplets(diag.len(), diag.len(), triplets)
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate entries
    /// are summed; entries that sum to exactly zero are dropped.
    ///
    /// Panics if an index is out of bounds.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        for &(r, c, _) in &triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
        }
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of: Vec<usize> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                let k = data.len() - 1;
                data[k] += v;
            } else {
                indices.push(c);
                data.push(v);
                row_of.push(r);
                last = Some((r, c));
            }
        }
        // drop exact zeros left over after summation
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(data.len());
        for ((c, v), r) in indices.into_iter().zip(data).zip(row_of) {
            if v != T::zero() {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices: keep_idx,
            data: keep_val,
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    /// Iterates the stored `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    /// Iterates every stored entry as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.data[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_add_into(T::one(), x, &mut y);
        y
    }

    /// `y += alpha * A x`.
    pub fn mul_add_into(&self, alpha: T, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi += alpha * acc;
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, triplets)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let triplets = self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect();
        Self::from_triplets(self.ncols, self.nrows, triplets)
    }

    pub fn scaled(&self, s: T) -> Self {
        let triplets = self.triplets().map(|(i, j, v)| (i, j, v * s)).collect();
        Self::from_triplets(self.nrows, self.ncols, triplets)
    }

    /// Entrywise `self + s * other`.
    pub fn add_scaled(&self, s: T, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                context: "sparse add",
                expected: self.nrows * self.ncols,
                found: other.nrows * other.ncols,
            });
        }
        let triplets = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, v * s)))
            .collect();
        Ok(Self::from_triplets(self.nrows, self.ncols, triplets))
    }

    /// Sparse matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                context: "sparse matmul",
                expected: self.ncols,
                found: other.nrows,
            });
        }
        let mut triplets = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    triplets.push((i, j, a * b));
                }
            }
        }
        Ok(Self::from_triplets(self.nrows, other.ncols, triplets))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        let triplets = self.triplets().map(|(i, j, v)| (i, j, f(v))).collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, triplets)
    }

    pub fn to_complex(&self) -> CsrMatrix<Complex64> {
        self.map(Scalar::into_complex)
    }

    /// Largest entry modulus, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                let d = match (a.peek().copied(), b.peek().copied()) {
                    (None, None) => break,
                    (Some((ja, va)), Some((jb, vb))) if ja == jb => {
                        a.next();
                        b.next();
                        (va - vb).modulus()
                    }
                    (Some((ja, va)), Some((jb, _))) if ja < jb => {
                        a.next();
                        va.modulus()
                    }
                    (Some((ja, va)), None) => {
                        let _ = ja;
                        a.next();
                        va.modulus()
                    }
                    (_, Some((_, vb))) => {
                        b.next();
                        vb.modulus()
                    }
                };
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Places `block` with its top-left corner at `(row0, col0)`, appending
    /// into a triplet list.
    pub(crate) fn push_block(&self, row0: usize, col0: usize, out: &mut Vec<(usize, usize, T)>) {
        out.extend(self.triplets().map(|(i, j, v)| (row0 + i, col0 + j, v)));
    }

    /// Writes the matrix in Matrix Market coordinate format (1-based).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        let field = if T::IS_COMPLEX { "complex" } else { "real" };
        writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            if T::IS_COMPLEX {
                writeln!(w, "{} {} {:.17e} {:.17e}", i + 1, j + 1, v.real(), v.imag())?;
            } else {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v.real())?;
            }
        }
        Ok(())
    }
}

/// Kronecker product `a ⊗ b`, shape `(ra·rb) × (ca·cb)`.
pub fn kron<T: Scalar>(a: &CsrMatrix<T>, b: &CsrMatrix<T>) -> CsrMatrix<T> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut triplets = Vec::with_capacity(a.nnz() * b.nnz());
    for (i, j, va) in a.triplets() {
        for (k, l, vb) in b.triplets() {
            triplets.push((i * rb + k, j * cb + l, va * vb));
        }
    }
    CsrMatrix::from_triplets(ra * rb, ca * cb, triplets)
}

/// `I_left ⊗ m ⊗ I_right` without materializing the identity factors.
pub fn kron_identity_pad<T: Scalar>(left: usize, m: &CsrMatrix<T>, right: usize) -> CsrMatrix<T> {
    let (r, c) = m.shape();
    let mut triplets = Vec::with_capacity(left * right * m.nnz());
    for l in 0..left {
        for (i, j, v) in m.triplets() {
            for q in 0..right {
                triplets.push(((l * r + i) * right + q, (l * c + j) * right + q, v));
            }
        }
    }
    CsrMatrix::from_triplets(left * r * right, left * c * right, triplets)
}

/// Kronecker product of two vectors.
pub fn kron_vec<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}
