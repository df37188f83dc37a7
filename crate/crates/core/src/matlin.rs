//! Small dense complex linear algebra.
//!
//! Everything numerically delicate in the simulator goes through this module:
//! Haar-distributed orthonormal bases, the smallest singular pair of a tall
//! or wide matrix (via a Hermitian Jacobi eigensolver on `GᴴG`), and square
//! inversion with a condition check. Matrices here are tiny (a few tens of
//! rows at most), so the kernels favour accuracy and determinism over speed.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = CMat { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<Complex<T>>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Real diagonal matrix.
    pub fn from_real_diag(diag: &[T]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(diag[i], T::zero())
            } else {
                Complex::zero()
            }
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            Some(p) => Err(Error::NonFinite {
                row: p / self.cols.max(1),
                col: p % self.cols.max(1),
            }),
            None => Ok(()),
        }
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// `A·x`.
    pub fn mul_vec(&self, x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(Complex::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect())
    }

    /// Row vector `xᴴ·A`, returned as a plain vector of length `cols`.
    pub fn left_mul_adjoint(&self, x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if x.len() != self.rows {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} rows",
                x.len(),
                self.rows
            )));
        }
        let mut out = vec![Complex::zero(); self.cols];
        for (i, xi) in x.iter().enumerate() {
            let c = xi.conj();
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += c * a;
            }
        }
        Ok(out)
    }

    /// `AᴴA`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ci = row[i].conj();
                for j in i..n {
                    out.data[i * n + j] += ci * row[j];
                }
            }
        }
        for i in 0..n {
            out.data[i * n + i].im = T::zero();
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i].conj();
            }
        }
        out
    }

    pub fn scale_columns(&self, factors: &[T]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * factors[j])
    }

    /// Drops column `skip`.
    pub fn without_column(&self, skip: usize) -> Self {
        Self::from_fn(self.rows, self.cols - 1, |i, j| {
            self[(i, if j < skip { j } else { j + 1 })]
        })
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[Self]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::Dimension("vstack with unequal column counts".into()));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }
}

impl<T> Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// vectors

/// `aᴴb`.
#[inline]
pub fn inner<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sq<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Rotates `v` so its first entry with magnitude above `eps·‖v‖` is real
/// and nonnegative.
pub fn fix_phase<T: Scalar>(v: &mut [Complex<T>]) {
    let scale = norm_sq(v).sqrt();
    let tol = scale * T::epsilon() * T::of(16.0);
    if let Some(z) = v.iter().copied().find(|z| z.norm() > tol) {
        let rot = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// Circularly-symmetric complex Gaussian with unit variance, `CN(0, 1)`.
#[inline]
pub fn complex_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let half = T::FRAC_1_SQRT_2();
    Complex::new(T::std_normal(rng) * half, T::std_normal(rng) * half)
}

/// Uniformly distributed unit vector in `Cⁿ`.
pub fn random_unit_vector<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex<T>> {
    loop {
        let v: Vec<Complex<T>> = (0..n).map(|_| complex_normal(rng)).collect();
        let nrm = norm_sq(&v).sqrt();
        if nrm > T::epsilon() {
            return v.into_iter().map(|z| z / nrm).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// orthonormal bases

/// `M×S` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis<T> {
    matrix: CMat<T>,
    pub source_seed: u64,
}

impl<T: Scalar> OrthonormalBasis<T> {
    /// Wraps `matrix`, checking that its columns are orthonormal to within
    /// a precision-scaled tolerance (1e-12 territory for `f64`).
    pub fn new(matrix: CMat<T>, source_seed: u64) -> Result<Self> {
        if matrix.cols() > matrix.rows() || matrix.cols() == 0 {
            return Err(Error::Dimension(format!(
                "basis of {} columns in dimension {}",
                matrix.cols(),
                matrix.rows()
            )));
        }
        let basis = OrthonormalBasis {
            matrix,
            source_seed,
        };
        let err = basis.orthonormality_error();
        if err > T::epsilon() * T::of(4096.0) {
            return Err(Error::Domain(format!(
                "columns not orthonormal (max |PᴴP - I| = {err})"
            )));
        }
        Ok(basis)
    }

    /// Max entry of `|PᴴP − I|`.
    pub fn orthonormality_error(&self) -> T {
        self.matrix
            .gram()
            .max_abs_diff(&CMat::identity(self.matrix.cols()))
    }

    #[inline]
    pub fn matrix(&self) -> &CMat<T> {
        &self.matrix
    }

    /// Ambient dimension `M`.
    pub fn ambient_dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Subspace dimension `S`.
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// First `s` columns of the Q factor of an `m×m` matrix with i.i.d.
/// `CN(0, 1)` entries, with the R diagonal taken positive so the result is
/// Haar distributed.
pub fn random_orthonormal_basis<T: Scalar, R: Rng + ?Sized>(
    m: usize,
    s: usize,
    rng: &mut R,
) -> Result<OrthonormalBasis<T>> {
    if s == 0 || s > m {
        return Err(Error::Dimension(format!("need 1 <= S <= M, got S={s}, M={m}")));
    }
    loop {
        let a: CMat<T> = CMat::from_fn(m, m, |_, _| complex_normal(rng));
        if let Some(q) = gram_schmidt(&a, s) {
            return OrthonormalBasis::new(q, 0);
        }
    }
}

/// Modified Gram–Schmidt with one reorthogonalization pass over the first
/// `s` columns. `None` if the columns are numerically dependent.
fn gram_schmidt<T: Scalar>(a: &CMat<T>, s: usize) -> Option<CMat<T>> {
    let m = a.rows();
    let mut q: Vec<Vec<Complex<T>>> = Vec::with_capacity(s);
    for j in 0..s {
        let mut v = a.column(j);
        let orig = norm_sq(&v).sqrt();
        for _ in 0..2 {
            for qk in &q {
                let c = inner(qk, &v);
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= c * qi;
                }
            }
        }
        let nrm = norm_sq(&v).sqrt();
        if nrm <= orig * T::epsilon() * T::of(1e3) {
            return None;
        }
        q.push(v.into_iter().map(|z| z / nrm).collect());
    }
    Some(CMat::from_fn(m, s, |i, j| q[j][i]))
}

// ---------------------------------------------------------------------------
// eigen / singular values

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues ascend; eigenvector `k` is column `k` of the
/// returned matrix, phase-normalized.
pub fn hermitian_eigen<T: Scalar>(a: &CMat<T>) -> Result<(Vec<T>, CMat<T>)> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::Dimension(format!(
            "eigen-decomposition of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    a.check_finite()?;
    let n = a.rows();
    let mut m = a.clone();
    let mut v = CMat::<T>::identity(n);
    let scale = a.frobenius_norm();
    let tiny = T::min_positive_value();

    for _sweep in 0..64 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum();
        if off.sqrt() <= scale * T::epsilon() * T::of(0.5) || off <= tiny {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g <= tiny {
                    continue;
                }
                let e = apq / g;
                let tau = (m[(q, q)].re - m[(p, p)].re) / (g + g);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let ec = e.conj();
                // columns: A ← A·J with J = [[c, s], [-s·ē, c·ē]]
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp * c - akq * ec * s;
                    m[(k, q)] = akp * s + akq * ec * c;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * ec * s;
                    v[(k, q)] = vkp * s + vkq * ec * c;
                }
                // rows: A ← Jᴴ·A
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = apk * c - aqk * e * s;
                    m[(q, k)] = apk * s + aqk * e * c;
                }
                m[(p, q)] = Complex::zero();
                m[(q, p)] = Complex::zero();
                m[(p, p)].im = T::zero();
                m[(q, q)].im = T::zero();
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(x, x)].re.partial_cmp(&m[(y, y)].re).unwrap());
    let values = order.iter().map(|&k| m[(k, k)].re).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        fix_phase(&mut col);
        for i in 0..n {
            vectors[(i, dst)] = col[i];
        }
    }
    Ok((values, vectors))
}

/// Smallest singular value of `G` (counting `L` values, zeros appended when
/// `G` is wide) and the matching right singular vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularPair<T> {
    pub sigma_min: T,
    pub q: Vec<Complex<T>>,
}

/// Smallest singular pair of an `R×L` matrix via the eigen-decomposition of
/// the `L×L` matrix `GᴴG`.
pub fn smallest_singular_pair<T: Scalar>(g: &CMat<T>) -> Result<SingularPair<T>> {
    if g.rows() == 0 || g.cols() == 0 {
        return Err(Error::Dimension(format!(
            "empty {}x{} matrix",
            g.rows(),
            g.cols()
        )));
    }
    let (values, vectors) = hermitian_eigen(&g.gram())?;
    let lambda = values[0].max(T::zero());
    Ok(SingularPair {
        sigma_min: lambda.sqrt(),
        q: vectors.column(0),
    })
}

// ---------------------------------------------------------------------------
// inversion

/// Inverse of a square matrix by Gauss–Jordan elimination with partial
/// pivoting. Fails with [`Error::Singular`] when the 1-norm condition
/// estimate exceeds [`Scalar::SINGULAR_COND`].
pub fn invert_square<T: Scalar>(f: &CMat<T>) -> Result<CMat<T>> {
    if !f.is_square() || f.rows() == 0 {
        return Err(Error::Dimension(format!(
            "cannot invert a {}x{} matrix",
            f.rows(),
            f.cols()
        )));
    }
    f.check_finite()?;
    let n = f.rows();
    let mut a = f.clone();
    let mut inv = CMat::<T>::identity(n);

    for col in 0..n {
        let (piv, mag) = (col..n)
            .map(|r| (r, a[(r, col)].norm()))
            .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if mag <= T::zero() {
            return Err(Error::Singular {
                cond: f64::INFINITY,
            });
        }
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(piv, j)];
                inv[(piv, j)] = t;
            }
        }
        let d = a[(col, col)].inv();
        for j in 0..n {
            a[(col, j)] *= d;
            inv[(col, j)] *= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor.is_zero() {
                continue;
            }
            for j in 0..n {
                let ac = a[(col, j)];
                let ic = inv[(col, j)];
                a[(r, j)] -= factor * ac;
                inv[(r, j)] -= factor * ic;
            }
        }
    }

    let cond = (f.norm_one() * inv.norm_one()).as_f64();
    if !cond.is_finite() || cond > T::SINGULAR_COND {
        return Err(Error::Singular { cond });
    }
    Ok(inv)
}
