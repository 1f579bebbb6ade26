//! Dense symmetric matrices, spectral calculus and the SPD cone.
//!
//! `SymMatrix` is the space of symmetric q×q matrices, `PsdAtom` a positive
//! semidefinite matrix stored together with a factor `F` such that `M = F Fᵀ`,
//! and `SpdMatrix` a positive definite matrix carrying its Cholesky factor.
//! Every value is immutable once built.

use crate::error::{check_dim, Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use std::ops::{Add, Mul, Neg, Sub};

/// Relative tolerance below which negative eigenvalues of a PSD atom are treated as rounding dust.
pub const PSD_DUST: f64 = 1e-10;

/// Relative singular-value cutoff used when extracting column spaces.
pub const RANK_TOL: f64 = 1e-9;

/// Largest eigenvalue accepted by [`sym_exp`] before `exp` overflows.
const EXP_LIMIT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrizes `(A + Aᵀ)/2`. Fails on non-square, empty or non-finite input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrized(m))
    }

    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix { m: (m + t) * 0.5 }
    }

    pub fn from_row_slice(q: usize, data: &[f64]) -> Result<Self> {
        if data.len() != q * q {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {q}x{q} matrix, got {}",
                q * q,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(q, q, data))
    }

    pub fn identity(q: usize) -> Self {
        SymMatrix { m: DMatrix::identity(q, q) }
    }

    pub fn zeros(q: usize) -> Self {
        SymMatrix { m: DMatrix::zeros(q, q) }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix { m: DMatrix::from_diagonal(&DVector::from_column_slice(d)) }
    }

    /// `x xᵀ`.
    pub fn outer(x: &DVector<f64>) -> Self {
        SymMatrix { m: x * x.transpose() }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    /// `B A Bᵀ` for an arbitrary square `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Result<SymMatrix> {
        check_dim(self.dim(), b.ncols())?;
        check_dim(self.dim(), b.nrows())?;
        Ok(Self::symmetrized(b * &self.m * b.transpose()))
    }

    /// Trace-free part `A₀ = A − q⁻¹ tr(A) I`.
    pub fn trace_free(&self) -> SymMatrix {
        let q = self.dim();
        let mut m = self.m.clone();
        let shift = self.trace() / q as f64;
        for i in 0..q {
            m[(i, i)] -= shift;
        }
        SymMatrix { m }
    }

    /// Coordinates in the orthonormal basis `{E_ii} ∪ {(E_ij + E_ji)/√2 : i < j}`.
    ///
    /// Diagonal entries come first, then the scaled upper triangle in row-major order,
    /// so `⟨A, B⟩ = coords(A) · coords(B)`.
    pub fn coords(&self) -> DVector<f64> {
        let q = self.dim();
        let mut v = DVector::zeros(sym_dim(q));
        for i in 0..q {
            v[i] = self.m[(i, i)];
        }
        let mut k = q;
        for i in 0..q {
            for j in i + 1..q {
                v[k] = self.m[(i, j)] * std::f64::consts::SQRT_2;
                k += 1;
            }
        }
        v
    }

    /// Inverse of [`SymMatrix::coords`].
    pub fn from_coords(q: usize, v: &DVector<f64>) -> Result<SymMatrix> {
        check_dim(sym_dim(q), v.len())?;
        let mut m = DMatrix::zeros(q, q);
        for i in 0..q {
            m[(i, i)] = v[i];
        }
        let mut k = q;
        for i in 0..q {
            for j in i + 1..q {
                let a = v[k] / std::f64::consts::SQRT_2;
                m[(i, j)] = a;
                m[(j, i)] = a;
                k += 1;
            }
        }
        Ok(SymMatrix { m })
    }

    /// Upper-triangle entries `(i ≤ j)` in row-major order, unscaled.
    pub fn vech(&self) -> Vec<f64> {
        let q = self.dim();
        let mut out = Vec::with_capacity(sym_dim(q));
        for i in 0..q {
            for j in i..q {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let q = self.dim();
        let mut out = Vec::with_capacity(q * q);
        for i in 0..q {
            for j in 0..q {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }
}

/// Dimension `q(q+1)/2` of the space of symmetric q×q matrices.
pub fn sym_dim(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Index pairs `(i, j)`, `i ≤ j`, matching [`SymMatrix::vech`].
pub fn vech_indices(q: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sym_dim(q));
    for i in 0..q {
        for j in i..q {
            out.push((i, j));
        }
    }
    out
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m - &rhs.m }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix { m: &self.m * rhs }
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix { m: -&self.m }
    }
}

/// Eigen-decomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn min(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> SymMatrix {
        let d = self.eigenvalues.map(f);
        let u = &self.eigenvectors;
        let scaled = u * DMatrix::from_diagonal(&d);
        SymMatrix::symmetrized(scaled * u.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }
}

/// Symmetric eigen-decomposition (Householder tridiagonalization followed by implicit QR).
pub fn spectral(a: &SymMatrix) -> Result<SpectralDecomp> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(a.m.clone());
    let q = a.dim();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(q, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(q, q);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomp { eigenvalues, eigenvectors })
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp(a: &SymMatrix) -> Result<SpdMatrix> {
    let sd = spectral(a)?;
    if sd.max() > EXP_LIMIT {
        return Err(Error::Range(format!("exp overflows: largest eigenvalue {}", sd.max())));
    }
    if sd.min() < -EXP_LIMIT {
        return Err(Error::Range(format!("exp underflows: smallest eigenvalue {}", sd.min())));
    }
    SpdMatrix::new(sd.map(f64::exp))
}

/// Matrix logarithm of a positive definite matrix.
pub fn sym_log(s: &SpdMatrix) -> SymMatrix {
    // SpdMatrix construction guarantees a positive spectrum up to rounding.
    let sd = spectral(&s.base).expect("SPD matrices are finite");
    sd.map(|l| l.max(f64::MIN_POSITIVE).ln())
}

/// `tr(S⁻¹ M)` via a triangular solve against the factor of `M`.
pub fn solve_trace(s: &SpdMatrix, m: &PsdAtom) -> Result<f64> {
    check_dim(s.dim(), m.dim())?;
    Ok(s.trace_inv_product(m))
}

/// Frobenius inner product `tr(AB)`.
pub fn inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.m.dot(&b.m))
}

/// Positive semidefinite matrix `M = F Fᵀ` with cached trace.
#[derive(Clone, Debug)]
pub struct PsdAtom {
    base: SymMatrix,
    factor: DMatrix<f64>,
    trace: f64,
}

impl PsdAtom {
    /// Builds an atom from a symmetric matrix, clipping negative eigenvalues
    /// whose magnitude is below [`PSD_DUST`] times the largest eigenvalue.
    pub fn new(base: SymMatrix) -> Result<Self> {
        Self::with_tolerance(base, PSD_DUST)
    }

    pub fn with_tolerance(base: SymMatrix, rel_tol: f64) -> Result<Self> {
        let q = base.dim();
        let sd = spectral(&base)?;
        let lmax = sd.max().max(0.0);
        if sd.min() < -rel_tol * lmax || (lmax == 0.0 && sd.min() < 0.0) {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: sd.min() });
        }
        let keep: Vec<usize> = (0..q).filter(|&i| sd.eigenvalues[i] > 0.0).collect();
        let mut factor = DMatrix::zeros(q, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let col = sd.eigenvectors.column(i) * sd.eigenvalues[i].sqrt();
            factor.set_column(c, &col);
        }
        let clipped = if sd.min() < 0.0 { sd.map(|l| l.max(0.0)) } else { base };
        let trace = factor.norm_squared();
        Ok(PsdAtom { base: clipped, factor, trace })
    }

    /// `M = F Fᵀ` for any q×r matrix `F`.
    pub fn from_factor(factor: DMatrix<f64>) -> Result<Self> {
        if factor.nrows() == 0 {
            return Err(Error::InvalidInput("factor must have at least one row".into()));
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("factor has non-finite entries".into()));
        }
        let base = SymMatrix::symmetrized(&factor * factor.transpose());
        let trace = factor.norm_squared();
        Ok(PsdAtom { base, factor, trace })
    }

    /// Rank-one atom `x xᵀ`.
    pub fn outer(x: &DVector<f64>) -> Result<Self> {
        Self::from_factor(DMatrix::from_column_slice(x.len(), 1, x.as_slice()))
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &SymMatrix {
        &self.base
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn is_zero(&self) -> bool {
        self.trace == 0.0
    }

    /// `B M Bᵀ`, computed on the factor.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Result<PsdAtom> {
        check_dim(self.dim(), b.ncols())?;
        Self::from_factor(b * &self.factor)
    }

    /// Orthonormal basis (columns) of the column space `M ℝ^q`.
    pub fn column_basis(&self) -> DMatrix<f64> {
        orthonormal_basis(&self.factor)
    }

    pub fn rank(&self) -> usize {
        self.column_basis().ncols()
    }

    /// Whether `M ℝ^q` lies inside the span of the orthonormal columns of `basis`.
    pub fn lies_in(&self, basis: &DMatrix<f64>) -> bool {
        if self.trace == 0.0 {
            return true;
        }
        if basis.ncols() == 0 {
            return false;
        }
        // Orthonormal columns: ‖F‖² − ‖BᵀF‖² is the squared residual of the projection.
        let mut captured = 0.0;
        for b in basis.column_iter() {
            for f in self.factor.column_iter() {
                captured += b.dot(&f).powi(2);
            }
        }
        self.trace - captured <= 1e-14 * self.trace
    }
}

/// Orthonormal basis of the column span of `a`, dropping directions whose
/// singular value is below [`RANK_TOL`] times the largest.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = a.nrows();
    if a.ncols() == 0 || a.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(q, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANK_TOL * smax).collect();
    let mut out = DMatrix::zeros(q, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Symmetric positive definite matrix with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    base: SymMatrix,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        if !base.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let chol = Cholesky::new(base.m.clone()).ok_or(Error::NotPositiveDefinite)?;
        if chol.l_dirty().diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(SpdMatrix { base, chol })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(q: usize) -> Self {
        Self::new(SymMatrix::identity(q)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.base.m
    }

    /// Lower-triangular `L` with `S = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    /// `S⁻¹ X`.
    pub fn solve(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(x)
    }

    /// `L⁻¹ X`.
    pub fn solve_lower(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y
    }

    pub(crate) fn trace_inv_product(&self, m: &PsdAtom) -> f64 {
        if m.factor.ncols() == 1 {
            let mut y = m.factor.column(0).clone_owned();
            self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
            y.norm_squared()
        } else {
            self.solve_lower(&m.factor).norm_squared()
        }
    }

    /// `xᵀ S⁻¹ x`.
    pub fn quad_inv(&self, x: &DVector<f64>) -> f64 {
        let mut y = x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    pub fn inverse(&self) -> SpdMatrix {
        let inv = SymMatrix::symmetrized(self.chol.inverse());
        SpdMatrix::new(inv).expect("inverse of SPD is SPD")
    }

    pub fn spectral(&self) -> SpectralDecomp {
        spectral(&self.base).expect("SPD matrices are finite")
    }

    /// Symmetric square root `S^{1/2}`.
    pub fn sqrt(&self) -> SpdMatrix {
        SpdMatrix::new(self.spectral().map(|l| l.max(0.0).sqrt())).expect("sqrt of SPD is SPD")
    }

    /// Symmetric inverse square root `S^{-1/2}`.
    pub fn inv_sqrt(&self) -> SpdMatrix {
        SpdMatrix::new(self.spectral().map(|l| 1.0 / l.sqrt())).expect("inverse sqrt of SPD is SPD")
    }

    /// Ratio of the largest to the smallest eigenvalue.
    pub fn condition_number(&self) -> f64 {
        let sd = self.spectral();
        sd.max() / sd.min()
    }

    pub fn scaled(&self, c: f64) -> Result<SpdMatrix> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {c}")));
        }
        SpdMatrix::new(&self.base * c)
    }

    /// Rescales to unit determinant.
    pub fn det_normalized(&self) -> SpdMatrix {
        let c = (-self.log_det() / self.dim() as f64).exp();
        self.scaled(c).expect("positive scale")
    }

    /// `B S Bᵀ` for nonsingular `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Result<SpdMatrix> {
        SpdMatrix::new(self.base.congruence(b)?)
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sym(q: usize, v: &[f64]) -> SymMatrix {
        SymMatrix::from_row_slice(q, v).unwrap()
    }

    fn diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
        (a - b).frobenius_norm()
    }

    #[test]
    fn construction_symmetrizes() {
        let a = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
    }

    #[test]
    fn spectral_identity_and_diagonal() {
        let sd = spectral(&SymMatrix::identity(2)).unwrap();
        assert_eq!(sd.eigenvalues.as_slice(), &[1.0, 1.0]);
        let sd = spectral(&SymMatrix::from_diagonal(&[3.0, 1.0])).unwrap();
        assert_abs_diff_eq!(sd.eigenvalues[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sd.eigenvalues[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sd.eigenvectors[(0, 0)].abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sd.eigenvectors[(1, 1)].abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn spectral_two_by_two() {
        // Characteristic polynomial (2-λ)² - 1 = 0 gives λ = 3, 1.
        let sd = spectral(&sym(2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(sd.eigenvalues[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sd.eigenvalues[1], 1.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = sd.eigenvectors.column(0);
        let u1 = sd.eigenvectors.column(1);
        assert_abs_diff_eq!((u0[0] * h + u0[1] * h).abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!((u1[0] * h - u1[1] * h).abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn exp_examples() {
        let e = sym_exp(&SymMatrix::zeros(3)).unwrap();
        assert!(diff(e.sym(), &SymMatrix::identity(3)) < 1e-15);
        let e = sym_exp(&SymMatrix::from_diagonal(&[2f64.ln(), 3f64.ln()])).unwrap();
        assert!(diff(e.sym(), &SymMatrix::from_diagonal(&[2.0, 3.0])) < 1e-14);

        // Oracle: truncated power series Σ A^k / k!, 30 terms.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut term = DMatrix::<f64>::identity(2, 2);
        let mut series = term.clone();
        for k in 1..30 {
            term = &term * &a / k as f64;
            series += &term;
        }
        let (c, s) = (1f64.cosh(), 1f64.sinh());
        assert_abs_diff_eq!(series[(0, 0)], c, epsilon = 1e-15);
        assert_abs_diff_eq!(series[(0, 1)], s, epsilon = 1e-15);
        let e = sym_exp(&SymMatrix::new(a).unwrap()).unwrap();
        assert!((e.as_matrix() - series).norm() < 1e-14);
    }

    #[test]
    fn exp_overflow_is_range_error() {
        let r = sym_exp(&SymMatrix::from_diagonal(&[800.0, 0.0]));
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn log_examples() {
        let l = sym_log(&SpdMatrix::identity(4));
        assert!(l.frobenius_norm() < 1e-15);
        let e = std::f64::consts::E;
        let l = sym_log(&SpdMatrix::new(SymMatrix::from_diagonal(&[e, e * e])).unwrap());
        assert!(diff(&l, &SymMatrix::from_diagonal(&[1.0, 2.0])) < 1e-14);
    }

    #[test]
    fn solve_trace_examples() {
        let m = PsdAtom::new(sym(2, &[4.0, 1.0, 1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(solve_trace(&SpdMatrix::identity(2), &m).unwrap(), 6.0, epsilon = 1e-14);
        let two_i = SpdMatrix::new(SymMatrix::from_diagonal(&[2.0, 2.0])).unwrap();
        assert_abs_diff_eq!(solve_trace(&two_i, &m).unwrap(), 3.0, epsilon = 1e-14);
        let s = SpdMatrix::new(SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        let id = PsdAtom::new(SymMatrix::identity(2)).unwrap();
        assert_abs_diff_eq!(solve_trace(&s, &id).unwrap(), 1.25, epsilon = 1e-14);
        assert!(matches!(solve_trace(&SpdMatrix::identity(3), &id), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn inner_examples() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(inner(&i2, &i2).unwrap(), 2.0);
        let a = sym(2, &[1.0, 2.0, 2.0, 0.0]);
        assert_eq!(inner(&a, &SymMatrix::zeros(2)).unwrap(), 0.0);
        assert_eq!(inner(&a, &sym(2, &[0.0, 1.0, 1.0, 1.0])).unwrap(), 4.0);
        assert!(inner(&a, &SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn psd_atom_clips_dust_and_rejects_negatives() {
        let atom = PsdAtom::new(SymMatrix::from_diagonal(&[1.0, -1e-13])).unwrap();
        assert!(atom.base().get(1, 1) >= 0.0);
        assert_eq!(atom.rank(), 1);
        let err = PsdAtom::new(SymMatrix::from_diagonal(&[1.0, -1e-3])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveSemidefinite { .. }));
        let zero = PsdAtom::new(SymMatrix::zeros(3)).unwrap();
        assert!(zero.is_zero());
        assert_eq!(zero.rank(), 0);
    }

    #[test]
    fn spd_rejects_indefinite() {
        assert!(SpdMatrix::new(SymMatrix::from_diagonal(&[1.0, 0.0])).is_err());
        assert!(SpdMatrix::new(SymMatrix::from_diagonal(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn coords_roundtrip_and_inner_product() {
        let a = sym(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = sym(3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let back = SymMatrix::from_coords(3, &a.coords()).unwrap();
        assert!(diff(&a, &back) < 1e-15);
        assert_abs_diff_eq!(a.coords().dot(&b.coords()), inner(&a, &b).unwrap(), epsilon = 1e-13);
    }

    fn random_sym(q: usize, vals: &[f64]) -> SymMatrix {
        let mut m = DMatrix::zeros(q, q);
        let mut k = 0;
        for i in 0..q {
            for j in i..q {
                m[(i, j)] = vals[k];
                m[(j, i)] = vals[k];
                k += 1;
            }
        }
        SymMatrix::new(m).unwrap()
    }

    fn scaled_to(a: SymMatrix, norm: f64) -> SymMatrix {
        let n = a.frobenius_norm();
        if n == 0.0 {
            a
        } else {
            &a * (norm / n)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn exp_log_bijection(q in 1usize..6, vals in prop::collection::vec(-1.0f64..1.0, 21), r in 0.0f64..3.0) {
            let a = scaled_to(random_sym(q, &vals), r);
            let back = sym_log(&sym_exp(&a).unwrap());
            let tol = 1e-8 * a.frobenius_norm().max(1.0);
            prop_assert!(diff(&back, &a) <= tol);
        }

        #[test]
        fn determinant_identity(q in 1usize..6, vals in prop::collection::vec(-1.0f64..1.0, 21), r in 0.0f64..3.0) {
            let a = scaled_to(random_sym(q, &vals), r);
            let e = sym_exp(&a).unwrap();
            prop_assert!((e.log_det() - a.trace()).abs() <= 1e-8 * a.trace().abs().max(1.0));
        }

        #[test]
        fn log_exp_roundtrip_on_spd(q in 1usize..6, vals in prop::collection::vec(-1.0f64..1.0, 21)) {
            let a = random_sym(q, &vals);
            let s = SpdMatrix::new(&SymMatrix::new(a.as_matrix() * a.as_matrix()).unwrap() + &SymMatrix::identity(q)).unwrap();
            let back = sym_exp(&sym_log(&s)).unwrap();
            prop_assert!(diff(back.sym(), s.sym()) <= 1e-9 * s.sym().frobenius_norm());
            let sd = s.spectral();
            prop_assert!(diff(&sd.reconstruct(), s.sym()) <= 1e-10 * s.sym().frobenius_norm());
            let utu = sd.eigenvectors.transpose() * &sd.eigenvectors;
            prop_assert!((utu - DMatrix::identity(q, q)).amax() <= 1e-10);
        }

        #[test]
        fn trace_bracketing(q in 1usize..6, vals in prop::collection::vec(-1.0f64..1.0, 21), fvals in prop::collection::vec(-1.0f64..1.0, 15)) {
            let a = random_sym(q, &vals);
            let s = SpdMatrix::new(&SymMatrix::new(a.as_matrix() * a.as_matrix()).unwrap() + &(&SymMatrix::identity(q) * 0.1)).unwrap();
            let f = DMatrix::from_iterator(q, 3, fvals.iter().cycle().take(3 * q).copied());
            let m = PsdAtom::from_factor(f).unwrap();
            let t = solve_trace(&s, &m).unwrap();
            let sd = s.spectral();
            let slack = 1e-10 * m.trace().max(1e-300) / sd.min();
            prop_assert!(t >= m.trace() / sd.max() - slack);
            prop_assert!(t <= m.trace() / sd.min() + slack);
        }
    }

    /// Gauss–Legendre nodes and weights on [0, 1] by Newton iteration on P_n.
    fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            out.push(((x + 1.0) / 2.0, w / 2.0));
        }
        out
    }

    #[test]
    fn first_order_frechet_expansion() {
        let nodes = gauss_legendre_01(32);
        assert_abs_diff_eq!(nodes.iter().map(|p| p.1).sum::<f64>(), 1.0, epsilon = 1e-14);
        let a = sym(3, &[0.3, -0.5, 0.2, -0.5, 1.1, 0.4, 0.2, 0.4, -0.7]);
        let dir = scaled_to(sym(3, &[0.2, 0.9, -0.3, 0.9, -0.4, 0.6, -0.3, 0.6, 0.5]), 1.0);
        let mut ratios = Vec::new();
        for h in [1e-2, 1e-3] {
            let b = &dir * h;
            let lhs = sym_exp(&(&a + &b)).unwrap().as_matrix() - sym_exp(&a).unwrap().as_matrix();
            let mut integral = DMatrix::zeros(3, 3);
            for &(u, w) in &nodes {
                let left = sym_exp(&(&a * (1.0 - u))).unwrap();
                let right = sym_exp(&(&a * u)).unwrap();
                integral += (left.as_matrix() * b.as_matrix() * right.as_matrix()) * w;
            }
            let rem = (lhs - integral).norm();
            ratios.push(rem / (h * h));
        }
        let r = ratios[0] / ratios[1];
        assert!(ratios[1] > 0.0 && (0.25..=4.0).contains(&r), "ratios {ratios:?}");
    }
}
