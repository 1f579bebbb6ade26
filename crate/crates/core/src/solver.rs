//! Scatter criterion, its fixed-point solver and derivatives.
//!
//! The criterion is `L(Σ, Q) = Σ w [ρ(tr Σ⁻¹M) − ρ(tr M)] + log det Σ` and
//! its stationarity condition is `Σ = Ψ(Σ, Q) = Σ w ρ′(tr Σ⁻¹M) M`.

use crate::distribution::{
    check_existence, from_wishart_groups, transform, Direction, ExistenceReport, MatrixDistribution, Verdict,
    WishartGroup,
};
use crate::error::{check_dim, Error, Result};
use crate::par::map_reduce;
use crate::rho::{validate, CaseTag, RhoFunction, RhoKind};
use crate::symmat::{sym_dim, sym_exp, sym_log, SpdMatrix, SymMatrix};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub enum Start {
    Identity,
    /// `Σ w M`, rescaled to trace `q`.
    MeanAtom,
    User(SpdMatrix),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Relative Frobenius change `‖Ψ(Σ) − Σ‖ / ‖Σ‖`.
    pub tol_fixed_point: f64,
    pub tol_gradient: f64,
    pub max_iter: usize,
    pub start: Start,
    /// Unit-determinant iterates. Always on for Tyler's criterion; rejected
    /// otherwise, since the other criteria are not scale invariant.
    pub normalize_det: bool,
    pub divergence_cond_limit: f64,
    pub divergence_lognorm_limit: f64,
    /// Run [`check_existence`] before iterating.
    pub check_existence: bool,
    pub existence_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_fixed_point: 1e-10,
            tol_gradient: 1e-9,
            max_iter: 500,
            start: Start::Identity,
            normalize_det: false,
            divergence_cond_limit: 1e12,
            divergence_lognorm_limit: 40.0,
            check_existence: true,
            existence_budget: 2000,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol_fixed_point > 0.0) || !(self.tol_gradient > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.divergence_cond_limit > 1.0) || !(self.divergence_lognorm_limit > 0.0) {
            return Err(Error::InvalidInput("divergence limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
    ExistenceViolated,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Diverged => "diverged",
            Status::ExistenceViolated => "existence_violated",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScatterEstimate {
    pub sigma: SpdMatrix,
    pub iterations: usize,
    pub criterion: f64,
    pub gradient_norm: f64,
    pub status: Status,
    /// Criterion at every iterate, starting point first.
    pub descent_log: Vec<f64>,
    pub existence: Option<ExistenceReport>,
}

fn check_inputs(s: &SpdMatrix, q: &MatrixDistribution, f: &RhoFunction) -> Result<()> {
    check_dim(q.dim(), s.dim())?;
    check_dim(q.dim(), f.dim())?;
    if f.is_case0() && !q.case0_ready() {
        return Err(Error::InvalidInput("Tyler's criterion needs atoms with positive trace".into()));
    }
    Ok(())
}

/// Criterion and `Ψ` in one pass over the atoms. Both are divided by the
/// accumulated weight so that rounding in the weights cannot shift the scale
/// of `Ψ` (for Tyler's criterion `tr(Σ⁻¹Ψ) = q Σw` exactly).
fn evaluate(s: &SpdMatrix, q: &MatrixDistribution, f: &RhoFunction) -> Result<(f64, DMatrix<f64>)> {
    check_inputs(s, q, f)?;
    let dim = q.dim();
    let atoms = q.atoms();
    let weights = q.weights();
    let acc = map_reduce(
        atoms.len(),
        |range| -> Result<(f64, DMatrix<f64>, f64)> {
            let mut crit = 0.0;
            let mut total = 0.0;
            let mut psi = DMatrix::zeros(dim, dim);
            for i in range {
                total += weights[i];
                let a = &atoms[i];
                if a.is_zero() {
                    continue;
                }
                let t = s.trace_inv_product(a);
                crit += weights[i] * f.rho_diff(t, a.trace())?;
                let c = weights[i] * f.rho_prime_unchecked(t);
                psi.zip_apply(a.base().as_matrix(), |x, m| *x += c * m);
            }
            Ok((crit, psi, total))
        },
        |a, b| {
            let (ca, pa, ta) = a?;
            let (cb, pb, tb) = b?;
            Ok((ca + cb, pa + pb, ta + tb))
        },
    )
    .expect("distribution is non-empty")?;
    let (crit, psi, total) = acc;
    Ok((crit / total + s.log_det(), psi / total))
}

pub fn criterion(s: &SpdMatrix, q: &MatrixDistribution, f: &RhoFunction) -> Result<f64> {
    Ok(evaluate(s, q, f)?.0)
}

/// `Ψ(Σ, Q)`; a singular result signals that the existence condition fails.
pub fn psi_map(s: &SpdMatrix, q: &MatrixDistribution, f: &RhoFunction) -> Result<SpdMatrix> {
    let (_, psi) = evaluate(s, q, f)?;
    SpdMatrix::new(SymMatrix::symmetrized(psi))
        .map_err(|_| Error::ExistenceViolated("Psi(Sigma, Q) is not positive definite".into()))
}

/// `B⁻¹(Σ − Ψ(Σ, Q))B⁻ᵀ` with `B = Σ^{1/2}`.
pub fn gradient(s: &SpdMatrix, q: &MatrixDistribution, f: &RhoFunction) -> Result<SymMatrix> {
    let (_, psi) = evaluate(s, q, f)?;
    let bi = s.inv_sqrt();
    let g = DMatrix::identity(q.dim(), q.dim()) - bi.as_matrix() * psi * bi.as_matrix();
    Ok(SymMatrix::symmetrized(g))
}

/// Frobenius norm of `I − L⁻¹ΨL⁻ᵀ`; equal to the norm of [`gradient`].
fn gradient_norm(s: &SpdMatrix, psi: &DMatrix<f64>) -> f64 {
    let x = s.solve_lower(psi);
    let y = s.solve_lower(&x.transpose());
    (DMatrix::identity(s.dim(), s.dim()) - y).norm()
}

/// `Q` expressed in the coordinates where `Σ` becomes the identity.
pub fn whiten(q: &MatrixDistribution, sigma: &SpdMatrix) -> Result<MatrixDistribution> {
    transform(q, sigma.sqrt().as_matrix(), Direction::Inverse)
}

fn start_point(q: &MatrixDistribution, cfg: &SolverConfig) -> Result<SpdMatrix> {
    let dim = q.dim();
    match &cfg.start {
        Start::Identity => Ok(SpdMatrix::identity(dim)),
        Start::MeanAtom => {
            let m = q.mean();
            let tr = m.trace();
            if !(tr > 0.0) {
                return Err(Error::InvalidInput("mean atom is zero".into()));
            }
            SpdMatrix::new(&m * (dim as f64 / tr))
                .map_err(|_| Error::InvalidInput("mean atom is singular; use another start".into()))
        }
        Start::User(s) => {
            check_dim(dim, s.dim())?;
            Ok(s.clone())
        }
    }
}

/// Iterates `Σ_k = Ψ(Σ_{k−1}, Q)`, rescaling to unit determinant for Tyler's
/// criterion, until the relative change and the gradient are both within
/// tolerance.
pub fn fixed_point_solve(q: &MatrixDistribution, f: &RhoFunction, cfg: &SolverConfig) -> Result<ScatterEstimate> {
    cfg.validate()?;
    check_dim(q.dim(), f.dim())?;
    let case0 = f.is_case0();
    if cfg.normalize_det && !case0 {
        return Err(Error::InvalidInput("det normalization only applies to Tyler's criterion".into()));
    }
    if let RhoKind::Custom(_) = f.kind() {
        let report = validate(f, 64, 1e6)?;
        if !report.passed() {
            return Err(Error::InvalidInput(format!("custom loss fails validation: {:?}", report.violations)));
        }
    }

    let mut sigma = start_point(q, cfg)?;
    if case0 {
        sigma = sigma.det_normalized();
    }

    let existence = if cfg.check_existence || (case0 && !q.case0_ready()) {
        Some(check_existence(q, f, cfg.existence_budget)?)
    } else {
        None
    };
    if let Some(rep) = &existence {
        if rep.verdict == Verdict::Violated {
            return Ok(ScatterEstimate {
                sigma,
                iterations: 0,
                criterion: f64::NAN,
                gradient_norm: f64::NAN,
                status: Status::ExistenceViolated,
                descent_log: Vec::new(),
                existence,
            });
        }
    }

    let mut log = Vec::new();
    let mut iter = 0;
    loop {
        let (crit, psi) = evaluate(&sigma, q, f)?;
        log.push(crit);
        let grad = gradient_norm(&sigma, &psi);
        let rel = (&psi - sigma.as_matrix()).norm() / sigma.as_matrix().norm();
        let finish = |sigma: SpdMatrix, status: Status, log: Vec<f64>, existence: Option<ExistenceReport>| {
            Ok(ScatterEstimate {
                sigma,
                iterations: iter,
                criterion: crit,
                gradient_norm: grad,
                status,
                descent_log: log,
                existence,
            })
        };
        if rel <= cfg.tol_fixed_point && grad <= cfg.tol_gradient {
            return finish(sigma, Status::Converged, log, existence);
        }
        if iter == cfg.max_iter {
            return finish(sigma, Status::MaxIter, log, existence);
        }
        let next = match SpdMatrix::new(SymMatrix::symmetrized(psi)) {
            Ok(s) => s,
            Err(_) => return finish(sigma, Status::ExistenceViolated, log, existence),
        };
        let next = if case0 { next.det_normalized() } else { next };
        iter += 1;
        let sd = next.spectral();
        let cond = sd.max() / sd.min();
        let lognorm = sd.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt();
        if !(cond <= cfg.divergence_cond_limit) || !(lognorm <= cfg.divergence_lognorm_limit) {
            let crit = criterion(&next, q, f).unwrap_or(f64::NAN);
            let grad = f64::NAN;
            log.push(crit);
            return Ok(ScatterEstimate {
                sigma: next,
                iterations: iter,
                criterion: crit,
                gradient_norm: grad,
                status: Status::Diverged,
                descent_log: log,
                existence,
            });
        }
        sigma = next;
    }
}

/// Orthonormal basis of the trace-zero symmetric matrices, in the
/// coordinates of [`SymMatrix::coords`]: Helmert contrasts on the diagonal
/// followed by the off-diagonal unit vectors.
pub fn trace_zero_basis(q: usize) -> DMatrix<f64> {
    let p = sym_dim(q);
    let mut u = DMatrix::zeros(p, p - 1);
    for k in 1..q {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k - 1)] = 1.0 / norm;
        }
        u[(k, k - 1)] = -(k as f64) / norm;
    }
    for c in q..p {
        u[(c, c - 1)] = 1.0;
    }
    u
}

/// The second derivative of `t ↦ L(exp(tA), Q)` at zero, as a self-adjoint
/// operator `A ↦ ½(AΨ + ΨA) + Σ w ρ″(tr M) tr(AM) M` on symmetric matrices.
///
/// For Tyler's criterion the operator is restricted to trace-zero matrices,
/// where it is invertible under the existence condition.
#[derive(Clone, Debug)]
pub struct HessianOperator {
    dim: usize,
    case: CaseTag,
    /// Columns span the domain, in symmetric-matrix coordinates.
    basis: DMatrix<f64>,
    /// The operator on `basis`.
    matrix: DMatrix<f64>,
}

impl HessianOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn case(&self) -> CaseTag {
        self.case
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Dimension of the domain.
    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    fn to_domain(&self, a: &SymMatrix) -> Result<DVector<f64>> {
        check_dim(self.dim, a.dim())?;
        Ok(self.basis.transpose() * a.coords())
    }

    fn lift(&self, v: &DVector<f64>) -> SymMatrix {
        SymMatrix::from_coords(self.dim, &(&self.basis * v)).expect("coordinates of matching length")
    }

    /// `H A`; the trace part of `A` is dropped for Tyler's criterion.
    pub fn apply(&self, a: &SymMatrix) -> Result<SymMatrix> {
        let v = self.to_domain(a)?;
        Ok(self.lift(&(&self.matrix * v)))
    }

    /// `H⁻¹ A` on the domain.
    pub fn solve(&self, a: &SymMatrix) -> Result<SymMatrix> {
        let v = self.to_domain(a)?;
        let chol = self.matrix.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(self.lift(&chol.solve(&v)))
    }

    /// `⟨A, H A⟩`.
    pub fn quadratic(&self, a: &SymMatrix) -> Result<f64> {
        let v = self.to_domain(a)?;
        Ok(v.dot(&(&self.matrix * &v)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigen().eigenvalues.min()
    }

    /// Largest `|H − Hᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

/// Materializes the Hessian at `Σ = I`; whiten `Q` first (see [`whiten`]) to
/// evaluate it at an estimate.
pub fn hessian(q: &MatrixDistribution, f: &RhoFunction) -> Result<HessianOperator> {
    check_dim(q.dim(), f.dim())?;
    if !f.has_second_derivative() {
        return Err(Error::Unsupported(format!("loss '{}' provides no second derivative", f.name())));
    }
    let dim = q.dim();
    let p = sym_dim(dim);
    let (_, psi) = evaluate(&SpdMatrix::identity(dim), q, f)?;
    let atoms = q.atoms();
    let weights = q.weights();
    let curvature = map_reduce(
        atoms.len(),
        |range| -> Result<DMatrix<f64>> {
            let mut acc = DMatrix::zeros(p, p);
            for i in range {
                let a = &atoms[i];
                if a.is_zero() {
                    continue;
                }
                let c = a.base().coords();
                acc.ger(weights[i] * f.rho_second_unchecked(a.trace())?, &c, &c, 1.0);
            }
            Ok(acc)
        },
        |a, b| Ok(a? + b?),
    )
    .expect("distribution is non-empty")?;

    let mut full = curvature;
    for b in 0..p {
        let e = SymMatrix::from_coords(dim, &DVector::from_fn(p, |i, _| if i == b { 1.0 } else { 0.0 }))?;
        let ep = e.as_matrix() * &psi;
        let sym = (&ep + ep.transpose()) * 0.5;
        let col = SymMatrix::symmetrized(sym).coords();
        let mut target = full.column_mut(b);
        target += col;
    }
    let full = (&full + full.transpose()) * 0.5;

    let case = f.case();
    let basis = if case == CaseTag::Case0 { trace_zero_basis(dim) } else { DMatrix::identity(p, p) };
    let matrix = basis.transpose() * &full * &basis;
    Ok(HessianOperator { dim, case, basis, matrix })
}

/// `L(B exp(tA) Bᵀ, Q)` for each `t` in the sorted grid.
pub fn directional_scan(
    b: &DMatrix<f64>,
    a: &SymMatrix,
    q: &MatrixDistribution,
    f: &RhoFunction,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    crate::distribution::check_nonsingular(b)?;
    check_dim(q.dim(), b.nrows())?;
    check_dim(q.dim(), a.dim())?;
    if t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidInput("t_grid must be sorted".into()));
    }
    t_grid
        .iter()
        .map(|&t| {
            let s = sym_exp(&(a * t))?.congruence(b)?;
            criterion(&s, q, f)
        })
        .collect()
}

/// Second divided differences of equally spaced scan values.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

#[derive(Clone, Debug)]
pub struct ProCovEstimate {
    /// Common shape, unit determinant.
    pub sigma: SpdMatrix,
    /// Per-group scale `c_i = tr(Σ⁻¹S_i) / (q m_i)`.
    pub scales: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
    pub existence: Option<ExistenceReport>,
}

/// Proportional covariance model `S_i ~ W(c_i Σ, m_i)`: Tyler's criterion on
/// the groups weighted by `m_i / m₊`, followed by the closed-form scales.
pub fn solve_procov(groups: &[WishartGroup], cfg: &SolverConfig) -> Result<ProCovEstimate> {
    let q = from_wishart_groups(groups)?;
    let dim = q.dim();
    let f = RhoFunction::tyler(dim)?;
    let est = fixed_point_solve(&q, &f, cfg)?;
    let scales = groups.iter().map(|g| est.sigma.trace_inv_product(&g.scatter) / (dim as f64 * g.dof as f64)).collect();
    Ok(ProCovEstimate {
        sigma: est.sigma,
        scales,
        objective: est.criterion,
        status: est.status,
        iterations: est.iterations,
        existence: est.existence,
    })
}

/// `‖R − αΣ‖_F / ‖Σ‖_F` for `R = m₊⁻¹ Σ c_i⁻¹ S_i` and the least-squares `α`.
pub fn procov_stationarity(groups: &[WishartGroup], est: &ProCovEstimate) -> Result<(f64, f64)> {
    check_dim(groups.len(), est.scales.len())?;
    let dim = est.sigma.dim();
    let m_plus: usize = groups.iter().map(|g| g.dof).sum();
    let mut r = DMatrix::zeros(dim, dim);
    for (g, c) in groups.iter().zip(&est.scales) {
        let w = 1.0 / (c * m_plus as f64);
        r.zip_apply(g.scatter.base().as_matrix(), |x, m| *x += w * m);
    }
    let s = est.sigma.as_matrix();
    let alpha = r.dot(s) / s.dot(s);
    Ok(((r - s * alpha).norm() / s.norm(), alpha))
}

/// `‖sym_log Σ‖_F`, the distance of `Σ` from the identity.
pub fn log_norm(s: &SpdMatrix) -> f64 {
    sym_log(s).frobenius_norm()
}
