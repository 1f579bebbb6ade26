//! Joint location and scatter for the multivariate t criterion with `ν ≥ 1`.
//!
//! Each observation `x` becomes `y = [x; 1]`. The pair `(μ, Σ)` corresponds to
//! `Γ = [[Σ + μμᵀ, μ], [μᵀ, 1]]`, and the location-scatter criterion equals a
//! scatter criterion for `Γ` with loss `ρ̃(s) = ρ(s − 1)`: the t loss with
//! `ν − 1` degrees of freedom in dimension `q + 1`, or Tyler's loss when
//! `ν = 1`.

use crate::distribution::{check_existence, from_observations, ExistenceReport, MatrixDistribution, Verdict};
use crate::error::{check_dim, Error, Result};
use crate::rho::RhoFunction;
use crate::solver::{fixed_point_solve, ScatterEstimate, SolverConfig, Status};
use crate::symmat::{orthonormal_basis, SpdMatrix, SymMatrix};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct AugmentedProblem {
    pub nu: f64,
    pub q: usize,
    pub augmented_rho: RhoFunction,
    pub q_aug: MatrixDistribution,
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu >= 1.0) || !nu.is_finite() {
        return Err(Error::InvalidInput(format!("location-scatter estimation needs finite nu >= 1, got {nu}")));
    }
    Ok(())
}

/// Rows `[x_i, 1]`.
pub fn augment_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q) = x.shape();
    let mut y = DMatrix::from_element(n, q + 1, 1.0);
    y.columns_mut(0, q).copy_from(x);
    y
}

pub fn augment(x: &DMatrix<f64>, nu: f64) -> Result<AugmentedProblem> {
    check_nu(nu)?;
    let q = x.ncols();
    let q_aug = from_observations(&augment_rows(x), None)?;
    let augmented_rho = if nu == 1.0 { RhoFunction::tyler(q + 1)? } else { RhoFunction::t_dist(nu - 1.0, q + 1)? };
    Ok(AugmentedProblem { nu, q, augmented_rho, q_aug })
}

/// `[[Σ + μμᵀ, μ], [μᵀ, 1]]`.
pub fn gamma_from(mu: &DVector<f64>, sigma: &SpdMatrix) -> Result<SpdMatrix> {
    let q = sigma.dim();
    check_dim(q, mu.len())?;
    let mut g = DMatrix::from_element(q + 1, q + 1, 1.0);
    g.view_mut((0, 0), (q, q)).copy_from(&(sigma.as_matrix() + mu * mu.transpose()));
    g.view_mut((0, q), (q, 1)).copy_from(mu);
    g.view_mut((q, 0), (1, q)).copy_from(&mu.transpose());
    SpdMatrix::from_matrix(g)
}

/// Splits `Γ` into `μ = b / c` and `Σ = A / c − μμᵀ`.
pub fn split_gamma(gamma: &SpdMatrix) -> Result<(DVector<f64>, SpdMatrix)> {
    let q = gamma.dim() - 1;
    let g = gamma.as_matrix();
    let c = g[(q, q)];
    let b: DVector<f64> = g.view((0, q), (q, 1)).column(0).into_owned();
    let mu = &b / c;
    let a = g.view((0, 0), (q, q)) / c - &mu * mu.transpose();
    let sigma = SpdMatrix::new(SymMatrix::new(a)?)
        .map_err(|_| Error::Inconsistent("extracted scatter is not positive definite".into()))?;
    Ok((mu, sigma))
}

/// `Σ w [ρ((x−μ)ᵀΣ⁻¹(x−μ)) − ρ(‖x‖²)] + log det Σ` with the t loss in dimension `q`.
pub fn location_criterion(x: &DMatrix<f64>, mu: &DVector<f64>, sigma: &SpdMatrix, nu: f64) -> Result<f64> {
    let (n, q) = x.shape();
    check_dim(q, mu.len())?;
    check_dim(q, sigma.dim())?;
    let f = RhoFunction::t_dist(nu, q)?;
    let mut acc = 0.0;
    for i in 0..n {
        let xi = x.row(i).transpose();
        let d = &xi - mu;
        acc += f.rho_diff(sigma.quad_inv(&d), xi.norm_squared())?;
    }
    Ok(acc / n as f64 + sigma.log_det())
}

/// An affine flat `point + span(directions)` carrying too much mass.
#[derive(Clone, Debug)]
pub struct AffineWitness {
    pub point: DVector<f64>,
    pub directions: DMatrix<f64>,
    pub dim: usize,
    pub mass: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct LocationExistence {
    /// Report on the augmented problem; thresholds coincide with the affine ones.
    pub report: ExistenceReport,
    pub flats: Vec<AffineWitness>,
}

impl LocationExistence {
    pub fn verdict(&self) -> Verdict {
        self.report.verdict
    }
}

/// Checks `P(a + V) < (dim V + ν)/(q + ν)` over flats spanned by data points.
pub fn check_location_existence(x: &DMatrix<f64>, nu: f64, budget: usize) -> Result<LocationExistence> {
    let prob = augment(x, nu)?;
    let report = check_existence(&prob.q_aug, &prob.augmented_rho, budget)?;
    let q = prob.q;
    let flats = report
        .witnesses
        .iter()
        .filter(|w| w.dim > 0)
        .map(|w| {
            // The last coordinate of W c is rᵀc with r the last row of W.
            let r: DVector<f64> = w.basis.row(q).transpose();
            let rn = r.norm_squared();
            let p = &w.basis * &r;
            let point = p.rows(0, q) / p[q];
            let proj = DMatrix::identity(w.dim, w.dim) - &r * r.transpose() / rn;
            let dirs = (&w.basis * proj).rows(0, q).into_owned();
            AffineWitness {
                point,
                directions: orthonormal_basis(&dirs),
                dim: w.dim - 1,
                mass: w.mass,
                threshold: w.threshold,
            }
        })
        .collect();
    Ok(LocationExistence { report, flats })
}

#[derive(Clone, Debug)]
pub struct LocationScatterEstimate {
    pub mu: DVector<f64>,
    pub sigma: SpdMatrix,
    /// Normalized so that the corner entry is one.
    pub gamma: SpdMatrix,
    /// Corner entry of the solver's `Γ` before normalization.
    pub gamma_corner: f64,
    pub status: Status,
    pub iterations: usize,
    pub criterion: f64,
    pub scatter: ScatterEstimate,
}

pub fn estimate(x: &DMatrix<f64>, nu: f64, cfg: &SolverConfig) -> Result<LocationScatterEstimate> {
    let prob = augment(x, nu)?;
    let q = prob.q;
    let est = fixed_point_solve(&prob.q_aug, &prob.augmented_rho, cfg)?;
    let corner = est.sigma.as_matrix()[(q, q)];
    // For ν > 1 the fixed point has corner one already; dividing only removes
    // the scale left free by Tyler's criterion when ν = 1.
    let gamma = if nu == 1.0 { est.sigma.scaled(1.0 / corner)? } else { est.sigma.clone() };
    let (mu, sigma) = split_gamma(&gamma)?;
    Ok(LocationScatterEstimate {
        mu,
        sigma,
        gamma,
        gamma_corner: corner,
        status: est.status,
        iterations: est.iterations,
        criterion: est.criterion,
        scatter: est,
    })
}
