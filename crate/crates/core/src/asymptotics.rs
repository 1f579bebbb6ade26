//! Influence functions and asymptotic covariances of the M-functionals,
//! closed-form constants for spherically symmetric laws, and Monte Carlo
//! oracles for moments of Haar-distributed orthogonal matrices.
//!
//! Influence matrices are computed in standardized coordinates, where the
//! estimate is the identity (and the location zero), and mapped back by
//! congruence with `B = Σ̂^{1/2}`.

use crate::distribution::{build_kstat, from_observations, index_subsets, sample_covariance, MatrixDistribution};
use crate::error::{check_dim, Error, Result};
use crate::location::{augment, LocationScatterEstimate};
use crate::rho::RhoFunction;
use crate::samplers::{haar_orthogonal, SeededStream};
use crate::solver::{fixed_point_solve, gradient, hessian, HessianOperator, ScatterEstimate, SolverConfig, Status};
use crate::symmat::{vech_indices, PsdAtom, SpdMatrix, SymMatrix};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct InfluenceReport {
    /// `Z(x_i)` in standardized coordinates; `(q+1)×(q+1)` for location-scatter.
    pub z: Vec<SymMatrix>,
    pub weights: Vec<f64>,
    /// Parameters indexing `acov`: `mu[i]` (location only), then `sigma[i,j]` with `i ≤ j`.
    pub labels: Vec<String>,
    /// Influence vectors in the original coordinates, one per observation,
    /// ordered like `labels`.
    pub values: Vec<DVector<f64>>,
    /// Covariance of the per-observation influence vectors in the original coordinates.
    pub acov: DMatrix<f64>,
    /// `sqrt(acov / n)` on the diagonal, arranged as a symmetric matrix.
    pub se_sigma: SymMatrix,
    pub se_mu: Option<DVector<f64>>,
    /// `B` with `x = B x_std + μ̂`.
    pub whitening: DMatrix<f64>,
    pub n: usize,
    /// The inner expectation of a k-statistic (k ≥ 2) was replaced by an
    /// average over the observed sample.
    pub plug_in: bool,
}

impl InfluenceReport {
    /// Frobenius norm of the weighted mean of the influence matrices.
    pub fn centering_residual(&self) -> f64 {
        let d = self.z[0].dim();
        let mut acc = DMatrix::zeros(d, d);
        for (z, w) in self.z.iter().zip(&self.weights) {
            acc += z.as_matrix() * *w;
        }
        acc.norm()
    }
}

/// Caps on enumerated index subsets for k-statistics.
#[derive(Clone, Copy, Debug)]
pub struct SubsetCaps {
    /// Subsets forming the symmetrized distribution `Q`.
    pub outer: usize,
    /// (k−1)-subsets averaged for each influence value.
    pub inner: usize,
}

impl Default for SubsetCaps {
    fn default() -> Self {
        SubsetCaps { outer: 200_000, inner: 20_000 }
    }
}

fn influence_k1_with(h: &HessianOperator, f: &RhoFunction, x: &DVector<f64>) -> Result<SymMatrix> {
    check_dim(h.dim(), x.len())?;
    let s = x.norm_squared();
    if f.is_case0() && s == 0.0 {
        return Err(Error::Domain("influence of the origin is undefined for Tyler's criterion".into()));
    }
    let m = &(&SymMatrix::outer(x) * f.rho_prime(s)?) - &SymMatrix::identity(x.len());
    h.solve(&m)
}

/// `Z(x) = H⁻¹(ρ′(‖x‖²) xxᵀ − I)` for a `Q_std` whose estimate is the identity.
pub fn influence_k1(q_std: &MatrixDistribution, f: &RhoFunction, x_std: &DVector<f64>) -> Result<SymMatrix> {
    let h = hessian(q_std, f)?;
    influence_k1_with(&h, f, x_std)
}

fn seed_for(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `k H⁻¹(mean ρ′(tr S) S − I)` over sample covariances `S` of `x` together
/// with (k−1)-subsets of the rows, skipping row `skip`.
#[allow(clippy::too_many_arguments)]
fn kstat_influence(
    h: &HessianOperator,
    xs: &DMatrix<f64>,
    f: &RhoFunction,
    k: usize,
    x: &DVector<f64>,
    skip: Option<usize>,
    inner_cap: usize,
    seed: u64,
) -> Result<SymMatrix> {
    let (n, q) = xs.shape();
    check_dim(q, x.len())?;
    let pool: Vec<usize> = (0..n).filter(|&j| Some(j) != skip).collect();
    if k < 2 || pool.len() < k - 1 {
        return Err(Error::InvalidInput(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let subsets = index_subsets(pool.len(), k - 1, inner_cap, seed)?;
    let mut pts = DMatrix::zeros(k, q);
    pts.set_row(0, &x.transpose());
    let mut acc = DMatrix::zeros(q, q);
    for s in &subsets {
        for (r, &j) in s.iter().enumerate() {
            pts.set_row(r + 1, &xs.row(pool[j]));
        }
        let sc = sample_covariance(&pts)?;
        acc += sc.base().as_matrix() * f.rho_prime(sc.trace())?;
    }
    acc /= subsets.len() as f64;
    let m = &SymMatrix::symmetrized(acc) - &SymMatrix::identity(q);
    Ok(&h.solve(&m)? * k as f64)
}

/// Influence of `x_std` on the k-statistic functional (k ≥ 2). `q_std` is the
/// symmetrized distribution built from the rows of `x_std_rows`, whose
/// estimate is the identity. The inner expectation is averaged over
/// (k−1)-subsets of the rows, leaving out the first row equal to `x_std`.
pub fn influence_kge2(
    q_std: &MatrixDistribution,
    x_std_rows: &DMatrix<f64>,
    f: &RhoFunction,
    k: usize,
    x_std: &DVector<f64>,
    inner_cap: usize,
    seed: u64,
) -> Result<SymMatrix> {
    let h = hessian(q_std, f)?;
    let skip = (0..x_std_rows.nrows()).find(|&i| x_std_rows.row(i).transpose() == *x_std);
    kstat_influence(&h, x_std_rows, f, k, x_std, skip, inner_cap, seed)
}

fn sigma_labels(q: usize) -> Vec<String> {
    vech_indices(q).into_iter().map(|(i, j)| format!("sigma[{i},{j}]")).collect()
}

/// Weighted covariance of the columns' rows: `Σ w (v − v̄)(v − v̄)ᵀ`.
fn weighted_cov(v: &[DVector<f64>], w: &[f64]) -> DMatrix<f64> {
    let p = v[0].len();
    let mut mean = DVector::zeros(p);
    for (x, wi) in v.iter().zip(w) {
        mean += x * *wi;
    }
    let mut c = DMatrix::zeros(p, p);
    for (x, wi) in v.iter().zip(w) {
        let d = x - &mean;
        c.ger(*wi, &d, &d, 1.0);
    }
    (&c + c.transpose()) * 0.5
}

fn standard_errors(acov: &DMatrix<f64>, n: usize, q: usize, offset: usize) -> (SymMatrix, Option<DVector<f64>>) {
    let se = |k: usize| (acov[(k, k)].max(0.0) / n as f64).sqrt();
    let mut s = DMatrix::zeros(q, q);
    for (k, (i, j)) in vech_indices(q).into_iter().enumerate() {
        s[(i, j)] = se(offset + k);
        s[(j, i)] = s[(i, j)];
    }
    let mu = (offset > 0).then(|| DVector::from_fn(offset, |i, _| se(i)));
    (SymMatrix::symmetrized(s), mu)
}

fn require_converged(status: Status) -> Result<()> {
    if status != Status::Converged {
        return Err(Error::InvalidInput(format!("estimate did not converge (status {})", status.as_str())));
    }
    Ok(())
}

/// Influence functions and delta-method covariance of a scatter estimate
/// computed from the rows of `x` (k = 1: atoms `xxᵀ`; k ≥ 2: sample
/// covariances of k-subsets).
pub fn acov_scatter(
    x: &DMatrix<f64>,
    est: &ScatterEstimate,
    f: &RhoFunction,
    k: usize,
    caps: SubsetCaps,
    seed: u64,
) -> Result<InfluenceReport> {
    require_converged(est.status)?;
    let (n, q) = x.shape();
    check_dim(est.sigma.dim(), q)?;
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let b = est.sigma.sqrt().as_matrix().clone();
    let xs = x * est.sigma.inv_sqrt().as_matrix();
    let rows: Vec<DVector<f64>> = (0..n).map(|i| xs.row(i).transpose()).collect();
    let z: Vec<SymMatrix> = if k == 1 {
        let h = hessian(&from_observations(&xs, None)?, f)?;
        rows.par_iter().map(|r| influence_k1_with(&h, f, r)).collect::<Result<_>>()?
    } else {
        let h = hessian(&build_kstat(&xs, k, caps.outer, seed)?, f)?;
        rows.par_iter()
            .enumerate()
            .map(|(i, r)| kstat_influence(&h, &xs, f, k, r, Some(i), caps.inner, seed_for(seed, i)))
            .collect::<Result<_>>()?
    };
    let weights = vec![1.0 / n as f64; n];
    let v: Vec<DVector<f64>> =
        z.iter().map(|zi| Ok(DVector::from_vec(zi.congruence(&b)?.vech()))).collect::<Result<_>>()?;
    let acov = weighted_cov(&v, &weights);
    let (se_sigma, _) = standard_errors(&acov, n, q, 0);
    Ok(InfluenceReport {
        z,
        weights,
        labels: sigma_labels(q),
        values: v,
        acov,
        se_sigma,
        se_mu: None,
        whitening: b,
        n,
        plug_in: k >= 2,
    })
}

/// Influence functions of the location-scatter estimate through the
/// augmented problem: `Z̃(x) = H̃⁻¹(ρ̃′(‖y‖²) yyᵀ − I)` with `y = [x; 1]` in
/// standardized coordinates. For `ν = 1` the operator acts on trace-zero
/// matrices and the corner entry is removed by subtracting `Z̃_{q+1,q+1} I`.
pub fn location_influence(x: &DMatrix<f64>, nu: f64, est: &LocationScatterEstimate) -> Result<InfluenceReport> {
    require_converged(est.status)?;
    let (n, q) = x.shape();
    check_dim(est.mu.len(), q)?;
    check_dim(est.sigma.dim(), q)?;
    let b = est.sigma.sqrt().as_matrix().clone();
    let mut xs = x.clone();
    for mut row in xs.row_iter_mut() {
        row -= est.mu.transpose();
    }
    let xs = xs * est.sigma.inv_sqrt().as_matrix();
    let prob = augment(&xs, nu)?;
    let rho = &prob.augmented_rho;
    let h = hessian(&prob.q_aug, rho)?;
    let eye = SymMatrix::identity(q + 1);
    let z: Vec<SymMatrix> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = DVector::from_fn(q + 1, |j, _| if j < q { xs[(i, j)] } else { 1.0 });
            let m = &(&SymMatrix::outer(&y) * rho.rho_prime(y.norm_squared())?) - &eye;
            let zt = h.solve(&m)?;
            Ok(if nu == 1.0 { &zt - &(&eye * zt.get(q, q)) } else { zt })
        })
        .collect::<Result<_>>()?;

    // μ = b / c and Σ = A / c − μμᵀ, linearized at (μ, Σ, c) = (0, I, 1).
    let v: Vec<DVector<f64>> = z
        .iter()
        .map(|zt| {
            let m = zt.as_matrix();
            let dmu = &b * m.view((0, q), (q, 1));
            let ds = m.view((0, 0), (q, q)) - DMatrix::identity(q, q) * m[(q, q)];
            let ds = SymMatrix::symmetrized(&b * ds * &b);
            let mut out = dmu.column(0).iter().copied().collect::<Vec<_>>();
            out.extend(ds.vech());
            DVector::from_vec(out)
        })
        .collect();
    let weights = vec![1.0 / n as f64; n];
    let acov = weighted_cov(&v, &weights);
    let (se_sigma, se_mu) = standard_errors(&acov, n, q, q);
    let mut labels: Vec<String> = (0..q).map(|i| format!("mu[{i}]")).collect();
    labels.extend(sigma_labels(q));
    Ok(InfluenceReport { z, weights, labels, values: v, acov, se_sigma, se_mu, whitening: b, n, plug_in: false })
}

/// Constants of the influence functions of the t functional under a
/// spherically symmetric law, given the squared radii `‖x‖²` of the
/// standardized law (with optional weights).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalConstants {
    pub kappa: f64,
    pub c0: f64,
    pub c1: f64,
    /// Location coefficient; defined for `ν ≥ 1`.
    pub c2: Option<f64>,
    pub d0: f64,
    pub d1: f64,
}

pub fn spherical_constants(radii: &[f64], weights: Option<&[f64]>, nu: f64, q: usize) -> Result<SphericalConstants> {
    if q == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidInput(format!("nu must be finite and nonnegative, got {nu}")));
    }
    if radii.is_empty() {
        return Err(Error::InvalidInput("no radii given".into()));
    }
    if let Some(w) = weights {
        check_dim(radii.len(), w.len())?;
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
    }
    if radii.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput("squared radii must be finite and nonnegative".into()));
    }
    if nu == 0.0 && radii.contains(&0.0) {
        return Err(Error::Domain("zero radius under Tyler's criterion".into()));
    }
    let qf = q as f64;
    let (mut total, mut kappa, mut t) = (0.0, 0.0, 0.0);
    for (i, &s) in radii.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        total += w;
        kappa += w * (nu + qf) * nu / (nu + s).powi(2);
        // −ρ″(s)·s² for the t loss, written to stay exact when ν = 0.
        t += w * (nu + qf) * (s / (nu + s)).powi(2);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    kappa /= total;
    t /= total;
    if kappa >= 1.0 {
        return Err(Error::Range(format!("kappa = {kappa} is not below one")));
    }
    let c0 = (qf + nu) * (qf + 2.0) / (qf + 2.0 * (1.0 - kappa) * nu / qf);
    let c1 = if nu > 0.0 { qf / (1.0 - kappa) } else { 0.0 };
    let c2 = if nu >= 1.0 {
        let den = qf - 2.0 * (1.0 - kappa);
        if den <= 0.0 {
            return Err(Error::Range(format!("location constant undefined: q − 2(1 − kappa) = {den}")));
        }
        Some(qf / den)
    } else {
        None
    };
    Ok(SphericalConstants { kappa, c0, c1, c2, d0: 1.0 - 2.0 * t / (qf * (qf + 2.0)), d1: 1.0 - t / qf })
}

/// Eigenvalue pair `(d0, d1)` of the Hessian at the identity for an
/// orthogonally invariant `Q`: `H A = d0 A₀ + d1 A₁` with `A₀` the trace-free
/// part and `A₁` the trace part. The leading term is `tr Ψ(I, Q)/q`, which is
/// one when the estimate of `Q` is the identity.
pub fn orth_hessian_coeffs(q: &MatrixDistribution, f: &RhoFunction) -> Result<(f64, f64)> {
    let dim = q.dim();
    check_dim(dim, f.dim())?;
    if dim < 2 {
        return Err(Error::InvalidInput("orthogonal-invariance coefficients need q >= 2".into()));
    }
    let qf = dim as f64;
    let (mut psi, mut a0, mut a1) = (0.0, 0.0, 0.0);
    for (m, w) in q.iter() {
        if m.is_zero() {
            continue;
        }
        let t = m.trace();
        let fro2 = m.base().as_matrix().norm_squared();
        let r2 = f.rho_second(t)?;
        psi += w * f.rho_prime(t)? * t;
        a0 += w * r2 * (fro2 - (t * t - fro2) / (qf - 1.0));
        a1 += w * r2 * t * t;
    }
    let base = psi / qf;
    Ok((base + 2.0 * a0 / (qf * (qf + 2.0)), base + a1 / qf))
}

/// `𝔼U₁₁⁴`, `𝔼U₁₁²U₁₂²`, `𝔼U₁₁²U₂₂²` for Haar-distributed `U ∈ O(q)`, `q ≥ 2`.
pub fn haar_fourth_moments(q: usize) -> Result<[f64; 3]> {
    if q < 2 {
        return Err(Error::InvalidInput("need q >= 2".into()));
    }
    let qf = q as f64;
    let d = qf * (qf + 2.0);
    Ok([3.0 / d, 1.0 / d, (qf + 1.0) / ((qf - 1.0) * d)])
}

/// Coefficients `(c0, c1)` with `𝔼 tr(AM) M = c0 A₀ + c1 A₁` for
/// `M = U diag(λ) Uᵀ`, `U` Haar.
pub fn trace_moment_coeffs(lambda: &[f64]) -> Result<(f64, f64)> {
    let q = lambda.len();
    if q < 2 {
        return Err(Error::InvalidInput("need q >= 2".into()));
    }
    let qf = q as f64;
    let sum: f64 = lambda.iter().sum();
    let sq: f64 = lambda.iter().map(|l| l * l).sum();
    let c0 = 2.0 / (qf * (qf + 2.0)) * (sq - (sum * sum - sq) / (qf - 1.0));
    Ok((c0, sum * sum / qf))
}

/// Monte Carlo mean with entrywise standard errors.
#[derive(Clone, Debug)]
pub struct MonteCarloMean {
    pub mean: DMatrix<f64>,
    pub se: DMatrix<f64>,
    pub draws: usize,
}

fn mc_mean(draws: usize, mut f: impl FnMut() -> Result<DMatrix<f64>>) -> Result<MonteCarloMean> {
    if draws < 2 {
        return Err(Error::InvalidInput("need at least two draws".into()));
    }
    let first = f()?;
    let (r, c) = first.shape();
    let mut s1 = first.clone();
    let mut s2 = first.component_mul(&first);
    for _ in 1..draws {
        let v = f()?;
        s1 += &v;
        s2 += v.component_mul(&v);
    }
    let n = draws as f64;
    let mean = s1 / n;
    let se =
        DMatrix::from_fn(r, c, |i, j| ((s2[(i, j)] / n - mean[(i, j)].powi(2)).max(0.0) * n / (n - 1.0) / n).sqrt());
    Ok(MonteCarloMean { mean, se, draws })
}

/// Monte Carlo estimate of `[𝔼U₁₁⁴, 𝔼U₁₁²U₁₂², 𝔼U₁₁²U₂₂²]` as a 1×3 matrix.
pub fn haar_entry_moments(q: usize, draws: usize, stream: &mut SeededStream) -> Result<MonteCarloMean> {
    if q < 2 {
        return Err(Error::InvalidInput("need q >= 2".into()));
    }
    mc_mean(draws, || {
        let u = haar_orthogonal(q, stream)?;
        let a = u[(0, 0)].powi(2);
        Ok(DMatrix::from_row_slice(1, 3, &[a * a, a * u[(0, 1)].powi(2), a * u[(1, 1)].powi(2)]))
    })
}

/// Monte Carlo estimate of `𝔼 tr(AM) M` with `M = U diag(λ) Uᵀ`, `U` Haar.
pub fn haar_trace_moment(
    a: &SymMatrix,
    lambda: &[f64],
    draws: usize,
    stream: &mut SeededStream,
) -> Result<MonteCarloMean> {
    let q = lambda.len();
    check_dim(q, a.dim())?;
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
    mc_mean(draws, || {
        let u = haar_orthogonal(q, stream)?;
        let m = &u * &d * u.transpose();
        Ok(&m * a.as_matrix().dot(&m))
    })
}

fn rodrigues(axis: [f64; 3], angle: f64) -> DMatrix<f64> {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -z, y, z, 0.0, -x, -y, x, 0.0]);
    DMatrix::identity(3, 3) + &k * angle.sin() + &k * &k * (1.0 - angle.cos())
}

/// Closure of a set of orthogonal matrices under multiplication.
fn closure(generators: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let q = generators[0].nrows();
    let mut group = vec![DMatrix::identity(q, q)];
    let mut frontier = group.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for g in &frontier {
            for h in generators {
                let p = g * h;
                if !group.iter().any(|e| (e - &p).amax() < 1e-9) {
                    group.push(p.clone());
                    next.push(p);
                }
            }
        }
        frontier = next;
    }
    group
}

/// The dihedral group of order `2m` acting on `ℝ²`.
pub fn dihedral_group(m: usize) -> Result<Vec<DMatrix<f64>>> {
    if m < 1 {
        return Err(Error::InvalidInput("need m >= 1".into()));
    }
    let t = 2.0 * std::f64::consts::PI / m as f64;
    let rot = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
    let flip = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    Ok(closure(&[rot, flip]))
}

/// The 60 rotations of the icosahedron, or all 120 symmetries when
/// `with_reflections` adds `−I`.
pub fn icosahedral_group(with_reflections: bool) -> Vec<DMatrix<f64>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut gens = vec![
        rodrigues([0.0, 1.0, phi], 2.0 * std::f64::consts::PI / 5.0),
        rodrigues([0.0, 0.0, 1.0], std::f64::consts::PI),
    ];
    if with_reflections {
        gens.push(-DMatrix::identity(3, 3));
    }
    closure(&gens)
}

/// Average of `UQUᵀ` over the given group.
pub fn symmetrize(q: &MatrixDistribution, group: &[DMatrix<f64>]) -> Result<MatrixDistribution> {
    if group.is_empty() {
        return Err(Error::InvalidInput("empty group".into()));
    }
    let mut atoms = Vec::with_capacity(q.len() * group.len());
    let mut weights = Vec::with_capacity(atoms.capacity());
    for g in group {
        check_dim(q.dim(), g.nrows())?;
        for (a, w) in q.iter() {
            atoms.push(a.congruence(g)?);
            weights.push(w);
        }
    }
    MatrixDistribution::new(atoms, weights)
}

/// Rows `Ux` for every row `x` and group element `U`.
pub fn symmetrize_rows(x: &DMatrix<f64>, group: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let (n, q) = x.shape();
    let mut out = DMatrix::zeros(n * group.len(), q);
    for (g_idx, g) in group.iter().enumerate() {
        check_dim(q, g.nrows())?;
        let r = x * g.transpose();
        out.rows_mut(g_idx * n, n).copy_from(&r);
    }
    Ok(out)
}

/// `(1 − δ) Q + δ P`.
pub fn mixture(q: &MatrixDistribution, p: &MatrixDistribution, delta: f64) -> Result<MatrixDistribution> {
    check_dim(q.dim(), p.dim())?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!("mixing weight must lie in [0, 1], got {delta}")));
    }
    let mut atoms: Vec<PsdAtom> = q.atoms().to_vec();
    let mut weights: Vec<f64> = q.weights().iter().map(|w| w * (1.0 - delta)).collect();
    atoms.extend(p.atoms().iter().cloned());
    weights.extend(p.weights().iter().map(|w| w * delta));
    MatrixDistribution::new(atoms, weights)
}

#[derive(Clone, Copy, Debug)]
pub struct LinearizationCheck {
    pub delta: f64,
    /// `‖G(Q_δ)‖` with `G` the gradient at the identity.
    pub gradient_norm: f64,
    /// `‖Σ̂(Q_δ) − I + H⁻¹G(Q_δ)‖`.
    pub residual_norm: f64,
    pub ratio: f64,
}

/// First-order accuracy of the inverse-Hessian expansion along the mixture
/// `Q_δ = (1 − δ) Q + δ P`, where `Q`'s estimate is the identity.
pub fn linearization_residual(
    q_std: &MatrixDistribution,
    p: &MatrixDistribution,
    f: &RhoFunction,
    delta: f64,
    cfg: &SolverConfig,
) -> Result<LinearizationCheck> {
    let h = hessian(q_std, f)?;
    let qd = mixture(q_std, p, delta)?;
    let est = fixed_point_solve(&qd, f, cfg)?;
    require_converged(est.status)?;
    let g = gradient(&SpdMatrix::identity(q_std.dim()), &qd, f)?;
    let lin = h.solve(&g)?;
    let resid = &(&est.sigma.sym().clone() - &SymMatrix::identity(q_std.dim())) + &lin;
    let gradient_norm = g.frobenius_norm();
    let residual_norm = resid.frobenius_norm();
    Ok(LinearizationCheck { delta, gradient_norm, residual_norm, ratio: residual_norm / gradient_norm })
}
