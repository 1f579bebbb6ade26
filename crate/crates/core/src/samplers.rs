//! Seeded random generators for simulations and tests.
//!
//! Every sampler draws from a [`SeededStream`], a ChaCha20 generator
//! (`rand_chacha::ChaCha20Rng`) seeded with `seed_from_u64`. The algorithm is
//! part of the public contract: the same seed yields the same output on every
//! platform and in every release that keeps [`SeededStream::ALGORITHM`].

use crate::error::{Error, Result};
use crate::symmat::{PsdAtom, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

pub struct SeededStream {
    seed: u64,
    rng: ChaCha20Rng,
}

impl SeededStream {
    pub const ALGORITHM: &'static str = "chacha20/seed_from_u64";

    pub fn new(seed: u64) -> Self {
        SeededStream { seed, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        Self::ALGORITHM
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn normal_matrix(&mut self, r: usize, c: usize) -> DMatrix<f64> {
        // Filled row by row so that row i of an n×q draw does not depend on n.
        let mut m = DMatrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                m[(i, j)] = self.standard_normal();
            }
        }
        m
    }
}

impl RngCore for SeededStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `n` rows drawn i.i.d. from `N(μ, Σ)`.
pub fn mvn(mu: &DVector<f64>, sigma: &SpdMatrix, n: usize, stream: &mut SeededStream) -> Result<DMatrix<f64>> {
    crate::error::check_dim(sigma.dim(), mu.len())?;
    let z = stream.normal_matrix(n, mu.len());
    let mut x = z * sigma.cholesky_factor().transpose();
    for mut row in x.row_iter_mut() {
        row += mu.transpose();
    }
    Ok(x)
}

/// `n` rows from the multivariate t law with `ν` degrees of freedom, centre `μ`
/// and scatter `Σ`: a Gaussian row divided by `sqrt(χ²_ν / ν)`.
pub fn mvt(mu: &DVector<f64>, sigma: &SpdMatrix, nu: f64, n: usize, stream: &mut SeededStream) -> Result<DMatrix<f64>> {
    crate::error::check_dim(sigma.dim(), mu.len())?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidInput(format!("degrees of freedom must be positive, got {nu}")));
    }
    let chi = ChiSquared::new(nu).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let l = sigma.cholesky_factor();
    let q = mu.len();
    let mut x = DMatrix::zeros(n, q);
    for i in 0..n {
        let z = DVector::from_fn(q, |_, _| stream.standard_normal());
        let w: f64 = chi.sample(&mut stream.rng);
        let row = (&l * z) / (w / nu).sqrt() + mu;
        x.set_row(i, &row.transpose());
    }
    Ok(x)
}

/// Uniform draw from the unit sphere in `ℝ^q`.
pub fn uniform_sphere(q: usize, stream: &mut SeededStream) -> Result<DVector<f64>> {
    if q == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    loop {
        let z = DVector::from_fn(q, |_, _| stream.standard_normal());
        let r = z.norm();
        if r > 0.0 {
            return Ok(z / r);
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of `R`'s diagonal absorbed into `Q`.
pub fn haar_orthogonal(q: usize, stream: &mut SeededStream) -> Result<DMatrix<f64>> {
    if q == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let z = stream.normal_matrix(q, q);
    let qr = z.qr();
    let r = qr.r();
    let mut u = qr.q();
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            u.column_mut(j).neg_mut();
        }
    }
    Ok(u)
}

/// Wishart draw `Σ_{i≤m} Y_i Y_iᵀ` with `Y_i ~ N(0, Σ)`.
pub fn wishart(sigma: &SpdMatrix, m: usize, stream: &mut SeededStream) -> Result<PsdAtom> {
    if m == 0 {
        return Err(Error::InvalidInput("Wishart degrees of freedom must be at least 1".into()));
    }
    let z = stream.normal_matrix(m, sigma.dim()).transpose();
    PsdAtom::from_factor(sigma.cholesky_factor() * z)
}
