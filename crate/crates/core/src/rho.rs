//! Loss functions `ρ` of the scatter criterion.
//!
//! Each family carries `ρ`, `ρ′`, `ρ″` and `ψ(s) = s ρ′(s)` together with its
//! regime:
//!
//! * Case 0: Tyler's scale-invariant loss `ρ(s) = q log s`, `ψ ≡ q`.
//! * Case 1: `ψ` strictly increasing from 0 to `ψ(∞) ∈ (q, ∞]`.
//! * Case 1′: additionally twice differentiable with bounded, strictly increasing `ψ`.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseTag {
    Case0,
    Case1,
    Case1Prime,
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied loss. Must pass [`validate`] before the solver accepts it.
#[derive(Clone)]
pub struct CustomRho {
    pub name: String,
    pub rho: ScalarFn,
    pub rho_prime: ScalarFn,
    pub rho_second: Option<ScalarFn>,
    pub psi_infinity: f64,
    pub case: CaseTag,
}

#[derive(Clone)]
pub enum RhoKind {
    Tyler,
    TDist { nu: f64 },
    Weibull { gamma: f64 },
    Gaussian,
    Custom(CustomRho),
}

impl fmt::Debug for RhoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoKind::Tyler => write!(f, "Tyler"),
            RhoKind::TDist { nu } => write!(f, "TDist {{ nu: {nu} }}"),
            RhoKind::Weibull { gamma } => write!(f, "Weibull {{ gamma: {gamma} }}"),
            RhoKind::Gaussian => write!(f, "Gaussian"),
            RhoKind::Custom(c) => write!(f, "Custom({:?}, {:?})", c.name, c.case),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RhoFunction {
    kind: RhoKind,
    dim: usize,
}

impl RhoFunction {
    pub fn tyler(q: usize) -> Result<Self> {
        check_q(q)?;
        Ok(RhoFunction { kind: RhoKind::Tyler, dim: q })
    }

    /// Multivariate t loss `ρ(s) = (ν + q) log(ν + s)`.
    pub fn t_dist(nu: f64, q: usize) -> Result<Self> {
        check_q(q)?;
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidInput(format!("degrees of freedom must be positive, got {nu}")));
        }
        Ok(RhoFunction { kind: RhoKind::TDist { nu }, dim: q })
    }

    /// Weibull-type loss `ρ(s) = s^γ`, `γ ∈ (0, 1)`.
    pub fn weibull(gamma: f64, q: usize) -> Result<Self> {
        check_q(q)?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(RhoFunction { kind: RhoKind::Weibull { gamma }, dim: q })
    }

    pub fn gaussian(q: usize) -> Result<Self> {
        check_q(q)?;
        Ok(RhoFunction { kind: RhoKind::Gaussian, dim: q })
    }

    pub fn custom(q: usize, custom: CustomRho) -> Result<Self> {
        check_q(q)?;
        if custom.case == CaseTag::Case0 {
            return Err(Error::InvalidInput("Case 0 is reserved for Tyler's loss".into()));
        }
        Ok(RhoFunction { kind: RhoKind::Custom(custom), dim: q })
    }

    pub fn kind(&self) -> &RhoKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> String {
        match &self.kind {
            RhoKind::Tyler => "tyler".into(),
            RhoKind::TDist { .. } => "t".into(),
            RhoKind::Weibull { .. } => "weibull".into(),
            RhoKind::Gaussian => "gaussian".into(),
            RhoKind::Custom(c) => c.name.clone(),
        }
    }

    pub fn case(&self) -> CaseTag {
        match &self.kind {
            RhoKind::Tyler => CaseTag::Case0,
            RhoKind::TDist { .. } => CaseTag::Case1Prime,
            RhoKind::Weibull { .. } | RhoKind::Gaussian => CaseTag::Case1,
            RhoKind::Custom(c) => c.case,
        }
    }

    pub fn is_case0(&self) -> bool {
        self.case() == CaseTag::Case0
    }

    /// `ψ(∞)`; `+∞` for unbounded families.
    pub fn psi_infinity(&self) -> f64 {
        let q = self.dim as f64;
        match &self.kind {
            RhoKind::Tyler => q,
            RhoKind::TDist { nu } => nu + q,
            RhoKind::Weibull { .. } | RhoKind::Gaussian => f64::INFINITY,
            RhoKind::Custom(c) => c.psi_infinity,
        }
    }

    fn check_arg(&self, s: f64) -> Result<()> {
        if s.is_nan() || s < 0.0 {
            return Err(Error::Domain(format!("loss argument must be non-negative, got {s}")));
        }
        if s == 0.0 && self.is_case0() {
            return Err(Error::Domain("Tyler's loss is undefined at s = 0".into()));
        }
        Ok(())
    }

    pub fn rho(&self, s: f64) -> Result<f64> {
        self.check_arg(s)?;
        let q = self.dim as f64;
        Ok(match &self.kind {
            RhoKind::Tyler => q * s.ln(),
            RhoKind::TDist { nu } => (nu + q) * (nu + s).ln(),
            RhoKind::Weibull { gamma } => s.powf(*gamma),
            RhoKind::Gaussian => s,
            RhoKind::Custom(c) => (c.rho)(s),
        })
    }

    pub fn rho_prime(&self, s: f64) -> Result<f64> {
        self.check_arg(s)?;
        Ok(self.rho_prime_unchecked(s))
    }

    pub(crate) fn rho_prime_unchecked(&self, s: f64) -> f64 {
        let q = self.dim as f64;
        match &self.kind {
            RhoKind::Tyler => q / s,
            RhoKind::TDist { nu } => (nu + q) / (nu + s),
            RhoKind::Weibull { gamma } => gamma * s.powf(gamma - 1.0),
            RhoKind::Gaussian => 1.0,
            RhoKind::Custom(c) => (c.rho_prime)(s),
        }
    }

    /// `ρ″(s)`; unsupported for custom losses supplied without a second derivative.
    pub fn rho_second(&self, s: f64) -> Result<f64> {
        self.check_arg(s)?;
        self.rho_second_unchecked(s)
    }

    pub(crate) fn rho_second_unchecked(&self, s: f64) -> Result<f64> {
        let q = self.dim as f64;
        Ok(match &self.kind {
            RhoKind::Tyler => -q / (s * s),
            RhoKind::TDist { nu } => -(nu + q) / ((nu + s) * (nu + s)),
            RhoKind::Weibull { gamma } => gamma * (gamma - 1.0) * s.powf(gamma - 2.0),
            RhoKind::Gaussian => 0.0,
            RhoKind::Custom(c) => match &c.rho_second {
                Some(f) => f(s),
                None => return Err(Error::Unsupported(format!("loss '{}' provides no second derivative", c.name))),
            },
        })
    }

    pub fn has_second_derivative(&self) -> bool {
        !matches!(&self.kind, RhoKind::Custom(c) if c.rho_second.is_none())
    }

    /// `ψ(s) = s ρ′(s)`.
    pub fn psi(&self, s: f64) -> Result<f64> {
        self.check_arg(s)?;
        let q = self.dim as f64;
        Ok(match &self.kind {
            RhoKind::Tyler => q,
            RhoKind::TDist { nu } => (nu + q) * s / (nu + s),
            RhoKind::Weibull { gamma } => gamma * s.powf(*gamma),
            RhoKind::Gaussian => s,
            RhoKind::Custom(c) => {
                if s == 0.0 {
                    0.0
                } else {
                    s * (c.rho_prime)(s)
                }
            }
        })
    }

    /// `ρ(a) − ρ(b)`, evaluated as a log ratio for the logarithmic families.
    pub fn rho_diff(&self, a: f64, b: f64) -> Result<f64> {
        self.check_arg(a)?;
        self.check_arg(b)?;
        let q = self.dim as f64;
        Ok(match &self.kind {
            RhoKind::Tyler => q * (a / b).ln(),
            RhoKind::TDist { nu } => (nu + q) * ((a - b) / (nu + b)).ln_1p(),
            _ => self.rho(a)? - self.rho(b)?,
        })
    }
}

fn check_q(q: usize) -> Result<()> {
    if q == 0 {
        Err(Error::InvalidInput("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// `ρ′(s) > 0`.
    RhoPrimePositive,
    /// `ρ′` non-increasing.
    RhoPrimeNonIncreasing,
    /// `ψ` non-decreasing.
    PsiNonDecreasing,
    /// Case 1′: `ρ″ ≤ 0`.
    RhoSecondNonPositive,
    /// Case 1′: `ψ′ > 0`.
    PsiStrictlyIncreasing,
    /// Case 1/1′: `ψ(∞) > q`; Case 1′ also needs `ψ(∞) < ∞`.
    PsiInfinityRange,
    /// Supplied derivatives disagree with finite differences.
    DerivativeMismatch,
    /// Non-finite value on the grid.
    NonFinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub condition: Condition,
    pub s: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub s_max: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, c: Condition) -> bool {
        self.violations.iter().any(|v| v.condition == c)
    }
}

/// Checks the standing assumptions on a log-spaced grid in `[s_max·10⁻⁶, s_max]`.
///
/// Only the first violation of each kind is recorded.
pub fn validate(f: &RhoFunction, grid_size: usize, s_max: f64) -> Result<ValidationReport> {
    if grid_size < 16 {
        return Err(Error::InvalidInput(format!("grid_size must be at least 16, got {grid_size}")));
    }
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(Error::InvalidInput(format!("s_max must be positive and finite, got {s_max}")));
    }
    let lo = (s_max * 1e-6).ln();
    let hi = s_max.ln();
    let grid: Vec<f64> = (0..grid_size).map(|i| (lo + (hi - lo) * i as f64 / (grid_size - 1) as f64).exp()).collect();

    let mut violations: Vec<Violation> = Vec::new();
    let mut push = |condition: Condition, s: f64, detail: String| {
        if !violations.iter().any(|v| v.condition == condition) {
            violations.push(Violation { condition, s, detail });
        }
    };

    let case = f.case();
    let q = f.dim() as f64;
    if case != CaseTag::Case0 {
        let pinf = f.psi_infinity();
        if !(pinf > q) {
            push(Condition::PsiInfinityRange, f64::INFINITY, format!("psi(inf) = {pinf} must exceed q = {q}"));
        }
        if case == CaseTag::Case1Prime && !pinf.is_finite() {
            push(Condition::PsiInfinityRange, f64::INFINITY, "Case 1' requires bounded psi".into());
        }
    }

    let mut prev: Option<(f64, f64)> = None;
    for &s in &grid {
        let d1 = f.rho_prime(s)?;
        let psi = f.psi(s)?;
        if !d1.is_finite() || !psi.is_finite() {
            push(Condition::NonFinite, s, format!("rho'={d1}, psi={psi}"));
            continue;
        }
        if !(d1 > 0.0) {
            push(Condition::RhoPrimePositive, s, format!("rho'({s}) = {d1}"));
        }
        if let Some((pd1, ppsi)) = prev {
            if d1 > pd1 + 1e-12 * pd1.abs().max(1e-300) {
                push(Condition::RhoPrimeNonIncreasing, s, format!("rho' rises from {pd1} to {d1}"));
            }
            if psi < ppsi - 1e-12 * ppsi.abs().max(1e-300) {
                push(Condition::PsiNonDecreasing, s, format!("psi falls from {ppsi} to {psi}"));
            }
        }
        prev = Some((d1, psi));

        if case == CaseTag::Case1Prime {
            match f.rho_second(s) {
                Ok(d2) if d2 > 0.0 => push(Condition::RhoSecondNonPositive, s, format!("rho''({s}) = {d2}")),
                Ok(_) => {}
                Err(e) => push(Condition::RhoSecondNonPositive, s, e.to_string()),
            }
            let h = 1e-4 * s;
            let dpsi = f.psi(s + h)? - f.psi(s - h)?;
            if !(dpsi > 0.0) {
                push(Condition::PsiStrictlyIncreasing, s, format!("psi'({s}) ~ {}", dpsi / (2.0 * h)));
            }
        }

        if let RhoKind::Custom(c) = f.kind() {
            let h = 1e-5 * s;
            let fd = ((c.rho)(s + h) - (c.rho)(s - h)) / (2.0 * h);
            if (fd - d1).abs() > 1e-4 * (1.0 + d1.abs()) {
                push(Condition::DerivativeMismatch, s, format!("rho' = {d1}, finite difference {fd}"));
            }
            if let Some(d2f) = &c.rho_second {
                let d2 = d2f(s);
                let fd2 = ((c.rho_prime)(s + h) - (c.rho_prime)(s - h)) / (2.0 * h);
                if (fd2 - d2).abs() > 1e-4 * (1.0 + d2.abs()) {
                    push(Condition::DerivativeMismatch, s, format!("rho'' = {d2}, finite difference {fd2}"));
                }
            }
        }
    }
    Ok(ValidationReport { grid_size, s_max, violations })
}

/// Bounds `ψ(a) log λ ≤ ρ(λa) − ρ(a) ≤ ψ(a)(λ − 1)`.
pub fn rho_gap_bounds(f: &RhoFunction, a: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(lambda > 0.0) {
        return Err(Error::Domain(format!("a and lambda must be positive, got a={a}, lambda={lambda}")));
    }
    let psi = f.psi(a)?;
    Ok((psi * lambda.ln(), psi * (lambda - 1.0)))
}
