use mscatter::asymptotics::InfluenceReport;
use mscatter::distribution::{CheckMethod, ExistenceReport, Verdict};
use mscatter::location::AffineWitness;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Square matrix, row-major.
#[derive(Serialize)]
pub struct Square {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Square {
    pub fn from(m: &DMatrix<f64>) -> Self {
        Square { dim: m.nrows(), data: row_major(m) }
    }
}

/// Rectangular matrix, row-major.
#[derive(Serialize)]
pub struct Rect {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Rect {
    pub fn from(m: &DMatrix<f64>) -> Self {
        Rect { rows: m.nrows(), cols: m.ncols(), data: row_major(m) }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[derive(Serialize)]
pub struct WitnessOut {
    pub dim: usize,
    pub mass: f64,
    pub threshold: f64,
    /// Orthonormal basis, one column per dimension.
    pub basis: Rect,
}

#[derive(Serialize)]
pub struct FlatOut {
    pub dim: usize,
    pub mass: f64,
    pub threshold: f64,
    pub point: Vec<f64>,
    pub directions: Rect,
}

impl From<&AffineWitness> for FlatOut {
    fn from(w: &AffineWitness) -> Self {
        FlatOut {
            dim: w.dim,
            mass: w.mass,
            threshold: w.threshold,
            point: w.point.as_slice().to_vec(),
            directions: Rect::from(&w.directions),
        }
    }
}

#[derive(Serialize)]
pub struct ExistenceOut {
    pub verdict: &'static str,
    pub method: &'static str,
    pub candidates_examined: usize,
    pub max_ratio: f64,
    pub witnesses: Vec<WitnessOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flats: Option<Vec<FlatOut>>,
}

impl From<&ExistenceReport> for ExistenceOut {
    fn from(r: &ExistenceReport) -> Self {
        ExistenceOut {
            verdict: match r.verdict {
                Verdict::Satisfied => "satisfied",
                Verdict::Violated => "violated",
                Verdict::Undecided => "undecided",
            },
            method: match r.method {
                CheckMethod::ExactEnumeration => "exact_enumeration",
                CheckMethod::SufficientCondition => "sufficient_condition",
                CheckMethod::BudgetExceeded => "budget_exceeded",
            },
            candidates_examined: r.candidates_examined,
            max_ratio: r.max_ratio,
            witnesses: r
                .witnesses
                .iter()
                .map(|w| WitnessOut { dim: w.dim, mass: w.mass, threshold: w.threshold, basis: Rect::from(&w.basis) })
                .collect(),
            flats: None,
        }
    }
}

#[derive(Serialize)]
pub struct StandardErrors {
    pub sigma: Square,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Asymptotic covariance of `sqrt(n)` times the estimate, indexed by `labels`.
    pub labels: Vec<String>,
    pub acov: Square,
    pub plug_in: bool,
}

impl From<&InfluenceReport> for StandardErrors {
    fn from(r: &InfluenceReport) -> Self {
        StandardErrors {
            sigma: Square::from(r.se_sigma.as_matrix()),
            mu: r.se_mu.as_ref().map(|v| v.as_slice().to_vec()),
            labels: r.labels.clone(),
            acov: Square::from(&r.acov),
            plug_in: r.plug_in,
        }
    }
}

#[derive(Serialize)]
pub struct EstimateOut {
    pub command: &'static str,
    pub estimator: String,
    pub n: usize,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    pub status: &'static str,
    pub iterations: usize,
    pub criterion: f64,
    pub gradient_norm: f64,
    pub sigma: Square,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Square>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<StandardErrors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub existence: Option<ExistenceOut>,
}

#[derive(Serialize)]
pub struct ProCovOut {
    pub command: &'static str,
    pub groups: usize,
    pub dim: usize,
    pub status: &'static str,
    pub iterations: usize,
    pub objective: f64,
    /// Common shape with unit determinant.
    pub sigma: Square,
    pub scales: Vec<f64>,
    pub stationarity_residual: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub existence: Option<ExistenceOut>,
}

#[derive(Serialize)]
pub struct InfluenceOut {
    pub command: &'static str,
    pub estimator: String,
    pub n: usize,
    pub dim: usize,
    pub status: &'static str,
    pub labels: Vec<String>,
    /// One influence vector per observation, in input order.
    pub values: Vec<Vec<f64>>,
    pub centering_residual: f64,
    pub se: StandardErrors,
}

impl InfluenceOut {
    pub fn values(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
        v.iter().map(|x| x.as_slice().to_vec()).collect()
    }
}

#[derive(Serialize)]
pub struct CheckOut {
    pub command: &'static str,
    pub estimator: String,
    pub n: usize,
    pub dim: usize,
    pub existence: ExistenceOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<f64>,
    pub tol: f64,
    pub passed: bool,
}

/// Long-format CSV: one `parameter,estimate,se` line per entry.
pub struct ParamTable {
    rows: Vec<(String, f64, Option<f64>)>,
}

impl ParamTable {
    pub fn new() -> Self {
        ParamTable { rows: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, se: Option<f64>) {
        self.rows.push((name.into(), value, se));
    }

    pub fn vector(&mut self, name: &str, v: &[f64], se: Option<&[f64]>) {
        for (i, x) in v.iter().enumerate() {
            self.push(format!("{name}[{i}]"), *x, se.map(|s| s[i]));
        }
    }

    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>, se: Option<&DMatrix<f64>>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.push(format!("{name}[{i},{j}]"), m[(i, j)], se.map(|s| s[(i, j)]));
            }
        }
    }

    pub fn write<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "estimate", "se"])?;
        for (name, v, se) in &self.rows {
            w.write_record([name.clone(), v.to_string(), se.map(|s| s.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}
