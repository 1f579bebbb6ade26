//! Command-line front end for the scatter and location-scatter estimators.

// Negated comparisons such as `!(x > 0.0)` are used so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod input;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use input::{read_csv, read_fitted, read_groups, Table};
use mscatter::asymptotics::{acov_scatter, location_influence, InfluenceReport, SubsetCaps};
use mscatter::distribution::{build_kstat, check_existence, from_observations, Verdict};
use mscatter::location::{self, augment, check_location_existence, gamma_from};
use mscatter::solver::{fixed_point_solve, gradient, procov_stationarity, psi_map, solve_procov, SolverConfig, Status};
use mscatter::{MatrixDistribution, RhoFunction};
use report::{
    CheckOut, EstimateOut, ExistenceOut, FlatOut, InfluenceOut, ParamTable, ProCovOut, Square, StandardErrors,
};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Library(#[from] mscatter::Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

#[derive(Parser)]
#[command(name = "mscatter", version, about = "Robust scatter and location-scatter estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scatter matrix of the observations (or of their k-subset covariances).
    Scatter(ScatterArgs),
    /// Joint location and scatter under the multivariate t criterion.
    Locscatter(LocArgs),
    /// Common shape and per-group scales of Wishart scatter matrices.
    Procov(ProCovArgs),
    /// Per-observation influence values and their covariance.
    Influence(InfluenceArgs),
    /// Existence conditions, and the fixed-point residual of a fitted estimate.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Estimator {
    Tyler,
    T,
    Weibull,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct SolveOpts {
    /// Relative fixed-point tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Candidate subspaces examined by the existence check.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, value_enum, default_value_t = Output::Json)]
    output: Output,
}

impl SolveOpts {
    fn config(&self) -> Result<SolverConfig, CliError> {
        if !(self.tol > 0.0) {
            return Err(CliError::Input(format!("--tol must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(CliError::Input("--max-iter must be at least 1".into()));
        }
        Ok(SolverConfig {
            tol_fixed_point: self.tol,
            tol_gradient: 10.0 * self.tol,
            max_iter: self.max_iter,
            existence_budget: self.budget,
            ..Default::default()
        })
    }
}

#[derive(Args, Clone)]
struct LossOpts {
    /// Defaults to tyler (t for location-scatter).
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
    /// Degrees of freedom of the t criterion.
    #[arg(long)]
    nu: Option<f64>,
    /// Exponent of the Weibull criterion, in (0, 1).
    #[arg(long)]
    gamma: Option<f64>,
    /// Symmetrization order: atoms are covariances of k-subsets of rows.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Largest number of k-subsets; beyond it a seeded random subset is used.
    #[arg(long, default_value_t = 200_000)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LossOpts {
    fn rho(&self, q: usize) -> Result<RhoFunction, CliError> {
        let estimator = self.estimator.unwrap_or(Estimator::Tyler);
        let forbid = |name: &str, v: Option<f64>| match v {
            Some(_) => Err(CliError::Input(format!("--{name} does not apply to the {estimator:?} estimator"))),
            None => Ok(()),
        };
        let f = match estimator {
            Estimator::Tyler => {
                forbid("nu", self.nu)?;
                forbid("gamma", self.gamma)?;
                RhoFunction::tyler(q)?
            }
            Estimator::T => {
                forbid("gamma", self.gamma)?;
                let nu = self.nu.ok_or_else(|| CliError::Input("the t estimator needs --nu".into()))?;
                if !(nu > 0.0) {
                    return Err(CliError::Input(format!("--nu must be positive, got {nu}")));
                }
                RhoFunction::t_dist(nu, q)?
            }
            Estimator::Weibull => {
                forbid("nu", self.nu)?;
                let g = self.gamma.ok_or_else(|| CliError::Input("the weibull estimator needs --gamma".into()))?;
                if !(g > 0.0 && g < 1.0) {
                    return Err(CliError::Input(format!("--gamma must lie in (0, 1), got {g}")));
                }
                RhoFunction::weibull(g, q)?
            }
            Estimator::Gaussian => {
                forbid("nu", self.nu)?;
                forbid("gamma", self.gamma)?;
                RhoFunction::gaussian(q)?
            }
        };
        Ok(f)
    }

    fn distribution(&self, table: &Table) -> Result<MatrixDistribution, CliError> {
        let n = table.data.nrows();
        if self.k < 1 || self.k > n {
            return Err(CliError::Input(format!("--k must lie between 1 and the number of rows ({n})")));
        }
        if self.cap < 1 {
            return Err(CliError::Input("--cap must be at least 1".into()));
        }
        Ok(if self.k == 1 {
            from_observations(&table.data, None)?
        } else {
            build_kstat(&table.data, self.k, self.cap, self.seed)?
        })
    }

    fn caps(&self) -> SubsetCaps {
        SubsetCaps { outer: self.cap, ..SubsetCaps::default() }
    }
}

#[derive(Args)]
struct ScatterArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    loss: LossOpts,
    /// Report asymptotic standard errors.
    #[arg(long)]
    se: bool,
    #[command(flatten)]
    solve: SolveOpts,
}

#[derive(Args)]
struct LocArgs {
    #[arg(long)]
    input: PathBuf,
    /// Only the t criterion has a joint location-scatter form.
    #[arg(long, value_enum, default_value_t = Estimator::T)]
    estimator: Estimator,
    /// Degrees of freedom, at least 1.
    #[arg(long)]
    nu: f64,
    #[arg(long)]
    se: bool,
    #[command(flatten)]
    solve: SolveOpts,
}

#[derive(Args)]
struct ProCovArgs {
    /// JSON array of {"dof": int, "scatter": [[...]]}.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    solve: SolveOpts,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    loss: LossOpts,
    /// Influence of the joint location-scatter estimate (t criterion, needs --nu).
    #[arg(long)]
    location: bool,
    #[command(flatten)]
    solve: SolveOpts,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    loss: LossOpts,
    /// Estimate written by `scatter` or `locscatter`; a document with `mu` is
    /// checked against the joint location-scatter criterion.
    #[arg(long)]
    sigma: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveOpts,
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::Converged => 0,
        Status::MaxIter | Status::Diverged | Status::ExistenceViolated => 2,
    }
}

fn emit_json<T: Serialize>(doc: &T) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, doc).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Output(e.to_string()))
}

fn emit_table(t: &ParamTable) -> Result<(), CliError> {
    t.write(std::io::stdout().lock()).map_err(|e| CliError::Output(e.to_string()))
}

fn read_table(path: &std::path::Path) -> Result<Table, CliError> {
    let t = read_csv(path)?;
    eprintln!("read {} observations of {} variables", t.data.nrows(), t.data.ncols());
    Ok(t)
}

fn scatter(args: ScatterArgs) -> Result<u8, CliError> {
    let table = read_table(&args.input)?;
    let (n, q) = table.data.shape();
    let f = args.loss.rho(q)?;
    let dist = args.loss.distribution(&table)?;
    let est = fixed_point_solve(&dist, &f, &args.solve.config()?)?;
    let se = if args.se && est.status == Status::Converged {
        Some(acov_scatter(&table.data, &est, &f, args.loss.k, args.loss.caps(), args.loss.seed)?)
    } else {
        None
    };
    match args.solve.output {
        Output::Json => emit_json(&EstimateOut {
            command: "scatter",
            estimator: f.name(),
            n,
            dim: q,
            columns: table.names,
            status: est.status.as_str(),
            iterations: est.iterations,
            criterion: est.criterion,
            gradient_norm: est.gradient_norm,
            sigma: Square::from(est.sigma.as_matrix()),
            mu: None,
            gamma: None,
            se: se.as_ref().map(StandardErrors::from),
            existence: est.existence.as_ref().map(ExistenceOut::from),
        })?,
        Output::Csv => {
            let mut t = ParamTable::new();
            t.matrix("sigma", est.sigma.as_matrix(), se.as_ref().map(|r| r.se_sigma.as_matrix()));
            emit_table(&t)?;
        }
    }
    report_status(est.status);
    Ok(exit_code(est.status))
}

fn report_status(status: Status) {
    if status != Status::Converged {
        eprintln!("estimate not converged: {}", status.as_str());
    }
}

fn check_loc_params(estimator: Estimator, nu: f64) -> Result<(), CliError> {
    if estimator != Estimator::T {
        return Err(CliError::Input(format!("locscatter supports only the t estimator, got {estimator:?}")));
    }
    if !(nu >= 1.0) {
        return Err(CliError::Input(format!("locscatter needs --nu >= 1, got {nu}")));
    }
    Ok(())
}

fn locscatter(args: LocArgs) -> Result<u8, CliError> {
    check_loc_params(args.estimator, args.nu)?;
    let table = read_table(&args.input)?;
    let (n, q) = table.data.shape();
    let est = location::estimate(&table.data, args.nu, &args.solve.config()?)?;
    let se = if args.se && est.status == Status::Converged {
        Some(location_influence(&table.data, args.nu, &est)?)
    } else {
        None
    };
    let existence = match &est.scatter.existence {
        Some(r) => {
            let mut out = ExistenceOut::from(r);
            if r.verdict == Verdict::Violated {
                let loc = check_location_existence(&table.data, args.nu, args.solve.budget)?;
                out.flats = Some(loc.flats.iter().map(FlatOut::from).collect());
            }
            Some(out)
        }
        None => None,
    };
    match args.solve.output {
        Output::Json => emit_json(&EstimateOut {
            command: "locscatter",
            estimator: RhoFunction::t_dist(args.nu, q)?.name(),
            n,
            dim: q,
            columns: table.names,
            status: est.status.as_str(),
            iterations: est.iterations,
            criterion: est.criterion,
            gradient_norm: est.scatter.gradient_norm,
            sigma: Square::from(est.sigma.as_matrix()),
            mu: Some(est.mu.as_slice().to_vec()),
            gamma: Some(Square::from(est.gamma.as_matrix())),
            se: se.as_ref().map(StandardErrors::from),
            existence,
        })?,
        Output::Csv => {
            let mut t = ParamTable::new();
            let se_mu = se.as_ref().and_then(|r| r.se_mu.as_ref()).map(|v| v.as_slice().to_vec());
            t.vector("mu", est.mu.as_slice(), se_mu.as_deref());
            t.matrix("sigma", est.sigma.as_matrix(), se.as_ref().map(|r| r.se_sigma.as_matrix()));
            emit_table(&t)?;
        }
    }
    report_status(est.status);
    Ok(exit_code(est.status))
}

fn procov(args: ProCovArgs) -> Result<u8, CliError> {
    let groups = read_groups(&args.input)?;
    let est = solve_procov(&groups, &args.solve.config()?)?;
    let (resid, alpha) = procov_stationarity(&groups, &est)?;
    match args.solve.output {
        Output::Json => emit_json(&ProCovOut {
            command: "procov",
            groups: groups.len(),
            dim: est.sigma.dim(),
            status: est.status.as_str(),
            iterations: est.iterations,
            objective: est.objective,
            sigma: Square::from(est.sigma.as_matrix()),
            scales: est.scales.clone(),
            stationarity_residual: resid,
            alpha,
            existence: est.existence.as_ref().map(ExistenceOut::from),
        })?,
        Output::Csv => {
            let mut t = ParamTable::new();
            t.matrix("sigma", est.sigma.as_matrix(), None);
            t.vector("scale", &est.scales, None);
            emit_table(&t)?;
        }
    }
    report_status(est.status);
    Ok(exit_code(est.status))
}

fn influence(args: InfluenceArgs) -> Result<u8, CliError> {
    let table = read_table(&args.input)?;
    let (n, q) = table.data.shape();
    let cfg = args.solve.config()?;
    let (name, status, report): (String, Status, Option<InfluenceReport>) = if args.location {
        if args.loss.k != 1 {
            return Err(CliError::Input("--location does not support --k > 1".into()));
        }
        if args.loss.gamma.is_some() {
            return Err(CliError::Input("--gamma does not apply to the location-scatter estimate".into()));
        }
        let nu = args.loss.nu.ok_or_else(|| CliError::Input("--location needs --nu".into()))?;
        check_loc_params(args.loss.estimator.unwrap_or(Estimator::T), nu)?;
        let est = location::estimate(&table.data, nu, &cfg)?;
        let rep = (est.status == Status::Converged).then(|| location_influence(&table.data, nu, &est)).transpose()?;
        (RhoFunction::t_dist(nu, q)?.name(), est.status, rep)
    } else {
        let f = args.loss.rho(q)?;
        let est = fixed_point_solve(&args.loss.distribution(&table)?, &f, &cfg)?;
        let rep = (est.status == Status::Converged)
            .then(|| acov_scatter(&table.data, &est, &f, args.loss.k, args.loss.caps(), args.loss.seed))
            .transpose()?;
        (f.name(), est.status, rep)
    };
    let Some(rep) = report else {
        eprintln!("no influence values: estimate not converged ({})", status.as_str());
        return Ok(exit_code(status));
    };
    match args.solve.output {
        Output::Json => emit_json(&InfluenceOut {
            command: "influence",
            estimator: name,
            n,
            dim: q,
            status: status.as_str(),
            labels: rep.labels.clone(),
            values: InfluenceOut::values(&rep.values),
            centering_residual: rep.centering_residual(),
            se: StandardErrors::from(&rep),
        })?,
        Output::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
                w.write_record(&rep.labels)?;
                for v in &rep.values {
                    w.write_record(v.iter().map(|x| x.to_string()))?;
                }
                w.flush()?;
                Ok(())
            };
            write(&mut w).map_err(|e| CliError::Output(e.to_string()))?;
        }
    }
    Ok(0)
}

fn check(args: CheckArgs) -> Result<u8, CliError> {
    let table = read_table(&args.input)?;
    let (n, q) = table.data.shape();
    let fitted = args.sigma.as_deref().map(read_fitted).transpose()?;
    let budget = args.solve.budget;
    let tol = args.solve.config()?.tol_fixed_point;

    // A fitted location-scatter estimate is checked on the augmented problem.
    let (name, existence, target) = match fitted.as_ref().and_then(|f| f.mu.as_ref().map(|mu| (f, mu))) {
        Some((fit, mu)) => {
            let nu = args.loss.nu.ok_or_else(|| CliError::Input("checking a location estimate needs --nu".into()))?;
            check_loc_params(args.loss.estimator.unwrap_or(Estimator::T), nu)?;
            let loc = check_location_existence(&table.data, nu, budget)?;
            let mut ex = ExistenceOut::from(&loc.report);
            ex.flats = Some(loc.flats.iter().map(FlatOut::from).collect());
            let prob = augment(&table.data, nu)?;
            let gamma = gamma_from(mu, &fit.sigma)?;
            (
                RhoFunction::t_dist(nu, q)?.name(),
                (loc.report.verdict, ex),
                Some((prob.q_aug, prob.augmented_rho, gamma)),
            )
        }
        None => {
            let f = args.loss.rho(q)?;
            let dist = args.loss.distribution(&table)?;
            let rep = check_existence(&dist, &f, budget)?;
            let target = fitted.map(|fit| (dist, f.clone(), fit.sigma));
            (f.name(), (rep.verdict, ExistenceOut::from(&rep)), target)
        }
    };
    let (verdict, existence) = existence;
    let (mut resid, mut grad, mut crit) = (None, None, None);
    if let Some((dist, f, sigma)) = &target {
        let psi = psi_map(sigma, dist, f)?;
        let s = sigma.as_matrix();
        resid = Some((psi.as_matrix() - s).norm() / s.norm());
        grad = Some(gradient(sigma, dist, f)?.frobenius_norm());
        crit = Some(mscatter::solver::criterion(sigma, dist, f)?);
    }
    let passed = verdict != Verdict::Violated && resid.is_none_or(|r| r <= tol);
    let doc = CheckOut {
        command: "check",
        estimator: name,
        n,
        dim: q,
        existence,
        fixed_point_residual: resid,
        gradient_norm: grad,
        criterion: crit,
        tol,
        passed,
    };
    match args.solve.output {
        Output::Json => emit_json(&doc)?,
        Output::Csv => {
            let mut t = ParamTable::new();
            t.push("existence_violated", f64::from(u8::from(verdict == Verdict::Violated)), None);
            if let (Some(r), Some(g)) = (resid, grad) {
                t.push("fixed_point_residual", r, None);
                t.push("gradient_norm", g, None);
            }
            emit_table(&t)?;
        }
    }
    Ok(if passed { 0 } else { 2 })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MSCATTER_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|t| *t >= 1)
        .ok_or_else(|| CliError::Input(format!("MSCATTER_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Scatter(a) => scatter(a),
        Command::Locscatter(a) => locscatter(a),
        Command::Procov(a) => procov(a),
        Command::Influence(a) => influence(a),
        Command::Check(a) => check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
