//! Weighted distributions `Q` over positive semidefinite matrices.
//!
//! Builders cover raw observations (`x xᵀ`), symmetrized sample covariances of
//! k-subsets, and Wishart groups. [`check_existence`] decides whether the
//! scatter criterion has a unique minimizer on a finite `Q`.

use crate::error::{check_dim, Error, Result};
use crate::rho::{CaseTag, RhoFunction};
use crate::samplers::SeededStream;
use crate::symmat::{orthonormal_basis, PsdAtom, SymMatrix};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::{HashSet, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Observations { n: usize },
    KStat { n: usize, k: usize },
    Wishart { m_plus: usize },
    Custom,
}

#[derive(Clone, Debug)]
pub struct MatrixDistribution {
    dim: usize,
    atoms: Vec<PsdAtom>,
    weights: Vec<f64>,
    provenance: Provenance,
}

impl MatrixDistribution {
    /// Weights must be positive; they are renormalized to sum to one.
    pub fn new(atoms: Vec<PsdAtom>, weights: Vec<f64>) -> Result<Self> {
        Self::with_provenance(atoms, weights, Provenance::Custom)
    }

    pub fn dirac(atom: PsdAtom) -> Self {
        let dim = atom.dim();
        MatrixDistribution { dim, atoms: vec![atom], weights: vec![1.0], provenance: Provenance::Custom }
    }

    fn with_provenance(atoms: Vec<PsdAtom>, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("distribution needs at least one atom".into()));
        }
        check_dim(atoms.len(), weights.len())?;
        let dim = atoms[0].dim();
        for a in &atoms {
            check_dim(dim, a.dim())?;
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = if (total - 1.0).abs() <= 1e-15 { weights } else { weights.iter().map(|w| w / total).collect() };
        Ok(MatrixDistribution { dim, atoms, weights, provenance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[PsdAtom] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PsdAtom, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    /// No atom is the zero matrix, as Tyler's criterion requires.
    pub fn case0_ready(&self) -> bool {
        !self.atoms.iter().any(|a| a.is_zero())
    }

    /// Total weight on the zero matrix.
    pub fn zero_mass(&self) -> f64 {
        self.iter().filter(|(a, _)| a.is_zero()).map(|(_, w)| w).sum()
    }

    /// `Σ w M`.
    pub fn mean(&self) -> SymMatrix {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for (a, w) in self.iter() {
            acc += a.base().as_matrix() * w;
        }
        SymMatrix::symmetrized(acc)
    }
}

fn check_data(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("data matrix is empty".into()));
    }
    if let Some(i) = (0..x.nrows()).find(|&i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput(format!("row {i} has non-finite entries")));
    }
    Ok(())
}

/// Rank-one atoms `x_i x_iᵀ` (after subtracting `center`), weights `1/n`.
pub fn from_observations(x: &DMatrix<f64>, center: Option<&DVector<f64>>) -> Result<MatrixDistribution> {
    check_data(x)?;
    let (n, q) = x.shape();
    if let Some(c) = center {
        check_dim(q, c.len())?;
    }
    let atoms = (0..n)
        .map(|i| {
            let mut row = x.row(i).transpose();
            if let Some(c) = center {
                row -= c;
            }
            PsdAtom::outer(&row)
        })
        .collect::<Result<Vec<_>>>()?;
    MatrixDistribution::with_provenance(atoms, vec![1.0 / n as f64; n], Provenance::Observations { n })
}

/// Sample covariance `(k−1)⁻¹ Σ (x_i − x̄)(x_i − x̄)ᵀ` of the rows of `points`.
pub fn sample_covariance(points: &DMatrix<f64>) -> Result<PsdAtom> {
    let (k, q) = points.shape();
    if k < 2 {
        return Err(Error::InvalidInput(format!("sample covariance needs at least 2 points, got {k}")));
    }
    if k == 2 {
        let d = (points.row(0) - points.row(1)).transpose() / 2f64.sqrt();
        return PsdAtom::outer(&d);
    }
    // Differences to the first point first, so that coincident points give an exact zero.
    let mut d = DMatrix::zeros(q, k);
    for i in 1..k {
        d.set_column(i, &(points.row(i) - points.row(0)).transpose());
    }
    let mean = d.column_sum() / k as f64;
    let scale = 1.0 / ((k - 1) as f64).sqrt();
    let mut f = DMatrix::zeros(q, k);
    for i in 0..k {
        f.set_column(i, &((d.column(i) - &mean) * scale));
    }
    PsdAtom::from_factor(f)
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Index sets used by [`build_kstat`]: all k-subsets in lexicographic order
/// when `C(n,k) ≤ cap`, otherwise `cap` distinct subsets drawn uniformly with
/// the given seed.
pub fn kstat_subsets(n: usize, k: usize, cap: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    index_subsets(n, k, cap, seed)
}

/// As [`kstat_subsets`] but for any `1 ≤ k ≤ n`.
pub(crate) fn index_subsets(n: usize, k: usize, cap: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if cap < 1 {
        return Err(Error::InvalidInput("cap must be at least 1".into()));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if binomial(n, k) <= cap as u64 {
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                if idx[i] < n - k + i {
                    break;
                }
            }
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    let mut stream = SeededStream::new(seed);
    let mut seen = HashSet::with_capacity(cap);
    let mut out = Vec::with_capacity(cap);
    while out.len() < cap {
        let mut s = rand::seq::index::sample(&mut stream, n, k).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Symmetrized distribution of sample covariances of k-subsets of the rows.
pub fn build_kstat(x: &DMatrix<f64>, k: usize, cap: usize, seed: u64) -> Result<MatrixDistribution> {
    check_data(x)?;
    let n = x.nrows();
    let subsets = kstat_subsets(n, k, cap, seed)?;
    let atoms = subsets.par_iter().map(|s| sample_covariance(&x.select_rows(s.iter()))).collect::<Result<Vec<_>>>()?;
    let m = atoms.len();
    MatrixDistribution::with_provenance(atoms, vec![1.0 / m as f64; m], Provenance::KStat { n, k })
}

/// A scatter matrix `S_i` with its degrees of freedom `m_i`.
#[derive(Clone, Debug)]
pub struct WishartGroup {
    pub scatter: PsdAtom,
    pub dof: usize,
}

impl WishartGroup {
    pub fn new(scatter: PsdAtom, dof: usize) -> Result<Self> {
        if dof < 1 {
            return Err(Error::InvalidInput("degrees of freedom must be at least 1".into()));
        }
        Ok(WishartGroup { scatter, dof })
    }
}

/// Atoms `S_i` with weights `m_i / m₊`.
pub fn from_wishart_groups(groups: &[WishartGroup]) -> Result<MatrixDistribution> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("need at least one group".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.dof < 1) {
        return Err(Error::InvalidInput(format!("degrees of freedom must be at least 1, got {}", g.dof)));
    }
    let m_plus: usize = groups.iter().map(|g| g.dof).sum();
    let atoms = groups.iter().map(|g| g.scatter.clone()).collect();
    let weights = groups.iter().map(|g| g.dof as f64 / m_plus as f64).collect();
    MatrixDistribution::with_provenance(atoms, weights, Provenance::Wishart { m_plus })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `M ↦ B M Bᵀ`.
    Forward,
    /// `M ↦ B⁻¹ M B⁻ᵀ`.
    Inverse,
}

/// Errors unless the smallest singular value exceeds `1e-12` times the largest.
pub fn check_nonsingular(b: &DMatrix<f64>) -> Result<()> {
    if !b.is_square() || b.nrows() == 0 {
        return Err(Error::InvalidInput("transform must be a non-empty square matrix".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("transform has non-finite entries".into()));
    }
    let sv = b.singular_values();
    let smax = sv.max();
    if !(sv.min() > 1e-12 * smax) {
        return Err(Error::Singular);
    }
    Ok(())
}

pub fn transform(q: &MatrixDistribution, b: &DMatrix<f64>, direction: Direction) -> Result<MatrixDistribution> {
    check_nonsingular(b)?;
    check_dim(q.dim, b.nrows())?;
    let map = match direction {
        Direction::Forward => b.clone(),
        Direction::Inverse => b.clone().try_inverse().ok_or(Error::Singular)?,
    };
    let atoms = q.atoms.par_iter().map(|a| a.congruence(&map)).collect::<Result<Vec<_>>>()?;
    Ok(MatrixDistribution { dim: q.dim, atoms, weights: q.weights.clone(), provenance: q.provenance })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Undecided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMethod {
    ExactEnumeration,
    SufficientCondition,
    BudgetExceeded,
}

/// A proper subspace carrying at least its allowed mass.
#[derive(Clone, Debug)]
pub struct Witness {
    /// Orthonormal basis, one column per dimension (`q×0` for the zero subspace).
    pub basis: DMatrix<f64>,
    pub dim: usize,
    pub mass: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct ExistenceReport {
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub method: CheckMethod,
    pub candidates_examined: usize,
    /// Largest `mass / threshold` over the examined subspaces.
    pub max_ratio: f64,
}

/// Largest mass a subspace of dimension `d` may carry.
pub fn existence_threshold(f: &RhoFunction, d: usize) -> f64 {
    let q = f.dim() as f64;
    let d = d as f64;
    match f.case() {
        CaseTag::Case0 => d / q,
        _ => {
            let pinf = f.psi_infinity();
            if pinf.is_infinite() {
                1.0
            } else {
                (pinf - q + d) / pinf
            }
        }
    }
}

const MASS_SLACK: f64 = 1e-12;

fn violates(mass: f64, threshold: f64) -> bool {
    mass >= threshold * (1.0 - MASS_SLACK)
}

/// Tests the uniqueness conditions on every subspace spanned by unions of atom
/// column spaces, up to `budget` candidate subspaces.
pub fn check_existence(q: &MatrixDistribution, f: &RhoFunction, budget: usize) -> Result<ExistenceReport> {
    check_dim(f.dim(), q.dim())?;
    let dim = q.dim();
    let zero_mass = q.zero_mass();
    let mut witnesses = Vec::new();
    let mut max_ratio: f64 = 0.0;

    if f.is_case0() {
        if zero_mass > 0.0 {
            witnesses.push(Witness { basis: DMatrix::zeros(dim, 0), dim: 0, mass: zero_mass, threshold: 0.0 });
            return Ok(ExistenceReport {
                verdict: Verdict::Violated,
                witnesses,
                method: CheckMethod::ExactEnumeration,
                candidates_examined: 0,
                max_ratio: f64::INFINITY,
            });
        }
    } else {
        let t0 = existence_threshold(f, 0);
        max_ratio = zero_mass / t0;
        if violates(zero_mass, t0) {
            witnesses.push(Witness { basis: DMatrix::zeros(dim, 0), dim: 0, mass: zero_mass, threshold: t0 });
        }
    }

    let nonzero: Vec<usize> = (0..q.len()).filter(|&i| !q.atoms[i].is_zero()).collect();
    let bases: Vec<DMatrix<f64>> = q.atoms.par_iter().map(|a| a.column_basis()).collect();

    let lines = LineIndex::new(&nonzero, &bases, &q.atoms);

    // Candidates are generated lazily: a queue entry is a cursor into
    // `nonzero` for one parent subspace (`None`: atoms' own column spaces).
    // Popping yields the next atom to join and puts the advanced cursor back
    // in front, so children of one parent stay together in breadth-first order.
    let mut queue: VecDeque<(Option<usize>, usize)> = VecDeque::from([(None, 0)]);
    let mut covered = vec![false; q.len()];
    let mut examined_bases: Vec<DMatrix<f64>> = Vec::new();
    let mut examined_sets: Vec<Vec<usize>> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut exhausted = true;
    while let Some((parent, cursor)) = queue.pop_front() {
        let eligible = |i: usize| match parent {
            None => bases[i].ncols() < dim && !covered[i],
            Some(p) => examined_sets[p].binary_search(&i).is_err(),
        };
        let Some(pos) = (cursor..nonzero.len()).find(|&c| eligible(nonzero[c])) else {
            continue;
        };
        if examined_bases.len() >= budget {
            exhausted = false;
            break;
        }
        queue.push_front((parent, pos + 1));
        let j = nonzero[pos];
        let v = match parent {
            None => bases[j].clone(),
            Some(p) => {
                let pv = &examined_bases[p];
                let d = pv.ncols();
                let mut joined = DMatrix::zeros(dim, d + bases[j].ncols());
                joined.columns_mut(0, d).copy_from(pv);
                joined.columns_mut(d, bases[j].ncols()).copy_from(&bases[j]);
                let w = orthonormal_basis(&joined);
                if w.ncols() >= dim {
                    continue;
                }
                w
            }
        };
        let d = v.ncols();
        let inside_v = |&i: &usize| q.atoms[i].lies_in(&v);
        let contained: Vec<usize> = if d == 1 {
            lines.contained(&v, &q.atoms)
        } else if nonzero.len() > 4096 {
            nonzero.par_iter().copied().filter(inside_v).collect()
        } else {
            nonzero.iter().copied().filter(inside_v).collect()
        };
        if parent.is_none() {
            // Atoms spanning exactly this subspace would generate it again.
            for &i in &contained {
                if bases[i].ncols() == d {
                    covered[i] = true;
                }
            }
        }
        if !seen.insert(contained.clone()) {
            continue;
        }
        let mass = zero_mass + contained.iter().map(|&i| q.weights[i]).sum::<f64>();
        let threshold = existence_threshold(f, d);
        max_ratio = max_ratio.max(mass / threshold);
        if violates(mass, threshold) {
            witnesses.push(Witness { basis: v.clone(), dim: d, mass, threshold });
        }
        let idx = examined_bases.len();
        examined_bases.push(v);
        examined_sets.push(contained);
        if d + 2 <= dim {
            queue.push_back((Some(idx), 0));
        }
    }
    let examined = examined_bases.len();

    let (verdict, method) = if !witnesses.is_empty() {
        (Verdict::Violated, if exhausted { CheckMethod::ExactEnumeration } else { CheckMethod::BudgetExceeded })
    } else if exhausted {
        (Verdict::Satisfied, CheckMethod::ExactEnumeration)
    } else if sufficient_condition(q, f) {
        (Verdict::Satisfied, CheckMethod::SufficientCondition)
    } else {
        (Verdict::Undecided, CheckMethod::BudgetExceeded)
    };
    Ok(ExistenceReport { verdict, witnesses, method, candidates_examined: examined, max_ratio })
}

/// Rank-one atoms sorted by the first coordinate of their canonical unit
/// direction, so that the atoms on a given line are found by a window search.
struct LineIndex {
    keys: Vec<(f64, usize)>,
}

impl LineIndex {
    /// Atoms on a line have directions within about `1e-7` of each other
    /// (see [`PsdAtom::lies_in`]); the window is wider than that.
    const WINDOW: f64 = 1e-6;

    fn canonical(u: DVector<f64>) -> DVector<f64> {
        let lead = u.iamax();
        if u[lead] < 0.0 {
            -u
        } else {
            u
        }
    }

    /// Every nonzero atom is keyed by its dominant direction: an atom that
    /// lies on a line is within the window of it even if its numerical rank
    /// exceeds one.
    fn new(nonzero: &[usize], bases: &[DMatrix<f64>], atoms: &[PsdAtom]) -> Self {
        let dominant = |i: usize| {
            let b = &bases[i];
            let energy = |c: usize| (atoms[i].factor().transpose() * b.column(c)).norm_squared();
            let best = (0..b.ncols()).max_by(|&x, &y| energy(x).total_cmp(&energy(y))).expect("nonzero atom");
            Self::canonical(b.column(best).into_owned())[0]
        };
        let mut keys: Vec<(f64, usize)> = nonzero.iter().map(|&i| (dominant(i), i)).collect();
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        LineIndex { keys }
    }

    fn contained(&self, v: &DMatrix<f64>, atoms: &[PsdAtom]) -> Vec<usize> {
        let k = Self::canonical(v.column(0).normalize())[0];
        let lo = self.keys.partition_point(|e| e.0 < k - Self::WINDOW);
        let hi = self.keys.partition_point(|e| e.0 <= k + Self::WINDOW);
        let mut out: Vec<usize> = self.keys[lo..hi].iter().map(|e| e.1).filter(|&i| atoms[i].lies_in(v)).collect();
        out.sort_unstable();
        out
    }
}

/// Sample-size conditions that guarantee existence almost surely for data from
/// a continuous law.
fn sufficient_condition(q: &MatrixDistribution, f: &RhoFunction) -> bool {
    let d = q.dim();
    match q.provenance() {
        Provenance::Observations { n } => {
            if f.is_case0() {
                n > d
            } else {
                n >= d
            }
        }
        Provenance::KStat { n, .. } => n > d,
        Provenance::Wishart { m_plus } => m_plus > d,
        Provenance::Custom => false,
    }
}
