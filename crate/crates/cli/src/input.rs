use crate::CliError;
use mscatter::distribution::WishartGroup;
use mscatter::{PsdAtom, SpdMatrix, SymMatrix};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Table {
    pub data: DMatrix<f64>,
    pub names: Option<Vec<String>>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Rows are observations, columns variables. A first row with any
/// non-numeric cell is taken as the header.
pub fn read_csv(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Table, CliError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Input(format!("malformed CSV: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push(rec);
    }
    let Some(first) = records.first() else {
        return Err(CliError::Input("CSV input has no rows".into()));
    };
    let names = if first.iter().any(|c| parse_cell(c).is_none()) {
        Some(first.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let skip = usize::from(names.is_some());
    let q = first.len();
    let n = records.len() - skip;
    if n == 0 {
        return Err(CliError::Input("CSV input has a header but no observations".into()));
    }
    let mut data = DMatrix::zeros(n, q);
    for (i, rec) in records.iter().enumerate().skip(skip) {
        // Row numbers in messages count from 1 and include the header line.
        let line = i + 1;
        if rec.len() != q {
            return Err(CliError::Input(format!("ragged CSV: row {line} has {} fields, expected {q}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            data[(i - skip, j)] = parse_cell(cell)
                .ok_or_else(|| CliError::Input(format!("non-numeric cell {cell:?} at row {line}, column {}", j + 1)))?;
        }
    }
    Ok(Table { data, names })
}

#[derive(Deserialize)]
struct GroupSpec {
    dof: i64,
    scatter: Vec<Vec<f64>>,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let q = rows.len();
    if q == 0 || rows.iter().any(|r| r.len() != q) {
        return Err(CliError::Input(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(q, q, |i, j| rows[i][j]))
}

pub fn read_groups(path: &Path) -> Result<Vec<WishartGroup>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_groups(&text)
}

pub fn parse_groups(text: &str) -> Result<Vec<WishartGroup>, CliError> {
    let specs: Vec<GroupSpec> =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("malformed groups JSON: {e}")))?;
    if specs.is_empty() {
        return Err(CliError::Input("groups JSON is empty".into()));
    }
    let mut groups = Vec::with_capacity(specs.len());
    let mut dim = None;
    for (i, g) in specs.iter().enumerate() {
        if g.dof < 1 {
            return Err(CliError::Input(format!("group {i}: dof must be at least 1, got {}", g.dof)));
        }
        let m = square(&g.scatter, &format!("group {i} scatter"))?;
        if *dim.get_or_insert(m.nrows()) != m.nrows() {
            return Err(CliError::Input(format!("group {i}: dimension {} differs from group 0", m.nrows())));
        }
        let sym = SymMatrix::new(m).map_err(|e| CliError::Input(format!("group {i}: {e}")))?;
        let atom = PsdAtom::with_tolerance(sym, 1e-8).map_err(|e| CliError::Input(format!("group {i}: {e}")))?;
        groups.push(WishartGroup::new(atom, g.dof as usize).map_err(|e| CliError::Input(format!("group {i}: {e}")))?);
    }
    Ok(groups)
}

/// Parameters read back from a document written by `scatter` or `locscatter`.
pub struct Fitted {
    pub sigma: SpdMatrix,
    pub mu: Option<DVector<f64>>,
}

#[derive(Deserialize)]
struct MatrixDoc {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct FittedDoc {
    sigma: MatrixDoc,
    mu: Option<Vec<f64>>,
}

pub fn read_fitted(path: &Path) -> Result<Fitted, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let doc: FittedDoc =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("malformed estimate JSON: {e}")))?;
    let q = doc.sigma.dim;
    if q == 0 || doc.sigma.data.len() != q * q {
        return Err(CliError::Input(format!("sigma has {} entries, expected {}", doc.sigma.data.len(), q * q)));
    }
    let sigma = SpdMatrix::from_matrix(DMatrix::from_row_slice(q, q, &doc.sigma.data))
        .map_err(|e| CliError::Input(format!("sigma: {e}")))?;
    let mu = match doc.mu {
        Some(m) if m.len() != q => return Err(CliError::Input(format!("mu has {} entries, expected {q}", m.len()))),
        m => m.map(DVector::from_vec),
    };
    Ok(Fitted { sigma, mu })
}
