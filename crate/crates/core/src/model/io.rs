//! JSON problem files.
//!
//! ```json
//! { "n": 2, "r": 1, "kind": "T2",
//!   "objective":   { "A": [[[1,0],[0,0]],[[0,0],[1,0]]], "B": [[[-1,0]],[[0,0]]], "D": [[[1,0]]], "c": 0 },
//!   "inequalities": [ ... ], "equalities": [ ... ] }
//! ```
//!
//! Matrices are arrays of rows; each entry is a `[re, im]` pair. `D` may be
//! omitted for type-2 problems (identity).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, HermitianMatrix, C64};

use super::{QMFunction, QMPProblem, QmpKind};

pub(crate) type MatrixRows = Vec<Vec<[f64; 2]>>;

pub(crate) fn to_rows(m: &ComplexMatrix) -> MatrixRows {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub(crate) fn from_rows(
    rows: &MatrixRows,
    rows_hint: usize,
    cols_hint: usize,
) -> Result<ComplexMatrix> {
    if rows.is_empty() {
        return Ok(ComplexMatrix::zeros(rows_hint, cols_hint));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(ComplexMatrix::from_fn(rows.len(), cols, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

#[derive(Debug, Serialize, Deserialize)]
struct FunctionFile {
    #[serde(rename = "A")]
    a: MatrixRows,
    #[serde(rename = "B", default)]
    b: MatrixRows,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<MatrixRows>,
    #[serde(default)]
    c: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    n: usize,
    r: usize,
    kind: QmpKind,
    objective: FunctionFile,
    #[serde(default)]
    inequalities: Vec<FunctionFile>,
    #[serde(default)]
    equalities: Vec<FunctionFile>,
}

fn decode(f: &FunctionFile, n: usize, r: usize) -> Result<QMFunction> {
    let a = HermitianMatrix::new(from_rows(&f.a, n, n)?)?;
    let b = from_rows(&f.b, n, r)?;
    let d = match &f.d {
        Some(rows) => HermitianMatrix::new(from_rows(rows, r, r)?)?,
        None => HermitianMatrix::identity(r),
    };
    if a.dim() != n || d.dim() != r {
        return Err(Error::ShapeMismatch(format!(
            "function is {}x{}, file declares {n}x{r}",
            a.dim(),
            d.dim()
        )));
    }
    QMFunction::new(a, b, d, f.c)
}

fn encode(f: &QMFunction, kind: QmpKind) -> FunctionFile {
    FunctionFile {
        a: to_rows(f.a.matrix()),
        b: to_rows(&f.b),
        d: (kind == QmpKind::T1).then(|| to_rows(f.d.matrix())),
        c: f.c,
    }
}

pub fn problem_from_json(text: &str) -> Result<QMPProblem> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let (n, r) = (file.n, file.r);
    let objective = decode(&file.objective, n, r)?;
    let ineq = file
        .inequalities
        .iter()
        .map(|f| decode(f, n, r))
        .collect::<Result<Vec<_>>>()?;
    let eq = file
        .equalities
        .iter()
        .map(|f| decode(f, n, r))
        .collect::<Result<Vec<_>>>()?;
    QMPProblem::new(file.kind, objective, ineq, eq)
}

pub fn problem_to_json(p: &QMPProblem) -> Result<String> {
    let file = ProblemFile {
        n: p.n,
        r: p.r,
        kind: p.kind,
        objective: encode(&p.objective, p.kind),
        inequalities: p.inequalities.iter().map(|f| encode(f, p.kind)).collect(),
        equalities: p.equalities.iter().map(|f| encode(f, p.kind)).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn read_problem(path: impl AsRef<Path>) -> Result<QMPProblem> {
    problem_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_problem(p: &QMPProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, problem_to_json(p)?)?;
    Ok(())
}
