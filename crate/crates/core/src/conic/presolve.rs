use super::{BlockMatrix, ConicProgram};

/// Rows whose Gram-Schmidt residual falls below this fraction of their norm
/// are dropped as dependent.
const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Presolved {
    pub program: ConicProgram,
    /// For every row of `program`, its index in the original row list, where
    /// fixed entries are numbered after the explicit constraints.
    pub origin: Vec<usize>,
}

/// Converts fixed entries to equality rows and drops numerically dependent
/// rows (modified Gram-Schmidt on the flattened constraint matrices).
///
/// A dependent row whose right-hand side is inconsistent with the rows it
/// depends on is kept so that the solver reports the infeasibility.
pub fn presolve(prog: &ConicProgram) -> Presolved {
    let mut rows: Vec<(BlockMatrix, f64)> = prog
        .constraints
        .iter()
        .map(|c| (c.a.clone(), c.b))
        .collect();
    for e in &prog.fixed {
        let mut a = BlockMatrix::zeros(&prog.blocks);
        let blk = a.block_mut(e.block);
        if e.row == e.col {
            blk[(e.row, e.col)] = 1.0;
        } else {
            blk[(e.row, e.col)] = 0.5;
            blk[(e.col, e.row)] = 0.5;
        }
        rows.push((a, e.value));
    }

    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut out = ConicProgram::new(prog.blocks.clone());
    out.c = prog.c.clone();
    let mut origin = Vec::new();
    for (idx, (a, b)) in rows.into_iter().enumerate() {
        let mut v = a.flatten();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            if b.abs() > 1e-12 {
                out.add_constraint(a, b);
                origin.push(idx);
            }
            continue;
        }
        let mut rhs = b;
        for (q, qb) in &basis {
            let proj: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(q) {
                *x -= proj * y;
            }
            rhs -= proj * qb;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= PIVOT_THRESHOLD * norm0 {
            if rhs.abs() > 1e-9 * (1.0 + b.abs()) {
                out.add_constraint(a, b);
                origin.push(idx);
            }
            continue;
        }
        for x in &mut v {
            *x /= norm;
        }
        basis.push((v, rhs / norm));
        out.add_constraint(a, b);
        origin.push(idx);
    }
    Presolved {
        program: out,
        origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_rows_collapse() {
        let mut p = ConicProgram::new(vec![2]);
        let mut a = BlockMatrix::zeros(&[2]);
        a.block_mut(0)[(0, 0)] = 1.0;
        p.add_constraint(a.clone(), 1.0);
        p.add_constraint(a.clone(), 1.0);
        p.add_constraint(a.scale(2.0), 2.0);
        let out = presolve(&p);
        assert_eq!(out.program.constraints.len(), 1);
        assert_eq!(out.origin, vec![0]);
    }

    #[test]
    fn pinned_corner_becomes_equality() {
        let mut p = ConicProgram::new(vec![3]);
        p.fix_entry(0, 2, 2, 1.0);
        let out = presolve(&p);
        assert_eq!(out.program.constraints.len(), 1);
        let row = &out.program.constraints[0];
        assert_eq!(row.b, 1.0);
        assert_eq!(row.a.block(0)[(2, 2)], 1.0);
        assert_eq!(row.a.norm(), 1.0);
    }

    #[test]
    fn off_diagonal_pin_is_symmetric() {
        let mut p = ConicProgram::new(vec![2]);
        p.fix_entry(0, 0, 1, 0.25);
        let out = presolve(&p);
        let a = out.program.constraints[0].a.block(0);
        assert_eq!(a[(0, 1)], 0.5);
        assert_eq!(a[(1, 0)], 0.5);
    }

    #[test]
    fn inconsistent_dependent_row_is_kept() {
        let mut p = ConicProgram::new(vec![1]);
        let mut a = BlockMatrix::zeros(&[1]);
        a.block_mut(0)[(0, 0)] = 1.0;
        p.add_constraint(a.clone(), 1.0);
        p.add_constraint(a, 2.0);
        assert_eq!(presolve(&p).program.constraints.len(), 2);
    }
}
