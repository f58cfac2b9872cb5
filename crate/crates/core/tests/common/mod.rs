//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qmpx::conic::{BlockMatrix, ConicProgram, LmiBlock, LmiProgram, SolveStatus, SolverOptions};
use qmpx::matrix::RealMatrix;

/// `min c^T x  s.t.  A x = b, x ≥ 0` with every variable a 1×1 block.
pub fn lp_program(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> ConicProgram {
    let nv = a.ncols();
    let mut p = ConicProgram::new(vec![1; nv]);
    for (j, &cj) in c.iter().enumerate() {
        p.c.block_mut(j)[(0, 0)] = cj;
    }
    for i in 0..a.nrows() {
        let mut row = BlockMatrix::zeros(&vec![1; nv]);
        for j in 0..nv {
            row.block_mut(j)[(0, 0)] = a[(i, j)];
        }
        p.add_constraint(row, b[i]);
    }
    p
}

/// Minimum of `c^T x` over the basic feasible solutions.
pub fn vertex_enumeration(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> f64 {
    let (m, n) = a.shape();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let basis = DMatrix::from_fn(m, m, |i, j| a[(i, idx[j])]);
        if let Some(xb) = basis.lu().solve(&DVector::from_row_slice(b)) {
            if xb.iter().all(|&v| v >= -1e-12) {
                let val: f64 = idx.iter().zip(xb.iter()).map(|(&j, v)| c[j] * v).sum();
                best = best.min(val);
            }
        }
        // next m-combination of 0..n
        let mut k = m;
        while k > 0 && idx[k - 1] == n - m + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        idx[k - 1] += 1;
        for t in k..m {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// `min t  s.t.  X ⪰ 0, ‖X - M‖_F ≤ t` over symmetric `X`, as an LMI program.
pub fn projection_value(m: &RealMatrix) -> (f64, RealMatrix) {
    let n = m.nrows();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let nv = pairs.len() + 1;
    let t = pairs.len();
    let mut cost = vec![0.0; nv];
    cost[t] = 1.0;
    let mut prog = LmiProgram::new(nv, cost);

    let mut psd = LmiBlock::new(RealMatrix::zeros(n, n));
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let mut e = RealMatrix::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        psd = psd.with(k, e);
    }
    prog.push(psd);

    // u_k = w_k (x_k - M_k), w = 1 on the diagonal and √2 off it
    let q = pairs.len();
    let mut f0 = RealMatrix::zeros(q + 1, q + 1);
    let mut arrow_coeffs = Vec::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let w = if i == j { 1.0 } else { 2f64.sqrt() };
        f0[(k, q)] = -w * m[(i, j)];
        f0[(q, k)] = -w * m[(i, j)];
        let mut fk = RealMatrix::zeros(q + 1, q + 1);
        fk[(k, q)] = w;
        fk[(q, k)] = w;
        arrow_coeffs.push((k, fk));
    }
    let mut arrow = LmiBlock::new(f0).with(t, RealMatrix::identity(q + 1, q + 1));
    arrow.coeffs.extend(arrow_coeffs);
    prog.push(arrow);

    let sol = prog.solve(&SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let mut x = RealMatrix::zeros(n, n);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        x[(i, j)] = sol.y[k];
        x[(j, i)] = sol.y[k];
    }
    (sol.value, x)
}

/// Distance from `m` to the PSD cone and the projection, by clipping the
/// negative eigenvalues.
pub fn clipped_projection(m: &RealMatrix) -> (f64, RealMatrix) {
    let eig = m.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let proj =
        &eig.eigenvectors * RealMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let dist = eig
        .eigenvalues
        .iter()
        .filter(|&&v| v < 0.0)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    (dist, proj)
}
