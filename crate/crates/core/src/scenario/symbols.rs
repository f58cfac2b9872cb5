use rand::Rng;

use crate::error::Result;
use crate::matrix::{complex_gaussian, hermitian_sqrt, ComplexMatrix, C64};

use super::{DesignState, NetworkScenario};

/// Gray-mapped unit-energy QPSK symbols: bits `(b0, b1)` map to
/// `((1 - 2 b0) + i (1 - 2 b1)) / √2`.
pub fn qpsk<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let b: u8 = rng.random_range(0..4);
        let re = if b & 1 == 0 { s } else { -s };
        let im = if b & 2 == 0 { s } else { -s };
        C64::new(re, im)
    })
}

/// Sum over destinations of the average `‖G_k y_k - s̄_k‖²` over `symbols`
/// transmitted QPSK vectors with Gaussian noise, through the mean channels.
/// Destinations that cancel their own transmission subtract it exactly.
pub fn empirical_mse<R: Rng + ?Sized>(
    s: &NetworkScenario,
    d: &DesignState,
    symbols: usize,
    rng: &mut R,
) -> Result<f64> {
    s.check_state(d)?;
    let dim = s.excitation_dim();
    let mut e = ComplexMatrix::zeros(dim, symbols);
    for (i, st) in s.streams.iter().enumerate() {
        let o = s.stream_offset(i);
        let x = hermitian_sqrt(&st.cov)?.into_inner() * qpsk(st.count(), symbols, rng);
        e.view_mut((o, 0), (st.count(), symbols)).copy_from(&x);
    }
    for (i, node) in s.nodes.iter().enumerate() {
        if let Some(cov) = &node.noise {
            let o = s.noise_offset(i);
            let x = hermitian_sqrt(cov)?.into_inner() * complex_gaussian(node.rx, symbols, rng);
            e.view_mut((o, 0), (node.rx, symbols)).copy_from(&x);
        }
    }
    let t = s.transfers(d, None);
    let mut total = 0.0;
    for &k in s.destinations() {
        let mut tk = t.rx[k].clone();
        for (i, keep) in s.mask(k).into_iter().enumerate() {
            if !keep {
                let o = s.stream_offset(i);
                tk.columns_mut(o, s.streams[i].count())
                    .fill(C64::new(0.0, 0.0));
            }
        }
        let err = (&d.equalizers[k] * tk - s.desired_selector(k)) * &e;
        total += err.norm_squared() / symbols as f64;
    }
    Ok(total)
}
