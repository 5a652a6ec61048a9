use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real form of `phi^H H phi + 2 Re{u^H phi}` over `x = [Re phi; Im phi]`.
///
/// Returns `(Q, g)` with `x^T Q x + 2 g^T x` equal to the complex form. `Q` is
/// symmetric and has the eigenvalues of `H`, each twice.
pub fn complex_embed(h: &DMatrix<Complex64>, u: &DVector<Complex64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = h.nrows();
    if h.ncols() != m || u.len() != m {
        return Err(Error::InvalidProgram("complex_embed: shape mismatch".into()));
    }
    let scale = h.iter().fold(1f64, |a, c| a.max(c.norm()));
    let asym = (h - h.adjoint()).iter().fold(0f64, |a, c| a.max(c.norm()));
    if asym > 1e-12 * scale {
        return Err(Error::NotHermitian(asym));
    }
    let mut q = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let c = h[(i, j)];
            q[(i, j)] = c.re;
            q[(i + m, j + m)] = c.re;
            q[(i, j + m)] = -c.im;
            q[(i + m, j)] = c.im;
        }
    }
    let q = (&q + q.transpose()) * 0.5;
    let g = DVector::from_iterator(2 * m, u.iter().map(|c| c.re).chain(u.iter().map(|c| c.im)));
    Ok((q, g))
}
