use nalgebra::{DMatrix, SVD};

use super::DataMatrix;
use crate::error::{Error, Result};

/// Relative cutoff below which singular values count as zero.
const RANK_CUTOFF: f64 = 1e-12;

/// QR factorisation of a square matrix with a positive diagonal in `R`.
///
/// Column `i` of `Q` is multiplied by `sign(R_ii)` (and row `i` of `R`
/// likewise), which makes the factorisation unique and, for Gaussian input,
/// makes `Q` Haar distributed.
pub fn qr_orthonormalize(a: &DataMatrix) -> Result<(DataMatrix, DataMatrix)> {
    let (n, p) = a.shape();
    if n != p {
        return Err(Error::dims(format!("QR input must be square, got {n}x{p}")));
    }
    let scale = a.frobenius_norm();
    let qr = a.as_matrix().clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..p {
        let d = r[(i, i)];
        if d.is_nan() || d.abs() <= RANK_CUTOFF * scale {
            return Err(Error::DegenerateQr { index: i, value: d });
        }
        if d < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    Ok((
        DataMatrix::from_matrix_unchecked(q),
        DataMatrix::from_matrix_unchecked(r),
    ))
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &DataMatrix) -> Vec<f64> {
    let m = a.as_matrix();
    if m.ncols() == 1 || m.nrows() == 1 {
        return vec![m.norm()];
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest singular value.
pub fn operator_norm(a: &DataMatrix) -> f64 {
    let m = a.as_matrix();
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Moore–Penrose pseudo-inverse; singular values below `1e-12 · σ_max` are
/// treated as zero. The all-zero matrix maps to the all-zero `p × n` matrix.
pub fn pseudo_inverse(x: &DataMatrix) -> DataMatrix {
    let (n, p) = x.shape();
    let svd = SVD::new(x.as_matrix().clone(), true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    if sigma_max == 0.0 {
        return DataMatrix::zeros(p, n);
    }
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let cutoff = RANK_CUTOFF * sigma_max;
    let mut out = DMatrix::<f64>::zeros(p, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            // out += v_k u_k^T / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out.ger(1.0 / s, &vk, &uk, 1.0);
        }
    }
    DataMatrix::from_matrix_unchecked(out)
}
