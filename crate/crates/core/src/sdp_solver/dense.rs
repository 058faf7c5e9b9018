//! Small dense helpers for per-block algebra (row-major `n x n`).

use crate::linalg::{sym_eigen, sym_eigenvalues};

pub fn unpack_to(p: &[f64], n: usize, out: &mut [f64]) {
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out[i * n + j] = p[k];
            out[j * n + i] = p[k];
            k += 1;
        }
    }
}

/// Packs the upper triangle (averaging mirrored entries).
pub fn pack_to(full: &[f64], n: usize, out: &mut [f64]) {
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out[k] = 0.5 * (full[i * n + j] + full[j * n + i]);
            k += 1;
        }
    }
}

/// Lower Cholesky factor; `false` unless positive definite.
pub fn chol(a: &[f64], n: usize, l: &mut [f64]) -> bool {
    l[..n * n].iter_mut().for_each(|v| *v = 0.0);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    true
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &[f64], n: usize, out: &mut [f64]) {
    out[..n * n].iter_mut().for_each(|v| *v = 0.0);
    for j in 0..n {
        out[j * n + j] = 1.0 / l[j * n + j];
        for i in j + 1..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * n + k] * out[k * n + j];
            }
            out[i * n + j] = s / l[i * n + i];
        }
    }
}

/// `out = op(a) op(b)` with optional transposes.
pub fn mul(a: &[f64], ta: bool, b: &[f64], tb: bool, n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                let x = if ta { a[k * n + i] } else { a[i * n + k] };
                let y = if tb { b[j * n + k] } else { b[k * n + j] };
                s += x * y;
            }
            out[i * n + j] = s;
        }
    }
}

/// `out = B^T A B` for symmetric `A`.
pub fn congruence(a: &[f64], b: &[f64], n: usize, tmp: &mut [f64], out: &mut [f64]) {
    mul(a, false, b, false, n, tmp);
    mul(b, true, tmp, false, n, out);
}

/// Square root of a symmetric positive definite matrix; `false` if an
/// eigenvalue is not positive.
pub fn sqrt_spd(a: &[f64], n: usize, out: &mut [f64]) -> bool {
    let (vals, vecs) = sym_eigen(a, n);
    if vals.iter().any(|&v| !(v > 0.0)) {
        return false;
    }
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| vecs[i * n + k] * vals[k].sqrt() * vecs[j * n + k]).sum();
        }
    }
    true
}

pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    sym_eigenvalues(a, n)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_inverse_and_sqrt() {
        let a = [4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 2.0];
        let mut l = [0.0; 9];
        assert!(chol(&a, 3, &mut l));
        let mut li = [0.0; 9];
        lower_inverse(&l, 3, &mut li);
        let mut id = [0.0; 9];
        mul(&li, false, &l, false, 3, &mut id);
        for i in 0..3 {
            for j in 0..3 {
                assert!((id[i * 3 + j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let mut r = [0.0; 9];
        assert!(sqrt_spd(&a, 3, &mut r));
        let mut sq = [0.0; 9];
        mul(&r, false, &r, false, 3, &mut sq);
        for k in 0..9 {
            assert!((sq[k] - a[k]).abs() < 1e-12);
        }
        assert!(!chol(&[1.0, 2.0, 2.0, 1.0], 2, &mut l));
    }
}
