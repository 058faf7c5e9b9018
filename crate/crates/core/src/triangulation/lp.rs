//! Dense two-phase simplex method for tiny equality-form LPs
//! `max c^T x  s.t.  A x = b, x >= 0`, used by the face-to-face check.

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpOutcome {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// `a` is row-major `rows x cols`.
pub fn maximize(c: &[f64], a: &[f64], b: &[f64]) -> LpOutcome {
    let rows = b.len();
    let cols = c.len();
    debug_assert_eq!(a.len(), rows * cols);
    // tableau columns: original vars, artificials, rhs
    let width = cols + rows + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    for r in 0..rows {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            t[r * width + j] = sign * a[r * cols + j];
        }
        t[r * width + cols + r] = 1.0;
        t[r * width + width - 1] = sign * b[r];
    }
    // phase 1: minimize the sum of artificials, i.e. maximize its negative
    let obj = rows * width;
    for j in 0..width {
        let mut s = 0.0;
        for r in 0..rows {
            if j < cols || j == width - 1 {
                s += t[r * width + j];
            }
        }
        // reduced cost row stores -(objective coefficients) convention
        t[obj + j] = -s;
    }
    for r in 0..rows {
        t[obj + cols + r] = 0.0;
    }
    if !pivot_loop(&mut t, &mut basis, rows, width, cols + rows) {
        return LpOutcome::Unbounded;
    }
    if -t[obj + width - 1] > 1e-9 {
        return LpOutcome::Infeasible;
    }
    // drive remaining artificials out of the basis where possible
    for r in 0..rows {
        if basis[r] >= cols {
            if let Some(j) = (0..cols).find(|&j| t[r * width + j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, rows, width, r, j);
            }
        }
    }
    // phase 2 objective row: -c plus basis correction
    for j in 0..width {
        t[obj + j] = if j < cols { -c[j] } else { 0.0 };
    }
    for r in 0..rows {
        let bj = basis[r];
        if bj < cols && c[bj] != 0.0 {
            let f = t[obj + bj];
            for j in 0..width {
                t[obj + j] -= f * t[r * width + j];
            }
        }
    }
    // artificials are barred from re-entering
    if !pivot_loop(&mut t, &mut basis, rows, width, cols) {
        return LpOutcome::Unbounded;
    }
    LpOutcome::Optimal(t[obj + width - 1])
}

fn pivot(t: &mut [f64], basis: &mut [usize], rows: usize, width: usize, pr: usize, pc: usize) {
    let p = t[pr * width + pc];
    for j in 0..width {
        t[pr * width + j] /= p;
    }
    for r in 0..=rows {
        if r == pr {
            continue;
        }
        let f = t[r * width + pc];
        if f != 0.0 {
            for j in 0..width {
                t[r * width + j] -= f * t[pr * width + j];
            }
        }
    }
    basis[pr] = pc;
}

/// Bland's rule iterations; entering columns restricted to `< allowed`.
/// Returns false on unboundedness.
fn pivot_loop(t: &mut [f64], basis: &mut [usize], rows: usize, width: usize, allowed: usize) -> bool {
    let obj = rows * width;
    for _ in 0..10_000 {
        let Some(pc) = (0..allowed).find(|&j| t[obj + j] < -EPS) else {
            return true;
        };
        let mut best: Option<(f64, usize)> = None;
        for r in 0..rows {
            let v = t[r * width + pc];
            if v > EPS {
                let ratio = t[r * width + width - 1] / v;
                let better = match best {
                    None => true,
                    Some((br, bi)) => ratio < br - EPS || (ratio <= br + EPS && basis[r] < basis[bi]),
                };
                if better {
                    best = Some((ratio, r));
                }
            }
        }
        match best {
            None => return false,
            Some((_, pr)) => pivot(t, basis, rows, width, pr, pc),
        }
    }
    true
}
