//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min c.x` subject to `A x = b`, `x >= 0`. Used as the direct route
//! for small coupling LPs where an independently coded solver is wanted next
//! to the network-flow path. Bland's rule guarantees termination under
//! degeneracy; redundant equality rows are detected in phase one and dropped.

use crate::{Error, Result};

const RC_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

/// Optimal objective value of the LP, or an error when the program is
/// infeasible or unbounded (neither occurs for well-posed coupling LPs).
pub(crate) fn solve_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<f64> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidConfig("LP shape mismatch".into()));
    }

    // Tableau columns: n structural, m artificial, 1 rhs.
    let cols = n + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; cols];
        for (j, &v) in row.iter().enumerate() {
            r[j] = sign * v;
        }
        r[n + i] = 1.0;
        r[cols - 1] = sign * b[i];
        t.push(r);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase one: minimize the sum of artificials.
    let mut obj = vec![0.0; cols];
    for r in &t {
        for (o, &v) in obj.iter_mut().zip(r.iter()) {
            *o -= v;
        }
    }
    for j in n..n + m {
        obj[j] = 0.0;
    }
    run_simplex(&mut t, &mut obj, &mut basis, n + m)?;
    if -obj[cols - 1] > 1e-7 {
        return Err(Error::InvalidConfig("infeasible coupling LP".into()));
    }

    // Pivot remaining artificials out of the basis; fully zero rows are
    // redundant constraints and can be removed.
    let mut row = 0;
    while row < t.len() {
        if basis[row] >= n {
            let mut pivot_col = None;
            for (j, &v) in t[row].iter().enumerate().take(n) {
                if v.abs() > 1e-9 {
                    pivot_col = Some(j);
                    break;
                }
            }
            match pivot_col {
                Some(j) => {
                    pivot(&mut t, &mut obj, row, j);
                    basis[row] = j;
                }
                None => {
                    t.remove(row);
                    basis.remove(row);
                    continue;
                }
            }
        }
        row += 1;
    }

    // Phase two: reduced costs of the real objective against the basis.
    let rhs_col = cols - 1;
    let mut obj2 = vec![0.0; cols];
    obj2[..n].copy_from_slice(c);
    for (row, &bv) in t.iter().zip(basis.iter()) {
        if bv < n && c[bv] != 0.0 {
            let f = c[bv];
            for (o, &v) in obj2.iter_mut().zip(row.iter()) {
                *o -= f * v;
            }
        }
    }
    // Artificials may not re-enter.
    for j in n..n + m {
        obj2[j] = f64::INFINITY;
    }
    run_simplex(&mut t, &mut obj2, &mut basis, n)?;
    Ok(-obj2[rhs_col])
}

/// Bland pivoting until no entering column remains.
fn run_simplex(
    t: &mut [Vec<f64>],
    obj: &mut [f64],
    basis: &mut [usize],
    num_vars: usize,
) -> Result<()> {
    let rhs_col = obj.len() - 1;
    let max_pivots = 50_000;
    for _ in 0..max_pivots {
        let entering = (0..num_vars).find(|&j| obj[j] < -RC_TOL);
        let j = match entering {
            Some(j) => j,
            None => return Ok(()),
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for (r, row) in t.iter().enumerate() {
            if row[j] > PIVOT_TOL {
                let ratio = row[rhs_col] / row[j];
                let better = ratio < best_ratio - 1e-12
                    || ((ratio - best_ratio).abs() <= 1e-12
                        && leave.map(|l| basis[r] < basis[l]).unwrap_or(true));
                if better {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let r = leave.ok_or_else(|| Error::InvalidConfig("unbounded coupling LP".into()))?;
        pivot_obj(t, obj, r, j);
        basis[r] = j;
    }
    Err(Error::InvalidConfig("simplex failed to converge".into()))
}

fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], r: usize, j: usize) {
    pivot_obj(t, obj, r, j);
}

fn pivot_obj(t: &mut [Vec<f64>], obj: &mut [f64], r: usize, j: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    for row in 0..t.len() {
        if row == r {
            continue;
        }
        let f = t[row][j];
        if f == 0.0 {
            continue;
        }
        let (pivot_row, other) = if row < r {
            let (a, b) = t.split_at_mut(r);
            (&b[0], &mut a[row])
        } else {
            let (a, b) = t.split_at_mut(row);
            (&a[r], &mut b[0])
        };
        for (o, &pv) in other.iter_mut().zip(pivot_row.iter()) {
            *o -= f * pv;
        }
    }
    let f = obj[j];
    if f != 0.0 && f.is_finite() {
        for (o, &pv) in obj.iter_mut().zip(t[r].iter()) {
            if o.is_finite() {
                *o -= f * pv;
            }
        }
    }
}
