//! Minimum-norm point in a convex polytope, Wolfe's active-set method.
//!
//! The polytope is given implicitly through a linear minimization oracle
//! (`lmo(d)` returns a vertex minimizing `<d, w>`), which lets the same code
//! project onto an explicit vertex hull and onto a Minkowski sum of scaled
//! hulls without enumerating the sum. The corral stays affinely independent,
//! so the affine subproblems are tiny dense solves.

/// Relative duality-gap tolerance for termination.
const GAP_TOL: f64 = 1e-12;

/// Corral weights at or below this are dropped.
const WEIGHT_DROP: f64 = 1e-14;

/// Minimum-norm point of `conv{vertices}` where vertices are produced by
/// `lmo`. `start` must be a vertex of the polytope.
pub(crate) fn min_norm_point(
    start: Vec<f64>,
    lmo: impl Fn(&[f64]) -> Vec<f64>,
    max_iter: usize,
) -> Vec<f64> {
    let dim = start.len();
    let mut corral: Vec<Vec<f64>> = vec![start];
    let mut weights: Vec<f64> = vec![1.0];
    let mut x = corral[0].clone();

    for _ in 0..max_iter {
        let xx = dot(&x, &x);
        if xx <= GAP_TOL * GAP_TOL {
            return x;
        }
        let w = lmo(&x);
        let gap = xx - dot(&x, &w);
        if gap <= GAP_TOL * (1.0 + xx) {
            return x;
        }
        if corral.iter().any(|s| max_abs_diff(s, &w) <= 1e-15) {
            // The best vertex is already in the corral: no further progress.
            return x;
        }
        corral.push(w);
        weights.push(0.0);

        // Minor cycle: move to the affine minimizer, dropping vertices that
        // would receive negative weight.
        loop {
            let alpha = match affine_min_norm(&corral) {
                Some(a) => a,
                None => {
                    // Affinely dependent corral: discard the newest vertex.
                    corral.pop();
                    weights.pop();
                    break;
                }
            };
            if alpha.iter().all(|&a| a >= -1e-12) {
                weights = alpha.iter().map(|&a| a.max(0.0)).collect();
                normalize(&mut weights);
                break;
            }
            let mut theta = 1.0f64;
            for (i, &a) in alpha.iter().enumerate() {
                if a < 0.0 {
                    let t = weights[i] / (weights[i] - a);
                    if t < theta {
                        theta = t;
                    }
                }
            }
            for (wgt, &a) in weights.iter_mut().zip(&alpha) {
                *wgt = (1.0 - theta) * *wgt + theta * a;
            }
            let mut keep = vec![true; corral.len()];
            let mut dropped = false;
            for (i, &wgt) in weights.iter().enumerate() {
                if wgt <= WEIGHT_DROP {
                    keep[i] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // Numerical stall: drop the smallest weight to make progress.
                let i = weights
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                keep[i] = false;
            }
            retain_mask(&mut corral, &keep);
            retain_mask(&mut weights, &keep);
            normalize(&mut weights);
            if corral.len() <= 1 {
                break;
            }
        }

        x = vec![0.0; dim];
        for (s, &wgt) in corral.iter().zip(&weights) {
            for (xc, &sc) in x.iter_mut().zip(s) {
                *xc += wgt * sc;
            }
        }
    }
    x
}

/// Coefficients of the minimum-norm point of the affine hull of `points`
/// (summing to one), or `None` when the points are affinely dependent.
fn affine_min_norm(points: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = points.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    // Translate by the first point and solve the normal equations for the
    // remaining coefficients.
    let base = &points[0];
    let cols: Vec<Vec<f64>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    let n = cols.len();
    let mut gram = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            gram[i][j] = dot(&cols[i], &cols[j]);
        }
        rhs[i] = -dot(&cols[i], base);
    }
    let beta = gauss_solve(gram, rhs)?;
    let mut alpha = Vec::with_capacity(k);
    alpha.push(1.0 - beta.iter().sum::<f64>());
    alpha.extend(beta);
    Some(alpha)
}

/// Gaussian elimination with partial pivoting; `None` on (near-)singularity.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1e-300);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn normalize(weights: &mut [f64]) {
    let s: f64 = weights.iter().sum();
    if s > 0.0 {
        for w in weights.iter_mut() {
            *w /= s;
        }
    }
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut i = 0;
    v.retain(|_| {
        let k = keep[i];
        i += 1;
        k
    });
}

/// Distance from the origin to `conv{vertices}` given explicitly.
pub(crate) fn dist_to_hull(vertices: &[Vec<f64>], max_iter: usize) -> f64 {
    let start = vertices
        .iter()
        .min_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))
        .expect("nonempty vertex set")
        .clone();
    if dot(&start, &start) == 0.0 {
        return 0.0;
    }
    let lmo = |d: &[f64]| -> Vec<f64> {
        vertices
            .iter()
            .min_by(|a, b| dot(d, a).total_cmp(&dot(d, b)))
            .unwrap()
            .clone()
    };
    let x = min_norm_point(start, lmo, max_iter);
    dot(&x, &x).sqrt()
}
