//! Small dense least squares with nonnegativity on a subset of variables.
//!
//! Lawson-Hanson style active set. Problem sizes here are tiny (a handful of
//! coefficients), so plain SVD solves per iteration are fine.

use nalgebra::{DMatrix, DVector};

const TOL: f64 = 1e-12;

/// Minimize `||a x - b||^2` subject to `x[i] >= 0` wherever `nonneg[i]`.
///
/// Variables with `nonneg[i] == false` are unconstrained (e.g. intercepts).
pub fn nnls_masked(a: &DMatrix<f64>, b: &DVector<f64>, nonneg: &[bool]) -> DVector<f64> {
    let p = a.ncols();
    assert_eq!(nonneg.len(), p);
    // passive = currently allowed to be nonzero
    let mut passive: Vec<bool> = nonneg.iter().map(|c| !c).collect();
    let mut x = DVector::zeros(p);

    // start from the unconstrained solution restricted to free vars
    let mut iter = 0usize;
    let max_iter = 6 * p + 30;
    loop {
        iter += 1;
        if iter > max_iter {
            break;
        }
        // gradient of 1/2||ax-b||^2 is a^T(ax-b); candidates to enter have
        // negative gradient (descent direction off the bound)
        let resid = b - a * &x;
        let w = a.transpose() * &resid;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..p {
            if !passive[i] && w[i] > TOL.max(1e-10 * w.amax()) {
                if best.map_or(true, |(_, bw)| w[i] > bw) {
                    best = Some((i, w[i]));
                }
            }
        }
        let entering = match best {
            Some((i, _)) => Some(i),
            None => {
                if iter == 1 {
                    // still need the initial solve on the free variables
                    None
                } else {
                    break;
                }
            }
        };
        if let Some(i) = entering {
            passive[i] = true;
        }
        if passive.iter().all(|&pv| !pv) {
            break;
        }

        // inner loop: solve on the passive set, backtrack if any constrained
        // passive variable goes negative
        loop {
            let cols: Vec<usize> = (0..p).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(cols.iter());
            let sol = lstsq(&sub, b);
            let mut z = DVector::zeros(p);
            for (j, &i) in cols.iter().enumerate() {
                z[i] = sol[j];
            }
            let mut alpha = 1.0f64;
            let mut blocker: Option<usize> = None;
            for &i in &cols {
                if nonneg[i] && z[i] < 0.0 {
                    let step = x[i] / (x[i] - z[i]);
                    if step < alpha {
                        alpha = step;
                        blocker = Some(i);
                    }
                }
            }
            match blocker {
                None => {
                    x = z;
                    break;
                }
                Some(ib) => {
                    x = &x + (z - &x) * alpha;
                    x[ib] = 0.0;
                    passive[ib] = false;
                    for &i in &cols {
                        if nonneg[i] && x[i] <= TOL {
                            x[i] = x[i].max(0.0);
                        }
                    }
                }
            }
        }
    }
    for i in 0..p {
        if nonneg[i] && x[i] < 0.0 {
            x[i] = 0.0;
        }
    }
    x
}

/// Plain least squares via SVD (handles rank deficiency).
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12).expect("svd solve")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_matches_ols() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls_masked(&a, &b, &[false, false]);
        assert_relative_eq!(x[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn clips_negative_slope() {
        // decreasing data, slope constrained nonnegative -> slope 0, intercept mean
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![3.0, 2.0, 1.0]);
        let x = nnls_masked(&a, &b, &[false, true]);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn interior_solution_unaffected_by_constraint() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, 1.5, 1.0, 2.5, 1.0, 4.0]);
        let b = DVector::from_fn(4, |i, _| 0.3 + 2.0 * a[(i, 1)]);
        let x = nnls_masked(&a, &b, &[false, true]);
        assert_relative_eq!(x[0], 0.3, epsilon = 1e-8);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-8);
    }
}
