//! Shared test-side oracles and fixtures.
//!
//! Everything here is implemented independently of the library's solution
//! paths so it can serve as ground truth: the QP oracle enumerates active
//! sets exhaustively instead of running an interior-point method.

#![allow(dead_code)]

use frontier::dataset::Dataset;
use frontier::model::Partition;
use frontier::qp::QpProblem;
use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Build a dataset from explicit rows.
pub fn make_dataset(rows: &[(&[f64], f64)]) -> Dataset {
    let n = rows.len();
    let d = rows[0].0.len();
    let mut inputs = DMatrix::zeros(n, d);
    let mut outputs = DVector::zeros(n);
    for (i, (x, y)) in rows.iter().enumerate() {
        for j in 0..d {
            inputs[(i, j)] = x[j];
        }
        outputs[i] = *y;
    }
    Dataset::new(inputs, outputs, None).unwrap()
}

/// Random dataset on the unit-ish input box with bounded outputs.
pub fn random_dataset(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let inputs = DMatrix::from_fn(n, d, |_, _| rng.gen_range(0.1..1.0));
    let outputs = DVector::from_fn(n, |_, _| rng.gen_range(0.1..2.0));
    Dataset::new(inputs, outputs, None).unwrap()
}

/// Random partition of `n` observations into exactly `k` nonempty regions.
pub fn random_partition(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Partition {
    assert!(k <= n);
    loop {
        let mut assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        // force each region nonempty by stamping the first k slots
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for (r, &slot) in order.iter().take(k).enumerate() {
            assignment[slot] = r;
        }
        if let Ok(p) = Partition::new(assignment, k, 1) {
            return p;
        }
    }
}

/// Global minimizer of the (ridged) QP found by exhaustive active-set
/// enumeration.
///
/// Every inequality (stored Afriat rows plus the finite slope lower
/// bounds, rewritten as `-e_j' b <= 0`) is tried as an equality-active
/// subset; the equality-constrained KKT system is solved densely and the
/// candidate accepted iff it is primal feasible with nonnegative
/// multipliers. For a convex QP any KKT point is a global minimum, so the
/// first accepted subset ends the search.
pub fn qp_oracle(problem: &QpProblem, ridge: f64) -> Option<(DVector<f64>, f64)> {
    let nv = problem.num_vars();
    let p = problem.d + 1;

    // dense ridged Hessian
    let mut h = DMatrix::zeros(nv, nv);
    for (k, block) in problem.h_blocks.iter().enumerate() {
        for a in 0..p {
            for b in 0..p {
                h[(k * p + a, k * p + b)] = block[(a, b)];
            }
        }
    }
    for j in 0..nv {
        h[(j, j)] += ridge;
    }

    // all inequality rows as dense vectors, a' b <= 0
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for r in 0..problem.afriat_rows.len() {
        let mut a = DVector::zeros(nv);
        for (c, v) in problem.afriat_row_entries(r) {
            a[c] += v;
        }
        rows.push(a);
    }
    for j in 0..nv {
        if problem.l[j].is_finite() {
            let mut a = DVector::zeros(nv);
            a[j] = -1.0;
            rows.push(a);
        }
    }
    let m = rows.len();
    let feas_tol = 1e-7;
    let dual_tol = 1e-7;

    for size in 0..=m.min(nv) {
        for subset in (0..m).combinations(size) {
            // KKT system [H A_S'; A_S 0] [b; lam] = [-g; 0]
            let dim = nv + size;
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
            for (s, &r) in subset.iter().enumerate() {
                for j in 0..nv {
                    kkt[(j, nv + s)] = rows[r][j];
                    kkt[(nv + s, j)] = rows[r][j];
                }
            }
            let mut rhs = DVector::zeros(dim);
            for j in 0..nv {
                rhs[j] = -problem.g[j];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else {
                continue;
            };
            let b = DVector::from_fn(nv, |j, _| sol[j]);
            if (0..size).any(|s| sol[nv + s] < -dual_tol) {
                continue;
            }
            if rows.iter().any(|a| a.dot(&b) > feas_tol) {
                continue;
            }
            // residual check guards against LU on a singular system
            let resid = {
                let mut r = &h * &b + DVector::from_fn(nv, |j, _| problem.g[j]);
                for (s, &ri) in subset.iter().enumerate() {
                    r += &rows[ri] * sol[nv + s];
                }
                r.amax()
            };
            if resid > 1e-6 {
                continue;
            }
            let obj = problem.objective(&b);
            return Some((b, obj));
        }
    }
    None
}
