//! Assembly and solution of the Afriat-constrained least-squares QPs.
//!
//! For a partition of `n` observations into `K` basis regions the fit solves
//!
//! ```text
//!     minimize    1/2 b' H b + g' b
//!     subject to  A b <= 0,   b >= l
//! ```
//!
//! over the stacked hyperplane coefficients `b` (one intercept plus `d`
//! slopes per region). `H` is block diagonal with per-region Gram blocks,
//! the rows of `A` are the pairwise Afriat inequalities, and `l` frees the
//! intercepts while keeping every slope nonnegative.

mod solver;

pub use solver::{kkt_residuals, solve, KktReport};

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};
use crate::model::Partition;

/// Solver configuration shared by every estimator.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Target KKT residual; a solve reporting `Optimal` meets this.
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Diagonal ridge added to `H` to guard against collinear regions.
    pub ridge: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { kkt_tolerance: 1e-6, max_iterations: 200, ridge: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// Solution of one QP: stacked coefficients plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub status: SolveStatus,
    /// Multipliers for the inequality rows (Afriat rows first, then the
    /// finite lower bounds), when produced by the solver.
    pub duals: Option<DVector<f64>>,
}

/// One block-structured QP instance.
///
/// The Afriat matrix is stored implicitly as `(observation, region)` pairs;
/// row coefficients are reconstructed from the cached augmented inputs. The
/// `n` rows with `region == assignment[obs]` are identically zero and are
/// not stored, but still count toward the logical `n * K` rows.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Augmented inputs, row i = (1, X_i).
    pub xt: DMatrix<f64>,
    pub assignment: Vec<usize>,
    /// Per-region Gram blocks of size (d+1) x (d+1).
    pub h_blocks: Vec<DMatrix<f64>>,
    pub g: DVector<f64>,
    /// Nontrivial Afriat rows as (observation, compared region).
    pub afriat_rows: Vec<(usize, usize)>,
    /// Lower bounds: 0 at slope positions, -inf at intercepts.
    pub l: DVector<f64>,
    /// Sum of squared outputs — the constant dropped from the objective.
    /// Keeping it lets the solver recover the actual SSE from the
    /// objective value: `SSE = 2 * objective + sum_y_sq`.
    pub sum_y_sq: f64,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.k * (self.d + 1)
    }

    /// Logical Afriat row count, including the omitted zero rows.
    pub fn logical_constraint_rows(&self) -> usize {
        self.n * self.k
    }

    /// Coefficients of the stored Afriat row `r` as sparse (col, value)
    /// pairs: `X~_i' b_[i] - X~_i' b_k <= 0`.
    pub fn afriat_row_entries(&self, r: usize) -> Vec<(usize, f64)> {
        let (i, k) = self.afriat_rows[r];
        let bi = self.assignment[i] * (self.d + 1);
        let bk = k * (self.d + 1);
        let mut entries = Vec::with_capacity(2 * (self.d + 1));
        for j in 0..=self.d {
            entries.push((bi + j, self.xt[(i, j)]));
        }
        for j in 0..=self.d {
            entries.push((bk + j, -self.xt[(i, j)]));
        }
        entries
    }

    /// Objective `1/2 b'Hb + g'b` (the constant sum of squared outputs is
    /// dropped, matching the assembled form).
    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        let p = self.d + 1;
        let mut quad = 0.0;
        for (k, block) in self.h_blocks.iter().enumerate() {
            let seg = beta.rows(k * p, p);
            quad += (seg.transpose() * block * seg)[(0, 0)];
        }
        0.5 * quad + self.g.dot(beta)
    }

    /// Largest violation of `A b <= 0` over the stored rows.
    pub fn max_afriat_violation(&self, beta: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.afriat_rows.len() {
            let v: f64 = self
                .afriat_row_entries(r)
                .iter()
                .map(|&(c, a)| a * beta[c])
                .sum();
            worst = worst.max(v);
        }
        worst
    }

    /// Learning MSE of the assigned-plane fit at `beta`.
    pub fn learning_mse(&self, beta: &DVector<f64>, outputs: &DVector<f64>) -> f64 {
        let p = self.d + 1;
        let mut sse = 0.0;
        for i in 0..self.n {
            let b = self.assignment[i] * p;
            let fit: f64 = (0..p).map(|j| beta[b + j] * self.xt[(i, j)]).sum();
            sse += (fit - outputs[i]).powi(2);
        }
        sse / self.n as f64
    }

    /// Plain-text dump for cross-checking against external solvers.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let p = self.num_vars();
        let mut out = String::new();
        writeln!(out, "n {} d {} K {}", self.n, self.d, self.k).unwrap();
        writeln!(out, "H dense {p} x {p}").unwrap();
        let bs = self.d + 1;
        for r in 0..p {
            let row: Vec<String> = (0..p)
                .map(|c| {
                    if r / bs == c / bs {
                        format!("{:.17e}", self.h_blocks[r / bs][(r % bs, c % bs)])
                    } else {
                        "0".into()
                    }
                })
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        writeln!(out, "g").unwrap();
        for v in self.g.iter() {
            writeln!(out, "{v:.17e}").unwrap();
        }
        writeln!(out, "A triplets (row col value), logical rows {}", self.logical_constraint_rows()).unwrap();
        for r in 0..self.afriat_rows.len() {
            for (c, v) in self.afriat_row_entries(r) {
                writeln!(out, "{r} {c} {v:.17e}").unwrap();
            }
        }
        writeln!(out, "l").unwrap();
        for v in self.l.iter() {
            writeln!(out, "{v:.17e}").unwrap();
        }
        out
    }
}

/// Assemble the QP for an arbitrary observation-to-region partition.
pub fn assemble_qp(data: &Dataset, partition: &Partition) -> Result<QpProblem> {
    let n = data.n();
    let d = data.d();
    if partition.n() != n {
        return Err(FrontierError::DimensionMismatch(format!(
            "partition covers {} observations, dataset has {n}",
            partition.n()
        )));
    }
    let k = partition.k;
    let sizes = partition.region_sizes();
    if let Some(empty) = sizes.iter().position(|&c| c == 0) {
        return Err(FrontierError::InvalidPartition(format!("region {empty} is empty")));
    }
    let p = d + 1;
    let mut xt = DMatrix::zeros(n, p);
    for i in 0..n {
        xt[(i, 0)] = 1.0;
        for j in 0..d {
            xt[(i, j + 1)] = data.inputs()[(i, j)];
        }
    }
    let mut h_blocks = vec![DMatrix::zeros(p, p); k];
    let mut g = DVector::zeros(k * p);
    for i in 0..n {
        let r = partition.assignment[i];
        let block = &mut h_blocks[r];
        for a in 0..p {
            for b in 0..p {
                block[(a, b)] += xt[(i, a)] * xt[(i, b)];
            }
            g[r * p + a] -= xt[(i, a)] * data.outputs()[i];
        }
    }
    let mut afriat_rows = Vec::with_capacity(n * (k - 1));
    for i in 0..n {
        for kk in 0..k {
            if kk != partition.assignment[i] {
                afriat_rows.push((i, kk));
            }
        }
    }
    let mut l = DVector::from_element(k * p, f64::NEG_INFINITY);
    for kk in 0..k {
        for j in 1..p {
            l[kk * p + j] = 0.0;
        }
    }
    Ok(QpProblem {
        n,
        d,
        k,
        xt,
        assignment: partition.assignment.clone(),
        h_blocks,
        g,
        afriat_rows,
        l,
        sum_y_sq: data.outputs().norm_squared(),
    })
}

/// The CNLS special case: one hyperplane per observation, all pairwise
/// Afriat constraints.
pub fn assemble_cnls_qp(data: &Dataset) -> Result<QpProblem> {
    if data.n() < 2 {
        return Err(FrontierError::InvalidData("CNLS needs at least 2 observations".into()));
    }
    assemble_qp(data, &Partition::identity(data.n()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: &[(&[f64], f64)]) -> Dataset {
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

    #[test]
    fn one_observation_block_sum() {
        // n=1 is below the Dataset floor, so build the pieces directly: the
        // block for x=2, y=3 must be [[1,2],[2,4]] with g = [-3,-6].
        let data = dataset(&[(&[2.0], 3.0), (&[2.0], 3.0)]);
        let part = Partition::single_region(2);
        let qp = assemble_qp(&data, &part).unwrap();
        // two identical observations double the single-observation sums
        assert_relative_eq!(qp.h_blocks[0][(0, 0)], 2.0);
        assert_relative_eq!(qp.h_blocks[0][(0, 1)], 4.0);
        assert_relative_eq!(qp.h_blocks[0][(1, 1)], 8.0);
        assert_relative_eq!(qp.g[0], -6.0);
        assert_relative_eq!(qp.g[1], -12.0);
        assert_eq!(qp.afriat_rows.len(), 0);
        assert_eq!(qp.logical_constraint_rows(), 2);
    }

    #[test]
    fn dense_accumulation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 6;
        let d = 2;
        let k = 2;
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..1.0)).collect();
                let y = rng.gen_range(0.0..2.0);
                (x, y)
            })
            .collect();
        let refs: Vec<(&[f64], f64)> = rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        let data = dataset(&refs);
        let assignment = vec![0, 1, 0, 1, 0, 1];
        let part = Partition::new(assignment.clone(), k, 1).unwrap();
        let qp = assemble_qp(&data, &part).unwrap();

        // brute-force dense H and g over the full K(d+1) space
        let p = k * (d + 1);
        let mut h = DMatrix::zeros(p, p);
        let mut g = DVector::zeros(p);
        for i in 0..n {
            let mut xtilde = DVector::zeros(p);
            let base = assignment[i] * (d + 1);
            xtilde[base] = 1.0;
            for j in 0..d {
                xtilde[base + 1 + j] = data.inputs()[(i, j)];
            }
            h += &xtilde * xtilde.transpose();
            g -= xtilde * data.outputs()[i];
        }
        for r in 0..p {
            for c in 0..p {
                let blocked = if r / (d + 1) == c / (d + 1) {
                    qp.h_blocks[r / (d + 1)][(r % (d + 1), c % (d + 1))]
                } else {
                    0.0
                };
                assert_relative_eq!(blocked, h[(r, c)], epsilon = 1e-12);
            }
            assert_relative_eq!(qp.g[r], g[r], epsilon = 1e-12);
        }
    }

    #[test]
    fn constraint_dimensions() {
        let data = dataset(&[
            (&[0.2, 0.4], 1.0),
            (&[0.5, 0.6], 1.2),
            (&[0.9, 0.3], 1.1),
            (&[0.4, 0.8], 1.4),
        ]);
        let part = Partition::new(vec![0, 0, 1, 1], 2, 1).unwrap();
        let qp = assemble_qp(&data, &part).unwrap();
        assert_eq!(qp.logical_constraint_rows(), 4 * 2);
        assert_eq!(qp.afriat_rows.len(), 4 * 1);
        assert_eq!(qp.num_vars(), 2 * 3);
        assert_eq!(qp.l[0], f64::NEG_INFINITY);
        assert_eq!(qp.l[1], 0.0);
        assert_eq!(qp.l[2], 0.0);
    }

    #[test]
    fn cnls_row_counts() {
        let data = dataset(&[(&[1.0], 1.0), (&[2.0], 2.0), (&[3.0], 2.5)]);
        let qp = assemble_cnls_qp(&data).unwrap();
        assert_eq!(qp.logical_constraint_rows(), 9);
        assert_eq!(qp.afriat_rows.len(), 6);
    }

    #[test]
    fn objective_matches_expanded_form() {
        let data = dataset(&[(&[1.0], 1.0), (&[2.0], 3.0), (&[3.0], 3.5)]);
        let qp = assemble_cnls_qp(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let beta = DVector::from_fn(qp.num_vars(), |_, _| rng.gen_range(-1.0..1.0));
            // 1/2 sum fit^2 - sum fit*y
            let mut expect = 0.0;
            for i in 0..qp.n {
                let b = qp.assignment[i] * (qp.d + 1);
                let fit: f64 = (0..=qp.d).map(|j| beta[b + j] * qp.xt[(i, j)]).sum();
                expect += 0.5 * fit * fit - fit * data.outputs()[i];
            }
            assert_relative_eq!(qp.objective(&beta), expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn empty_region_rejected() {
        let data = dataset(&[(&[1.0], 1.0), (&[2.0], 2.0), (&[3.0], 2.5)]);
        let part = Partition { assignment: vec![0, 0, 0], k: 2, min_region_size: 1 };
        assert!(assemble_qp(&data, &part).is_err());
    }

    #[test]
    fn h_is_psd_before_ridging() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<(Vec<f64>, f64)> = (0..8)
            .map(|_| {
                (vec![rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)], rng.gen_range(0.0..2.0))
            })
            .collect();
        let refs: Vec<(&[f64], f64)> = rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        let data = dataset(&refs);
        let part = Partition::new(vec![0, 1, 0, 1, 0, 1, 0, 1], 2, 1).unwrap();
        let qp = assemble_qp(&data, &part).unwrap();
        for block in &qp.h_blocks {
            let eig = block.clone().symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-10));
        }
    }
}
