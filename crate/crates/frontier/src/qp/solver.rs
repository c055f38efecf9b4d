use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{FrontierError, Result};
use crate::nnls::nnls_masked;

use super::{QpProblem, QpSolution, SolveStatus, SolverConfig};

/// Stationarity, primal-feasibility and complementarity residuals of a
/// candidate solution.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.complementarity)
    }
}

/// All inequality rows of the problem in solver order: the stored Afriat
/// rows followed by one `-beta_j <= 0` row per finite lower bound.
fn constraint_rows(problem: &QpProblem) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> =
        (0..problem.afriat_rows.len()).map(|r| problem.afriat_row_entries(r)).collect();
    for j in 0..problem.num_vars() {
        if problem.l[j].is_finite() {
            rows.push(vec![(j, -1.0)]);
        }
    }
    rows
}

fn dense_h(problem: &QpProblem) -> DMatrix<f64> {
    let p = problem.d + 1;
    let nv = problem.num_vars();
    let mut h = DMatrix::zeros(nv, nv);
    for (k, block) in problem.h_blocks.iter().enumerate() {
        h.view_mut((k * p, k * p), (p, p)).copy_from(block);
    }
    h
}

/// Solve the QP to the configured KKT tolerance.
pub fn solve(problem: &QpProblem, config: &SolverConfig) -> Result<QpSolution> {
    let nv = problem.num_vars();
    let rows = constraint_rows(problem);
    let m = rows.len();

    if m == 0 {
        // unconstrained block least squares
        let mut h = dense_h(problem);
        for j in 0..nv {
            h[(j, j)] += config.ridge;
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| FrontierError::SolverFailure("singular unconstrained system".into()))?;
        let beta = chol.solve(&(-&problem.g));
        let objective = problem.objective(&beta);
        let report = kkt_residuals(problem, &beta, None);
        return Ok(QpSolution {
            beta,
            objective,
            kkt_residual: report.max(),
            status: SolveStatus::Optimal,
            duals: Some(DVector::zeros(0)),
        });
    }

    // quadratic term, upper triangle, CSC
    let p = problem.d + 1;
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for c in 0..nv {
        let k = c / p;
        let base = k * p;
        for r in base..=c {
            let mut v = problem.h_blocks[k][(r - base, c - base)];
            if r == c {
                v += config.ridge;
            }
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    let pmat = CscMatrix::new(nv, nv, colptr, rowval, nzval);

    // constraint matrix CSC
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            cols[c].push((r, v));
        }
    }
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in &mut cols {
        col.sort_by_key(|e| e.0);
        for &(r, v) in col.iter() {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    let amat = CscMatrix::new(m, nv, colptr, rowval, nzval);
    let b = vec![0.0; m];
    let cones = [SupportedConeT::NonnegativeConeT(m)];

    let tight = (config.kkt_tolerance * 1e-2).clamp(1e-12, 1e-8);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(config.max_iterations as u32)
        .tol_feas(tight)
        .tol_gap_abs(tight)
        .tol_gap_rel(tight)
        .build()
        .map_err(|e| FrontierError::SolverFailure(format!("settings: {e:?}")))?;

    let q: Vec<f64> = problem.g.iter().copied().collect();
    let mut solver = DefaultSolver::new(&pmat, &q, &amat, &b, &cones, settings);
    solver.solve();

    let mut beta = DVector::from_vec(solver.solution.x.clone());
    let mut duals = DVector::from_vec(solver.solution.z.clone());
    let mut report = kkt_residuals_with_duals(problem, &beta, Some(&duals));

    // Interior-point iterates can stop short of the constraint surface on
    // degenerate (exactly-interpolable) instances; polish by re-solving on
    // the identified active set. Small problems polish whenever the
    // residual is not already far inside tolerance (the cost is negligible
    // and exact-fit cases benefit even when the aggregate residual looks
    // fine); large problems — CNLS-sized, where a polish pass dominates
    // the solve — only polish when the residual actually misses tolerance.
    let small = nv + m <= 2000;
    // Near-exact fits (SSE at the numerical noise floor) are the
    // degenerate regime where interior-point iterates stall a few orders
    // of magnitude short of the interpolating solution even though the
    // aggregate KKT residual looks fine; detect them from the recovered
    // SSE and polish. Noisy fits skip the polish unless the residual
    // actually misses tolerance.
    let n = problem.n as f64;
    let mse = (2.0 * problem.objective(&beta) + problem.sum_y_sq).max(0.0) / n;
    let near_exact = mse <= 1e-8 * (1.0 + problem.sum_y_sq / n);
    if (small && near_exact) || report.max() > config.kkt_tolerance {
        if let Some((pb, pz)) = polish(problem, &rows, &beta, &duals) {
            let polished = kkt_residuals_with_duals(problem, &pb, Some(&pz));
            let better_kkt = polished.max() < report.max();
            // On degenerate exact-fit instances the aggregate residual can
            // look fine while the objective is still improvable; accept a
            // feasible polished point that lowers the objective.
            let obj_now = problem.objective(&beta);
            let obj_pol = problem.objective(&pb);
            let better_obj = obj_pol <= obj_now + 1e-12 * obj_now.abs().max(1.0)
                && polished.max() <= config.kkt_tolerance.max(report.max());
            if better_kkt || better_obj {
                beta = pb;
                duals = pz;
                report = polished;
            }
        }
    }
    let status = match solver.solution.status {
        SolverStatus::Solved => {
            if report.max() <= config.kkt_tolerance {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIterations
            }
        }
        SolverStatus::AlmostSolved => SolveStatus::MaxIterations,
        SolverStatus::PrimalInfeasible | SolverStatus::DualInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::MaxIterations,
    };
    if status == SolveStatus::Infeasible {
        // Ab <= 0 with b = 0 is always feasible; this indicates a bug upstream.
        return Err(FrontierError::SolverFailure(
            "solver reported infeasible on a feasible problem family".into(),
        ));
    }
    Ok(QpSolution {
        objective: problem.objective(&beta),
        kkt_residual: report.max(),
        beta,
        status,
        duals: Some(duals),
    })
}

/// Active-set refinement warm-started from an interior-point solution:
/// solve the equality-constrained KKT system on the active rows, dropping
/// rows with negative multipliers and adding violated ones until both
/// checks pass. Returns `None` if the loop fails to settle.
fn polish(
    problem: &QpProblem,
    rows: &[Vec<(usize, f64)>],
    beta_ip: &DVector<f64>,
    z_ip: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let nv = problem.num_vars();
    let h = dense_h(problem);
    let z_scale = z_ip.amax().max(1.0);
    let mut active: Vec<usize> = (0..rows.len())
        .filter(|&r| z_ip[r] > 1e-7 * z_scale)
        .collect();

    for _iter in 0..60 {
        let na = active.len();
        if nv + na > 2500 {
            return None; // polishing cost would dwarf the solve itself
        }
        let mut kkt = DMatrix::zeros(nv + na, nv + na);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
        for (j, &r) in active.iter().enumerate() {
            for &(c, v) in &rows[r] {
                kkt[(c, nv + j)] += v;
                kkt[(nv + j, c)] += v;
            }
        }
        // tiny regularization on both blocks makes the system
        // quasi-definite, hence LU-solvable even with duplicated rows or
        // flat Hessian blocks; the perturbation is far below kkt_tolerance
        for c in 0..nv {
            kkt[(c, c)] += 1e-12;
        }
        for j in 0..na {
            kkt[(nv + j, nv + j)] -= 1e-12;
        }
        let mut rhs = DVector::zeros(nv + na);
        for c in 0..nv {
            rhs[c] = -problem.g[c];
        }
        let sol = kkt.lu().solve(&rhs)?;
        let beta = DVector::from_fn(nv, |c, _| sol[c]);
        let nu = DVector::from_fn(na, |j, _| sol[nv + j]);

        // drop every negative multiplier at once — degenerate optima can
        // have hundreds of active ties, and one-at-a-time exchanges do not
        // converge within the iteration budget
        let keep: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|&(j, _)| nu[j] >= -1e-9)
            .map(|(_, &r)| r)
            .collect();
        if keep.len() < active.len() {
            active = keep;
            continue;
        }
        // likewise add every violated row in one batch
        let mut is_active = vec![false; rows.len()];
        for &r in &active {
            is_active[r] = true;
        }
        let mut added = false;
        for (r, row) in rows.iter().enumerate() {
            if is_active[r] {
                continue;
            }
            let s: f64 = row.iter().map(|&(c, v)| v * beta[c]).sum();
            if s > 1e-10 {
                active.push(r);
                added = true;
            }
        }
        if added {
            continue;
        }
        let mut z = DVector::zeros(rows.len());
        for (j, &r) in active.iter().enumerate() {
            z[r] = nu[j].max(0.0);
        }
        return Some((beta, z));
    }
    let _ = beta_ip;
    None
}

/// KKT residuals of an arbitrary point. When no multipliers are supplied,
/// least-squares multipliers are recovered from the near-active rows.
pub fn kkt_residuals(problem: &QpProblem, beta: &DVector<f64>, duals: Option<&DVector<f64>>) -> KktReport {
    kkt_residuals_with_duals(problem, beta, duals)
}

fn kkt_residuals_with_duals(
    problem: &QpProblem,
    beta: &DVector<f64>,
    duals: Option<&DVector<f64>>,
) -> KktReport {
    let rows = constraint_rows(problem);
    let h = dense_h(problem);
    let grad = &h * beta + &problem.g;

    let slacks: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().map(|&(c, v)| v * beta[c]).sum::<f64>())
        .collect();
    let primal = slacks.iter().fold(0.0f64, |acc, &s| acc.max(s));

    let z: DVector<f64> = match duals {
        Some(z) => z.clone(),
        None => {
            // recover multipliers on near-active rows by nonnegative LS
            let act_tol = 1e-7 * (1.0 + beta.amax());
            let active: Vec<usize> = slacks
                .iter()
                .enumerate()
                .filter(|(_, &s)| s.abs() <= act_tol)
                .map(|(r, _)| r)
                .collect();
            let mut z = DVector::zeros(rows.len());
            if !active.is_empty() {
                let nv = problem.num_vars();
                let mut a = DMatrix::zeros(nv, active.len());
                for (j, &r) in active.iter().enumerate() {
                    for &(c, v) in &rows[r] {
                        a[(c, j)] += v;
                    }
                }
                let rhs = -&grad;
                let sol = nnls_masked(&a, &rhs, &vec![true; active.len()]);
                for (j, &r) in active.iter().enumerate() {
                    z[r] = sol[j];
                }
            }
            z
        }
    };

    let mut stat = grad;
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            stat[c] += v * z[r];
        }
    }
    let stationarity = stat.amax();
    let complementarity = slacks
        .iter()
        .zip(z.iter())
        .fold(0.0f64, |acc, (&s, &zi)| acc.max((s * zi).abs()));
    KktReport { stationarity, primal_feasibility: primal, complementarity }
}
