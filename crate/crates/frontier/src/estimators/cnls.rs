use crate::dataset::Dataset;
use crate::error::Result;
use crate::model::{Hyperplane, Partition, PiecewiseLinearModel};
use crate::qp::{assemble_cnls_qp, solve, QpProblem, QpSolution, SolverConfig};

/// Convex Nonparametric Least Squares: one hyperplane per observation under
/// all pairwise Afriat constraints. Maximally flexible in sample; the
/// min-envelope extension can be wildly wrong out of sample, which is the
/// overfitting signature the selection framework exists to expose.
pub fn fit_cnls(data: &Dataset, solver: &SolverConfig) -> Result<PiecewiseLinearModel> {
    let qp = assemble_cnls_qp(data)?;
    let sol = solve(&qp, solver)?;
    Ok(model_from_solution(&qp, &sol, data, solver.kkt_tolerance))
}

/// Build the piecewise-linear model for a solved partition QP.
pub(crate) fn model_from_solution(
    qp: &QpProblem,
    sol: &QpSolution,
    data: &Dataset,
    feasibility_tolerance: f64,
) -> PiecewiseLinearModel {
    let p = qp.d + 1;
    let hyperplanes: Vec<Hyperplane> = (0..qp.k)
        .map(|k| {
            let base = k * p;
            Hyperplane {
                intercept: sol.beta[base],
                // slopes can sit a solver-tolerance below zero; snap those
                slopes: (1..p)
                    .map(|j| {
                        let s = sol.beta[base + j];
                        if s < 0.0 && s > -feasibility_tolerance {
                            0.0
                        } else {
                            s
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    let min_region = qp
        .assignment
        .iter()
        .fold(vec![0usize; qp.k], |mut c, &r| {
            c[r] += 1;
            c
        })
        .into_iter()
        .min()
        .unwrap_or(1);
    PiecewiseLinearModel {
        hyperplanes,
        partition: Partition {
            assignment: qp.assignment.clone(),
            k: qp.k,
            min_region_size: min_region.max(1),
        },
        learning_mse: qp.learning_mse(&sol.beta, data.outputs()),
        feasibility_tolerance,
    }
}
