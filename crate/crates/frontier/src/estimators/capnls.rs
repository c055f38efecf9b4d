//! The CAP-NLS estimator: adaptive axis-aligned partition proposals scored
//! by the globally Afriat-constrained least-squares QP.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};
use crate::model::{Partition, PiecewiseLinearModel};
use crate::qp::{assemble_qp, solve, SolverConfig};

use super::cnls::model_from_solution;

/// Tuning knobs for the partition-growth loop.
#[derive(Debug, Clone)]
pub struct CapNlsParams {
    /// Random knot proposals per region per iteration.
    pub m: usize,
    /// Proposed split directions; fixed to the coordinate axes, so `l = d`.
    pub l: usize,
    /// Minimum observations for a region to be split; each child keeps at
    /// least `ceil(n0 / 2)`.
    pub n0: usize,
    /// Relative MSE band for the parsimony rule (1% in all reported runs).
    pub selection_tolerance: f64,
    pub rng_seed: u64,
    /// Stop growth after two consecutive additions that improve learning
    /// MSE by less than `fast_threshold` (relative).
    pub fast_stop: bool,
    pub fast_threshold: f64,
    /// Hard cap on the number of basis regions grown.
    pub max_k: Option<usize>,
}

impl CapNlsParams {
    /// Defaults for input dimension `d`: `M = 10`, `L = d`, `n0 = 2(d+1)`.
    pub fn default_for(d: usize) -> Self {
        Self {
            m: 10,
            l: d,
            n0: 2 * (d + 1),
            selection_tolerance: 0.01,
            rng_seed: 0,
            fast_stop: false,
            fast_threshold: 1e-3,
            max_k: Some(20),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n0 < 2 * (d + 1) {
            return Err(FrontierError::InvalidConfig(format!(
                "n0 = {} below the floor 2(d+1) = {}",
                self.n0,
                2 * (d + 1)
            )));
        }
        if self.m == 0 {
            return Err(FrontierError::InvalidConfig("M must be positive".into()));
        }
        if !(self.selection_tolerance > 0.0 && self.selection_tolerance < 1.0) {
            return Err(FrontierError::InvalidConfig(
                "selection tolerance must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn min_child_size(&self) -> usize {
        self.n0.div_ceil(2)
    }
}

/// A proposed split of one region along one coordinate.
#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub partition: Partition,
    pub region: usize,
    pub coord: usize,
    pub knot: f64,
}

/// The sequence of models produced as the partition grows.
#[derive(Debug, Clone, Default)]
pub struct ModelCollection {
    pub entries: Vec<CollectionEntry>,
}

#[derive(Debug, Clone)]
pub struct CollectionEntry {
    pub k: usize,
    pub model: PiecewiseLinearModel,
    pub learning_mse: f64,
}

impl ModelCollection {
    pub fn push(&mut self, model: PiecewiseLinearModel) {
        self.entries.push(CollectionEntry {
            k: model.k(),
            learning_mse: model.learning_mse,
            model,
        });
    }

    pub fn learning_mses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.learning_mse).collect()
    }
}

/// Enumerate admissible split candidates of the current partition.
///
/// For every region, `m` knot observations are drawn uniformly without
/// replacement from the region's members; each knot is applied along every
/// coordinate axis, sending `{x_j <= v_j}` to one child. Candidates leaving
/// either child below `ceil(n0/2)` observations are dropped.
pub fn propose_partitions(
    current: &Partition,
    data: &Dataset,
    params: &CapNlsParams,
    rng: &mut ChaCha8Rng,
) -> Vec<SplitCandidate> {
    let d = data.d();
    let min_child = params.min_child_size();
    let mut candidates = Vec::new();
    for region in 0..current.k {
        let members = current.region_members(region);
        let m = params.m.min(members.len());
        if members.len() < 2 * min_child || m == 0 {
            // no split of this region can satisfy the size rule; skip it
            // without consuming randomness so hopeless regions cost nothing
            continue;
        }
        let picks = rand::seq::index::sample(rng, members.len(), m);
        for pick in picks.iter() {
            let knot_obs = members[pick];
            for coord in 0..d.min(params.l.max(1)) {
                let v = data.inputs()[(knot_obs, coord)];
                let mut assignment = current.assignment.clone();
                let mut low = 0usize;
                let mut high = 0usize;
                for &i in &members {
                    if data.inputs()[(i, coord)] <= v {
                        low += 1;
                    } else {
                        assignment[i] = current.k;
                        high += 1;
                    }
                }
                if low < min_child || high < min_child {
                    continue;
                }
                candidates.push(SplitCandidate {
                    partition: Partition {
                        assignment,
                        k: current.k + 1,
                        min_region_size: min_child,
                    },
                    region,
                    coord,
                    knot: v,
                });
            }
        }
    }
    candidates
}

/// Parsimony rule: the smallest-K entry whose learning MSE is within
/// `tol` (relative) of the largest-K entry's. An absolute floor keeps the
/// rule meaningful on noise-free data, where every entry sits at the
/// numerical noise level and relative comparisons are between rounding
/// errors.
pub fn select_parsimonious(collection: &ModelCollection, tol: f64) -> Result<PiecewiseLinearModel> {
    let last = collection
        .entries
        .last()
        .ok_or_else(|| FrontierError::EstimatorFailure("empty model collection".into()))?;
    let band = ((1.0 + tol) * last.learning_mse).max(1e-12);
    let chosen = collection
        .entries
        .iter()
        .find(|e| e.learning_mse <= band)
        .unwrap_or(last);
    Ok(chosen.model.clone())
}

/// Algorithm: start at `K = 1`, repeatedly score every admissible split by
/// its QP-optimal learning MSE, keep the best, and finally pick the
/// parsimonious model from the collection.
pub fn fit_capnls(
    data: &Dataset,
    params: &CapNlsParams,
    solver: &SolverConfig,
) -> Result<(PiecewiseLinearModel, ModelCollection)> {
    params.validate(data.d())?;
    if data.n() < params.n0 {
        return Err(FrontierError::EstimatorFailure(format!(
            "need at least n0 = {} observations, got {}",
            params.n0,
            data.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut collection = ModelCollection::default();

    let mut current = Partition::single_region(data.n());
    current.min_region_size = params.min_child_size().min(data.n());
    let qp = assemble_qp(data, &current)?;
    let sol = solve(&qp, solver)?;
    let mut current_mse = qp.learning_mse(&sol.beta, data.outputs());
    collection.push(model_from_solution(&qp, &sol, data, solver.kkt_tolerance));

    let mut stagnant = 0usize;
    loop {
        if let Some(max_k) = params.max_k {
            if current.k >= max_k {
                break;
            }
        }
        if params.fast_stop && stagnant >= 2 {
            break;
        }
        let candidates = propose_partitions(&current, data, params, &mut rng);
        if candidates.is_empty() {
            break;
        }
        let scored: Vec<Result<(f64, PiecewiseLinearModel)>> = candidates
            .par_iter()
            .map(|cand| {
                let qp = assemble_qp(data, &cand.partition)?;
                let sol = solve(&qp, solver)?;
                let mse = qp.learning_mse(&sol.beta, data.outputs());
                Ok((mse, model_from_solution(&qp, &sol, data, solver.kkt_tolerance)))
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (idx, res) in scored.iter().enumerate() {
            let (mse, _) = res
                .as_ref()
                .map_err(|e| FrontierError::EstimatorFailure(format!("candidate solve: {e}")))?;
            let better = match best {
                None => true,
                Some((bidx, bmse)) => {
                    let b = &candidates[bidx];
                    let c = &candidates[idx];
                    *mse < bmse
                        || (*mse == bmse
                            && (c.region, c.coord, c.knot.to_bits())
                                < (b.region, b.coord, b.knot.to_bits()))
                }
            };
            if better {
                best = Some((idx, *mse));
            }
        }
        let (bidx, bmse) = best.expect("nonempty candidate list");
        let model = match &scored[bidx] {
            Ok((_, m)) => m.clone(),
            Err(_) => unreachable!(),
        };
        // the relative rule is meaningless at numerically-zero MSE, where
        // every refit "improves" by ~100%; count those as stagnant
        let improvement = if current_mse > 1e-12 {
            (current_mse - bmse) / current_mse
        } else {
            0.0
        };
        if improvement < params.fast_threshold {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        current = candidates[bidx].partition.clone();
        current_mse = bmse;
        collection.push(model);
    }

    let selected = select_parsimonious(&collection, params.selection_tolerance)?;
    Ok((selected, collection))
}

/// CAP-NLS with the fast stopping rule switched on.
pub fn fit_capnls_fast(
    data: &Dataset,
    params: &CapNlsParams,
    solver: &SolverConfig,
) -> Result<(PiecewiseLinearModel, ModelCollection)> {
    let fast = CapNlsParams { fast_stop: true, ..params.clone() };
    fit_capnls(data, &fast, solver)
}
