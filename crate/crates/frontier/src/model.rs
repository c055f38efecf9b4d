use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};

/// Default feasibility tolerance, matched to the QP solver's KKT tolerance.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-6;

/// Observation-to-basis-region assignment.
///
/// Region indices are `0..k` internally; the JSON model document uses
/// one-based indices to match the documented schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub k: usize,
    pub min_region_size: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, k: usize, min_region_size: usize) -> Result<Self> {
        if k == 0 || min_region_size == 0 {
            return Err(FrontierError::InvalidPartition(
                "k and min_region_size must be positive".into(),
            ));
        }
        let mut counts = vec![0usize; k];
        for &r in &assignment {
            if r >= k {
                return Err(FrontierError::InvalidPartition(format!(
                    "region index {r} out of range for k = {k}"
                )));
            }
            counts[r] += 1;
        }
        if let Some(region) = counts.iter().position(|&c| c < min_region_size) {
            return Err(FrontierError::InvalidPartition(format!(
                "region {region} has {} observations, need at least {min_region_size}",
                counts[region]
            )));
        }
        Ok(Self { assignment, k, min_region_size })
    }

    /// Trivial single-region partition over `n` observations.
    pub fn single_region(n: usize) -> Self {
        Self { assignment: vec![0; n], k: 1, min_region_size: n.max(1) }
    }

    /// One singleton region per observation (the CNLS case).
    pub fn identity(n: usize) -> Self {
        Self { assignment: (0..n).collect(), k: n, min_region_size: 1 }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn region_members(&self, region: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == region)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &r in &self.assignment {
            counts[r] += 1;
        }
        counts
    }
}

/// A single fitted hyperplane: intercept plus nonnegative slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl Hyperplane {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
    }
}

/// A fitted concave piecewise-linear function: `k` hyperplanes plus the
/// observation assignment from the learning fit.
///
/// In-sample values use the assigned plane; out-of-sample values use the
/// lower envelope (pointwise minimum), the unique concave extension
/// consistent with the Afriat constraints.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearModel {
    pub hyperplanes: Vec<Hyperplane>,
    pub partition: Partition,
    pub learning_mse: f64,
    pub feasibility_tolerance: f64,
}

/// Diagnostics from re-checking a fitted model against its learning data.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDiagnostics {
    /// Largest amount by which an assigned-plane value exceeds another
    /// plane's value at a learning input.
    pub max_afriat_violation: f64,
    /// Smallest slope entry across all hyperplanes.
    pub min_slope: f64,
    /// Learning MSE recomputed from the assigned-plane values.
    pub recomputed_mse: f64,
    pub monotonicity_ok: bool,
    pub afriat_ok: bool,
}

impl PiecewiseLinearModel {
    pub fn k(&self) -> usize {
        self.hyperplanes.len()
    }

    pub fn d(&self) -> usize {
        self.hyperplanes.first().map_or(0, |h| h.slopes.len())
    }

    /// Assigned-plane values at the learning inputs.
    pub fn evaluate_in_sample(&self, data: &Dataset) -> Result<DVector<f64>> {
        if self.partition.n() != data.n() {
            return Err(FrontierError::DimensionMismatch(format!(
                "partition covers {} observations, dataset has {}",
                self.partition.n(),
                data.n()
            )));
        }
        if self.d() != data.d() {
            return Err(FrontierError::DimensionMismatch(format!(
                "model has {} inputs, dataset has {}",
                self.d(),
                data.d()
            )));
        }
        Ok(DVector::from_fn(data.n(), |i, _| {
            let x = data.inputs().row(i);
            let h = &self.hyperplanes[self.partition.assignment[i]];
            h.intercept + h.slopes.iter().zip(x.iter()).map(|(s, v)| s * v).sum::<f64>()
        }))
    }

    /// Min-envelope value at a single point.
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(FrontierError::DimensionMismatch(format!(
                "point has {} coordinates, model expects {}",
                x.len(),
                self.d()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FrontierError::InvalidData("non-finite prediction input".into()));
        }
        Ok(self
            .hyperplanes
            .iter()
            .map(|h| h.value(x))
            .fold(f64::INFINITY, f64::min))
    }

    /// Min-envelope values at the rows of `x_new`.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        let rows: Vec<f64> = (0..x_new.nrows())
            .map(|i| {
                let x: Vec<f64> = x_new.row(i).iter().copied().collect();
                self.predict_one(&x)
            })
            .collect::<Result<_>>()?;
        Ok(DVector::from_vec(rows))
    }

    /// Recheck Afriat feasibility, monotonicity and the stored learning MSE.
    pub fn validate(&self, data: &Dataset) -> Result<ModelDiagnostics> {
        let fitted = self.evaluate_in_sample(data)?;
        let mut max_violation: f64 = 0.0;
        for i in 0..data.n() {
            let x = data.input_row(i);
            let assigned = fitted[i];
            for h in &self.hyperplanes {
                let v = assigned - h.value(&x);
                max_violation = max_violation.max(v);
            }
        }
        let min_slope = self
            .hyperplanes
            .iter()
            .flat_map(|h| h.slopes.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let residuals = data.outputs() - &fitted;
        let recomputed_mse = residuals.iter().map(|r| r * r).sum::<f64>() / data.n() as f64;
        Ok(ModelDiagnostics {
            max_afriat_violation: max_violation,
            min_slope,
            recomputed_mse,
            monotonicity_ok: min_slope >= -self.feasibility_tolerance,
            afriat_ok: max_violation <= self.feasibility_tolerance,
        })
    }

    /// Number of hyperplanes distinct up to `tol` in any coefficient.
    ///
    /// CNLS fits one plane per observation but most coincide; this is the
    /// complexity measure reported alongside K for partition-based fits.
    pub fn distinct_hyperplanes(&self, tol: f64) -> usize {
        let mut reps: Vec<&Hyperplane> = Vec::new();
        for h in &self.hyperplanes {
            let dup = reps.iter().any(|r| {
                (r.intercept - h.intercept).abs() <= tol
                    && r.slopes
                        .iter()
                        .zip(&h.slopes)
                        .all(|(a, b)| (a - b).abs() <= tol)
            });
            if !dup {
                reps.push(h);
            }
        }
        reps.len()
    }

    /// Serialize to the documented JSON schema:
    /// `{K, hyperplanes:[{intercept, slopes}], assignment, learning_mse}`
    /// with one-based assignment indices.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "K": self.k(),
            "hyperplanes": self.hyperplanes,
            "assignment": self.partition.assignment.iter().map(|r| r + 1).collect::<Vec<_>>(),
            "learning_mse": self.learning_mse,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_value(v.clone())?;
        let assignment: Vec<usize> = doc
            .assignment
            .iter()
            .map(|&r| {
                if r == 0 || r > doc.k {
                    Err(FrontierError::InvalidPartition(format!(
                        "assignment index {r} outside 1..{}",
                        doc.k
                    )))
                } else {
                    Ok(r - 1)
                }
            })
            .collect::<Result<_>>()?;
        if doc.hyperplanes.len() != doc.k {
            return Err(FrontierError::InvalidData(format!(
                "document lists {} hyperplanes but K = {}",
                doc.hyperplanes.len(),
                doc.k
            )));
        }
        Ok(Self {
            hyperplanes: doc.hyperplanes,
            partition: Partition {
                assignment,
                k: doc.k,
                min_region_size: 1,
            },
            learning_mse: doc.learning_mse,
            feasibility_tolerance: DEFAULT_FEASIBILITY_TOL,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    #[serde(rename = "K")]
    k: usize,
    hyperplanes: Vec<Hyperplane>,
    assignment: Vec<usize>,
    learning_mse: f64,
}
