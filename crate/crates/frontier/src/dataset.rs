use nalgebra::{DMatrix, DVector};

use crate::error::{FrontierError, Result};

/// Observations of `d` strictly positive inputs and one output.
///
/// In simulation mode `true_frontier` holds the noiseless frontier values
/// `f(X_i)`, which the Monte Carlo error metrics are computed against.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    true_frontier: Option<DVector<f64>>,
}

impl Dataset {
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DVector<f64>,
        true_frontier: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (n, d) = inputs.shape();
        if d == 0 {
            return Err(FrontierError::InvalidData("zero input dimension".into()));
        }
        if n < d + 1 {
            return Err(FrontierError::InvalidData(format!(
                "need at least d + 1 = {} observations, got {n}",
                d + 1
            )));
        }
        if outputs.len() != n {
            return Err(FrontierError::InvalidData(format!(
                "outputs length {} does not match {n} observations",
                outputs.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(FrontierError::InvalidData(
                "inputs must be finite and strictly positive".into(),
            ));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(FrontierError::InvalidData("non-finite output".into()));
        }
        if let Some(f) = &true_frontier {
            if f.len() != n {
                return Err(FrontierError::InvalidData(format!(
                    "true_frontier length {} does not match {n} observations",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(FrontierError::InvalidData("non-finite frontier value".into()));
            }
        }
        Ok(Self { inputs, outputs, true_frontier })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn d(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn true_frontier(&self) -> Option<&DVector<f64>> {
        self.true_frontier.as_ref()
    }

    /// Input row `i` as a slice-backed view.
    pub fn input_row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// Restrict the dataset to the given observation indices.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let d = self.d();
        let mut inputs = DMatrix::zeros(idx.len(), d);
        let mut outputs = DVector::zeros(idx.len());
        let mut frontier = self.true_frontier.as_ref().map(|_| DVector::zeros(idx.len()));
        for (r, &i) in idx.iter().enumerate() {
            if i >= self.n() {
                return Err(FrontierError::InvalidData(format!("index {i} out of range")));
            }
            inputs.row_mut(r).copy_from(&self.inputs.row(i));
            outputs[r] = self.outputs[i];
            if let (Some(dst), Some(src)) = (frontier.as_mut(), self.true_frontier.as_ref()) {
                dst[r] = src[i];
            }
        }
        Dataset::new(inputs, outputs, frontier)
    }

    /// Sample variance of the outputs.
    pub fn output_variance(&self) -> f64 {
        let n = self.n() as f64;
        let mean = self.outputs.mean();
        self.outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        let err = Dataset::new(
            mat(3, 1, &[1.0, 0.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_too_few_observations() {
        let err = Dataset::new(
            mat(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0]),
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_frontier_length_mismatch() {
        let err = Dataset::new(
            mat(3, 1, &[1.0, 2.0, 3.0]),
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            Some(DVector::from_vec(vec![1.0, 2.0])),
        );
        assert!(err.is_err());
    }

    #[test]
    fn subset_preserves_rows() {
        let data = Dataset::new(
            mat(4, 1, &[1.0, 2.0, 3.0, 4.0]),
            DVector::from_vec(vec![10.0, 20.0, 30.0, 40.0]),
            Some(DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])),
        )
        .unwrap();
        let sub = data.subset(&[3, 1]).unwrap();
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.outputs()[0], 40.0);
        assert_eq!(sub.inputs()[(1, 0)], 2.0);
        assert_eq!(sub.true_frontier().unwrap()[0], 4.0);
    }
}
