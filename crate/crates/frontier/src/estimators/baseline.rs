//! Reference estimators with closed-form behaviour, used to exercise the
//! selection machinery against values that can be derived by hand: an
//! ordinary-least-squares plane and a constant mean.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};

use super::{Estimator, FittedModel};

fn augment(inputs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = inputs.nrows();
    let d = inputs.ncols();
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { inputs[(i, j - 1)] })
}

/// Unconstrained linear regression with intercept.
#[derive(Default)]
pub struct OlsEstimator;

pub struct OlsFit {
    pub beta: DVector<f64>,
    fitted: DVector<f64>,
    learning_mse: f64,
}

impl Estimator for OlsEstimator {
    fn name(&self) -> &'static str {
        "ols"
    }

    fn min_fit_size(&self, d: usize) -> usize {
        d + 1
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let x = augment(data.inputs());
        let beta = x
            .clone()
            .svd(true, true)
            .solve(data.outputs(), 1e-12)
            .map_err(|e| FrontierError::EstimatorFailure(format!("ols svd: {e}")))?;
        let fitted = &x * &beta;
        let learning_mse = (data.outputs() - &fitted).norm_squared() / data.n() as f64;
        Ok(Box::new(OlsFit { beta, fitted, learning_mse }))
    }
}

impl FittedModel for OlsFit {
    fn fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        if inputs.ncols() + 1 != self.beta.len() {
            return Err(FrontierError::DimensionMismatch(format!(
                "ols fit expects {} inputs, got {}",
                self.beta.len() - 1,
                inputs.ncols()
            )));
        }
        Ok(&augment(inputs) * &self.beta)
    }

    fn learning_mse(&self) -> f64 {
        self.learning_mse
    }

    fn complexity(&self) -> Option<f64> {
        Some(self.beta.len() as f64)
    }
}

/// Predicts the learning-sample mean everywhere.
#[derive(Default)]
pub struct MeanEstimator;

pub struct MeanFit {
    pub mean: f64,
    fitted: DVector<f64>,
    learning_mse: f64,
}

impl Estimator for MeanEstimator {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn min_fit_size(&self, _d: usize) -> usize {
        1
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let mean = data.outputs().mean();
        let fitted = DVector::from_element(data.n(), mean);
        let learning_mse = (data.outputs() - &fitted).norm_squared() / data.n() as f64;
        Ok(Box::new(MeanFit { mean, fitted, learning_mse }))
    }
}

impl FittedModel for MeanFit {
    fn fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(inputs.nrows(), self.mean))
    }

    fn learning_mse(&self) -> f64 {
        self.learning_mse
    }

    fn complexity(&self) -> Option<f64> {
        Some(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ols_matches_normal_equations_on_exact_line() {
        let inputs = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let outputs = DVector::from_fn(4, |i, _| 3.0 + 0.5 * inputs[(i, 0)]);
        let data = Dataset::new(inputs, outputs, None).unwrap();
        let fit = OlsEstimator.fit(&data).unwrap();
        assert!(fit.learning_mse() <= 1e-20);
        let test = DMatrix::from_row_slice(1, 1, &[10.0]);
        assert_relative_eq!(fit.predict(&test).unwrap()[0], 8.0, epsilon = 1e-8);
    }

    #[test]
    fn mean_fit_learning_mse_is_variance() {
        let inputs = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let outputs = DVector::from_vec(vec![1.0, 2.0, 3.0, 6.0]);
        let data = Dataset::new(inputs, outputs.clone(), None).unwrap();
        let fit = MeanEstimator.fit(&data).unwrap();
        let mean = outputs.mean();
        let var = outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 4.0;
        assert_relative_eq!(fit.learning_mse(), var, epsilon = 1e-12);
    }
}
