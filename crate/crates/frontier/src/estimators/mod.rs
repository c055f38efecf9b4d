//! The functional estimators: CNLS, CAP-NLS, monotone CAP, and the two
//! Cobb-Douglas fits, behind one uniform interface so the selection and
//! simulation machinery can treat them opaquely.

pub mod baseline;
pub mod cap;
pub mod capnls;
pub mod cnls;
pub mod cobb_douglas;

pub use cap::fit_cap;
#[doc(hidden)]
pub use cap::fit_cap_collection;
pub use capnls::{
    fit_capnls, fit_capnls_fast, propose_partitions, select_parsimonious, CapNlsParams,
    ModelCollection,
};
pub use cnls::fit_cnls;
pub use cobb_douglas::{fit_cd_additive, fit_cd_multiplicative, CdOptions, CobbDouglasModel};

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::model::PiecewiseLinearModel;
use crate::qp::SolverConfig;

/// A fitted production function, evaluable in sample and out of sample.
pub trait FittedModel: Send + Sync {
    /// Fitted values at the learning inputs.
    fn fitted(&self) -> &DVector<f64>;
    /// Out-of-sample values (min-envelope for piecewise-linear fits).
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>>;
    fn learning_mse(&self) -> f64;
    /// Model complexity: number of hyperplanes where that is meaningful.
    fn complexity(&self) -> Option<f64>;
}

/// A functional estimator that can be refit on arbitrary datasets.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    /// Smallest learning set the estimator accepts for inputs of dimension `d`.
    fn min_fit_size(&self, d: usize) -> usize;
    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>>;
}

/// Piecewise-linear fit together with its cached learning values.
pub struct PiecewiseFit {
    pub model: PiecewiseLinearModel,
    fitted: DVector<f64>,
}

impl PiecewiseFit {
    pub fn new(model: PiecewiseLinearModel, data: &Dataset) -> Result<Self> {
        let fitted = model.evaluate_in_sample(data)?;
        Ok(Self { model, fitted })
    }
}

impl FittedModel for PiecewiseFit {
    fn fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.model.predict(inputs)
    }

    fn learning_mse(&self) -> f64 {
        self.model.learning_mse
    }

    fn complexity(&self) -> Option<f64> {
        Some(self.model.k() as f64)
    }
}

/// CNLS behind the uniform interface.
pub struct CnlsEstimator {
    pub solver: SolverConfig,
}

impl Default for CnlsEstimator {
    fn default() -> Self {
        // No ridge: the CNLS slopes are not identified (the optimum is a
        // face, not a point), and a ridge term would quietly select the
        // min-norm representative, taming the out-of-sample envelope. The
        // un-regularized solve returns whatever point the central path
        // lands on, which is the estimator's documented extrapolation
        // behavior. Fitted values and in-sample MSE are identical either way.
        Self {
            solver: SolverConfig { ridge: 0.0, ..SolverConfig::default() },
        }
    }
}

impl Estimator for CnlsEstimator {
    fn name(&self) -> &'static str {
        "cnls"
    }

    fn min_fit_size(&self, d: usize) -> usize {
        (d + 1).max(2)
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let model = fit_cnls(data, &self.solver)?;
        Ok(Box::new(PiecewiseFit::new(model, data)?))
    }
}

/// CAP-NLS behind the uniform interface.
pub struct CapNlsEstimator {
    pub params: CapNlsParams,
    pub solver: SolverConfig,
}

impl Estimator for CapNlsEstimator {
    fn name(&self) -> &'static str {
        if self.params.fast_stop { "capnls_fast" } else { "capnls" }
    }

    fn min_fit_size(&self, _d: usize) -> usize {
        self.params.n0
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let (model, _) = fit_capnls(data, &self.params, &self.solver)?;
        Ok(Box::new(PiecewiseFit::new(model, data)?))
    }
}

/// Monotone CAP behind the uniform interface.
pub struct CapEstimator {
    pub params: CapNlsParams,
}

impl Estimator for CapEstimator {
    fn name(&self) -> &'static str {
        "cap"
    }

    fn min_fit_size(&self, _d: usize) -> usize {
        self.params.n0
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let model = fit_cap(data, &self.params)?;
        Ok(Box::new(PiecewiseFit::new(model, data)?))
    }
}

/// Additive-error Cobb-Douglas (CDA) behind the uniform interface.
pub struct CdaEstimator {
    pub options: CdOptions,
}

impl Default for CdaEstimator {
    fn default() -> Self {
        Self { options: CdOptions::default() }
    }
}

impl Estimator for CdaEstimator {
    fn name(&self) -> &'static str {
        "cda"
    }

    fn min_fit_size(&self, d: usize) -> usize {
        d + 2
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let model = cobb_douglas::fit_cd_additive_opts(data, &self.options)?;
        Ok(Box::new(cobb_douglas::CobbDouglasFit::new(model, data)))
    }
}

/// Multiplicative-error Cobb-Douglas (CDM) behind the uniform interface.
#[derive(Default)]
pub struct CdmEstimator;

impl Estimator for CdmEstimator {
    fn name(&self) -> &'static str {
        "cdm"
    }

    fn min_fit_size(&self, d: usize) -> usize {
        d + 2
    }

    fn fit(&self, data: &Dataset) -> Result<Box<dyn FittedModel>> {
        let model = fit_cd_multiplicative(data)?;
        Ok(Box::new(cobb_douglas::CobbDouglasFit::new(model, data)))
    }
}
