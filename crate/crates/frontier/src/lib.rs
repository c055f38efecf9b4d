//! Shape-constrained production function estimation and finite-population
//! model selection.
//!
//! The crate fits concave, monotone piecewise-linear production functions to
//! observed input/output data and compares functional estimators by a
//! survey-size-weighted blend of in-sample and predictive error.
//!
//! The pieces fit together like this:
//!
//! * [`dataset`] holds observations: an `n x d` matrix of positive inputs and
//!   an output vector, optionally with the true frontier in simulation mode.
//! * [`model`] defines the fitted object, a collection of hyperplanes with an
//!   observation-to-region assignment, evaluated out of sample by the
//!   min-envelope rule.
//! * [`qp`] assembles and solves the block-structured convex quadratic
//!   programs behind the Afriat-constrained least-squares fits.
//! * [`estimators`] implements the functional estimators: CNLS, CAP-NLS (with
//!   a fast stopping variant), monotone CAP, and the additive and
//!   multiplicative Cobb-Douglas fits.
//! * [`selection`] estimates predictive error by repeated learning-testing,
//!   in-sample optimism by a parametric bootstrap, and combines them into
//!   full-set errors and R-squared summaries for method comparison.
//! * [`simlab`] generates Cobb-Douglas Monte Carlo data and runs the
//!   benchmarking protocol that produces per-estimator metric tables.
//! * [`survey`] ingests KLEMS-style survey files, builds value-added industry
//!   datasets, and produces subsample-size curves.
//!
//! A quick end-to-end fit:
//!
//! ```
//! use frontier::dataset::Dataset;
//! use frontier::estimators::capnls::{fit_capnls, CapNlsParams};
//! use frontier::qp::SolverConfig;
//! use nalgebra::{DMatrix, DVector};
//!
//! // y = x1 + x2, a linear (hence concave) truth.
//! let inputs = DMatrix::from_row_slice(8, 2, &[
//!     0.2, 0.3, 0.4, 0.9, 0.5, 0.5, 0.7, 0.2,
//!     0.9, 0.8, 0.3, 0.6, 0.6, 0.9, 0.8, 0.4,
//! ]);
//! let outputs = DVector::from_fn(8, |i, _| inputs[(i, 0)] + inputs[(i, 1)]);
//! let data = Dataset::new(inputs, outputs, None).unwrap();
//!
//! let params = CapNlsParams::default_for(2);
//! let (model, _collection) = fit_capnls(&data, &params, &SolverConfig::default()).unwrap();
//! assert_eq!(model.k(), 1); // no split improves on the exact linear fit
//! assert!(model.learning_mse < 1e-10);
//! ```

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod model;
pub mod nnls;
pub mod qp;
pub mod selection;
pub mod simlab;
pub mod survey;

pub use dataset::Dataset;
pub use error::FrontierError;
pub use model::{Hyperplane, Partition, PiecewiseLinearModel};
