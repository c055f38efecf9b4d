//! Monte Carlo laboratory: Cobb-Douglas data generation with uniform
//! inputs and Gaussian noise, the frontier/output error decomposition on
//! learning and testing sets, and the experiment protocol that produces
//! the benchmark metric tables.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};
use crate::estimators::{
    CapEstimator, CapNlsEstimator, CapNlsParams, CdaEstimator, CdmEstimator, CnlsEstimator,
    Estimator,
};
use crate::qp::SolverConfig;

/// Data-generating process: `Y = prod_j X_j^{a_j} + Normal(0, sigma^2)`
/// with inputs i.i.d. uniform on `[input_low, input_high]^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DGPSpec {
    pub d: usize,
    pub exponents: Vec<f64>,
    pub sigma: f64,
    pub input_low: f64,
    pub input_high: f64,
}

impl DGPSpec {
    pub fn new(exponents: Vec<f64>, sigma: f64) -> Self {
        Self { d: exponents.len(), exponents, sigma, input_low: 0.1, input_high: 1.0 }
    }

    /// The two-input benchmark: exponents (0.4, 0.5).
    pub fn bivariate(sigma: f64) -> Self {
        Self::new(vec![0.4, 0.5], sigma)
    }

    /// The three-input benchmark: exponents (0.4, 0.3, 0.2).
    pub fn trivariate(sigma: f64) -> Self {
        Self::new(vec![0.4, 0.3, 0.2], sigma)
    }

    /// The four-input benchmark: exponents (0.3, 0.25, 0.25, 0.1).
    pub fn quadrivariate(sigma: f64) -> Self {
        Self::new(vec![0.3, 0.25, 0.25, 0.1], sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.exponents.len() != self.d {
            return Err(FrontierError::InvalidConfig("exponent count must equal d".into()));
        }
        if self.exponents.iter().any(|&a| a < 0.0) {
            return Err(FrontierError::InvalidConfig("exponents must be nonnegative".into()));
        }
        if self.sigma < 0.0 {
            return Err(FrontierError::InvalidConfig("sigma must be nonnegative".into()));
        }
        if !(0.0 < self.input_low && self.input_low < self.input_high) {
            return Err(FrontierError::InvalidConfig(
                "need 0 < input_low < input_high".into(),
            ));
        }
        Ok(())
    }

    pub fn frontier_value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.exponents)
            .map(|(&xi, &a)| xi.powf(a))
            .product()
    }
}

/// Draw a dataset of size `n` from the DGP; the noiseless frontier values
/// ride along for frontier-error metrics.
pub fn generate(spec: &DGPSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    spec.validate()?;
    let inputs = DMatrix::from_fn(n, spec.d, |_, _| {
        rng.gen_range(spec.input_low..spec.input_high)
    });
    let frontier = DVector::from_fn(n, |i, _| {
        let row: Vec<f64> = inputs.row(i).iter().copied().collect();
        spec.frontier_value(&row)
    });
    let outputs = DVector::from_fn(n, |i, _| {
        let z: f64 = rng.sample(StandardNormal);
        frontier[i] + spec.sigma * z
    });
    Dataset::new(inputs, outputs, Some(frontier))
}

/// Which estimator a simulation cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    CapNls,
    CapNlsFast,
    Cap,
    Cnls,
    Cda,
    Cdm,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::CapNls => "capnls",
            EstimatorKind::CapNlsFast => "capnls_fast",
            EstimatorKind::Cap => "cap",
            EstimatorKind::Cnls => "cnls",
            EstimatorKind::Cda => "cda",
            EstimatorKind::Cdm => "cdm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "capnls" | "cap-nls" => Ok(EstimatorKind::CapNls),
            "capnls_fast" | "capnls-fast" | "cap-nlsf" => Ok(EstimatorKind::CapNlsFast),
            "cap" => Ok(EstimatorKind::Cap),
            "cnls" => Ok(EstimatorKind::Cnls),
            "cda" => Ok(EstimatorKind::Cda),
            "cdm" => Ok(EstimatorKind::Cdm),
            other => Err(FrontierError::InvalidConfig(format!("unknown estimator '{other}'"))),
        }
    }

    /// Construct the estimator for dimension `d` with a replicate-specific
    /// seed for any internal randomness.
    pub fn build(&self, d: usize, seed: u64, max_k: Option<usize>) -> Box<dyn Estimator> {
        let mut params = CapNlsParams::default_for(d);
        params.rng_seed = seed;
        if max_k.is_some() {
            params.max_k = max_k;
        }
        match self {
            EstimatorKind::CapNls => Box::new(CapNlsEstimator {
                params,
                solver: SolverConfig::default(),
            }),
            EstimatorKind::CapNlsFast => Box::new(CapNlsEstimator {
                params: CapNlsParams { fast_stop: true, ..params },
                solver: SolverConfig::default(),
            }),
            EstimatorKind::Cap => Box::new(CapEstimator { params }),
            EstimatorKind::Cnls => Box::new(CnlsEstimator::default()),
            EstimatorKind::Cda => Box::new(CdaEstimator::default()),
            EstimatorKind::Cdm => Box::new(CdmEstimator),
        }
    }
}

/// Full experiment grid: every learning size crossed with every full-set
/// size it fits inside, for every estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgp: DGPSpec,
    pub full_sizes: Vec<usize>,
    pub learning_sizes: Vec<usize>,
    /// Learning-set replicates.
    pub v: usize,
    /// Fresh in-sample noise redraws per replicate.
    pub w: usize,
    /// Testing-set size for predictive errors.
    pub n_t_f: usize,
    pub estimators: Vec<EstimatorKind>,
    pub rng_seed: u64,
    /// Optional override of the partition-growth cap.
    pub max_k: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.v < 1 || self.w < 1 {
            return Err(FrontierError::InvalidConfig("need V >= 1 and W >= 1".into()));
        }
        if self.n_t_f < 1 {
            return Err(FrontierError::InvalidConfig("testing size must be positive".into()));
        }
        let max_full = self.full_sizes.iter().max().copied().unwrap_or(0);
        if self.learning_sizes.iter().any(|&l| l > max_full) {
            return Err(FrontierError::InvalidConfig(
                "every learning size must fit inside some full size".into(),
            ));
        }
        Ok(())
    }
}

/// One aggregated cell of the experiment grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimator: String,
    pub n_l: usize,
    pub n_f: usize,
    pub sigma: f64,
    pub d: usize,
    /// In-sample frontier error on the learning points.
    pub mse_is_f: f64,
    /// Predictive frontier error on fresh testing draws.
    pub mse_f: f64,
    /// Full-set frontier blend.
    pub mse_fs_f: f64,
    /// In-sample output error, averaged over W fresh noise redraws.
    pub mse_is_y: f64,
    /// Predictive output error.
    pub mse_y: f64,
    /// Full-set output blend.
    pub mse_fs_y: f64,
    pub mse_fs_y_over_var_y: f64,
    pub k_avg: Option<f64>,
    pub runtime_seconds: f64,
    pub failed_replicates: usize,
}

/// Seed mixing for independent replicate streams (splitmix64 over the
/// packed cell coordinates).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

struct ReplicateMetrics {
    mse_is_f: f64,
    mse_f: f64,
    mse_is_y: f64,
    mse_y: f64,
    var_y_fs: f64,
    k: Option<f64>,
    runtime: f64,
}

fn run_replicate(
    config: &ExperimentConfig,
    kind: EstimatorKind,
    n_l: usize,
    n_f: usize,
    v: usize,
) -> Result<ReplicateMetrics> {
    let spec = &config.dgp;
    let seed = derive_seed(config.rng_seed, &[kind as u64, n_l as u64, n_f as u64, v as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let full = generate(spec, n_f, &mut rng)?;
    let learn = if n_l == n_f {
        full.clone()
    } else {
        let idx = rand::seq::index::sample(&mut rng, n_f, n_l).into_vec();
        full.subset(&idx)?
    };
    let estimator = kind.build(spec.d, derive_seed(seed, &[1]), config.max_k);

    let started = Instant::now();
    let fit = estimator.fit(&learn)?;
    let runtime = started.elapsed().as_secs_f64();

    let f_learn = learn.true_frontier().expect("simulated data carries the frontier");
    let fitted = fit.fitted();
    let mse_is_f = (fitted - f_learn).norm_squared() / n_l as f64;

    // in-sample output error: average squared error against W fresh
    // realizations y = f + eps at the learning inputs
    let mut mse_is_y = 0.0;
    for _ in 0..config.w {
        let mut acc = 0.0;
        for i in 0..n_l {
            let z: f64 = rng.sample(StandardNormal);
            let y_new = f_learn[i] + spec.sigma * z;
            acc += (fitted[i] - y_new).powi(2);
        }
        mse_is_y += acc / n_l as f64;
    }
    mse_is_y /= config.w as f64;

    // predictive errors on a fresh testing set
    let test = generate(spec, config.n_t_f, &mut rng)?;
    let pred = fit.predict(test.inputs())?;
    let f_test = test.true_frontier().expect("simulated data carries the frontier");
    let mse_f = (&pred - f_test).norm_squared() / config.n_t_f as f64;
    let mse_y = (&pred - test.outputs()).norm_squared() / config.n_t_f as f64;

    Ok(ReplicateMetrics {
        mse_is_f,
        mse_f,
        mse_is_y,
        mse_y,
        var_y_fs: full.output_variance(),
        k: fit.complexity(),
        runtime,
    })
}

/// Run one estimator over the full (n_l, n_f) grid of the config.
pub fn sim_errors(config: &ExperimentConfig, kind: EstimatorKind) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &n_f in &config.full_sizes {
        for &n_l in &config.learning_sizes {
            if n_l > n_f {
                continue;
            }
            rows.push(grid_cell(config, kind, n_l, n_f)?);
        }
    }
    Ok(rows)
}

fn grid_cell(
    config: &ExperimentConfig,
    kind: EstimatorKind,
    n_l: usize,
    n_f: usize,
) -> Result<MetricsRow> {
    let results: Vec<Result<ReplicateMetrics>> = (0..config.v)
        .into_par_iter()
        .map(|v| run_replicate(config, kind, n_l, n_f, v))
        .collect();
    let ok: Vec<&ReplicateMetrics> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failed = config.v - ok.len();
    if (failed as f64) > 0.10 * config.v as f64 || ok.is_empty() {
        return Err(FrontierError::EstimatorFailure(format!(
            "{failed} of {} replicates failed for {} at n_l={n_l}, n_f={n_f}",
            config.v,
            kind.name()
        )));
    }
    let m = ok.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateMetrics) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / m;
    let mse_is_f = mean(&|r| r.mse_is_f);
    let mse_f = mean(&|r| r.mse_f);
    let mse_is_y = mean(&|r| r.mse_is_y);
    let mse_y = mean(&|r| r.mse_y);
    let var_y = mean(&|r| r.var_y_fs);
    let w_l = n_l as f64 / n_f as f64;
    let w_t = (n_f - n_l) as f64 / n_f as f64;
    let mse_fs_f = w_l * mse_is_f + w_t * mse_f;
    let mse_fs_y = w_l * mse_is_y + w_t * mse_y;
    let ks: Vec<f64> = ok.iter().filter_map(|r| r.k).collect();
    Ok(MetricsRow {
        estimator: kind.name().to_string(),
        n_l,
        n_f,
        sigma: config.dgp.sigma,
        d: config.dgp.d,
        mse_is_f,
        mse_f,
        mse_fs_f,
        mse_is_y,
        mse_y,
        mse_fs_y,
        mse_fs_y_over_var_y: mse_fs_y / var_y,
        k_avg: if ks.is_empty() {
            None
        } else {
            Some(ks.iter().sum::<f64>() / ks.len() as f64)
        },
        runtime_seconds: mean(&|r| r.runtime),
        failed_replicates: failed,
    })
}

/// The full experiment: every estimator over the grid, plus a manifest
/// recording the configuration for exact reruns.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut rows = Vec::new();
    for &kind in &config.estimators {
        rows.extend(sim_errors(config, kind)?);
    }
    Ok(ExperimentResult { config: config.clone(), rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "estimator,n_l,n_f,sigma,d,mse_is_f,mse_f,mse_fs_f,mse_is_y,mse_y,mse_fs_y,\
             mse_fs_y_over_var_y,k_avg,runtime_seconds,failed_replicates\n",
        );
        for r in &self.rows {
            let k = r.k_avg.map(|k| format!("{k:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{},{:.4},{}\n",
                r.estimator,
                r.n_l,
                r.n_f,
                r.sigma,
                r.d,
                r.mse_is_f,
                r.mse_f,
                r.mse_fs_f,
                r.mse_is_y,
                r.mse_y,
                r.mse_fs_y,
                r.mse_fs_y_over_var_y,
                k,
                r.runtime_seconds,
                r.failed_replicates
            ));
        }
        out
    }

    /// Provenance manifest: the config and seed that produced the rows.
    pub fn manifest(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "config": self.config,
            "rows": self.rows.len(),
        }))?)
    }
}
