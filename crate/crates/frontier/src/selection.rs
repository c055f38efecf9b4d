//! Finite-population model selection: repeated learning-testing (RLT)
//! predictive error, parametric-bootstrap optimism for the in-sample
//! error, the full-set blend of the two, and the R² summaries used to
//! compare estimators on a fixed survey population.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};
use crate::estimators::{fit_cnls, Estimator};
use crate::qp::SolverConfig;

/// Repeated learning-testing configuration: learning fractions, replicate
/// count, and the base seed from which per-replicate streams derive.
#[derive(Debug, Clone)]
pub struct RLTConfig {
    pub fractions: Vec<f64>,
    pub v: usize,
    pub rng_seed: u64,
}

impl Default for RLTConfig {
    fn default() -> Self {
        Self { fractions: vec![0.2, 0.3, 0.4, 0.5], v: 100, rng_seed: 0 }
    }
}

impl RLTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v < 2 {
            return Err(FrontierError::InvalidConfig("need V >= 2 replicates".into()));
        }
        // 1.0 denotes the census case (no testing observations); RLT
        // itself requires a strict fraction, enforced where it is drawn
        if self.fractions.iter().any(|&f| !(0.0 < f && f <= 1.0)) {
            return Err(FrontierError::InvalidConfig(
                "learning fractions must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Parametric-bootstrap configuration for the optimism estimate.
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub b: usize,
    /// Variance inflation multiplier `c >= 1` on the bootstrap noise.
    pub c: f64,
    pub rng_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 500, c: 1.0, rng_seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(FrontierError::InvalidConfig("need B >= 2 replicates".into()));
        }
        if self.c < 1.0 {
            return Err(FrontierError::InvalidConfig(
                "variance inflation c must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// All error components for one estimator at one learning fraction.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorEstimates {
    pub mse_learn: f64,
    pub mse_rlt: f64,
    pub optimism: f64,
    /// `mse_learn + optimism`: the covariance-penalty estimate of the
    /// in-sample prediction error.
    pub err_insample: f64,
    pub err_fullset: f64,
    pub r2_fs: f64,
    pub r2_pred: f64,
    /// Per-replicate testing MSEs behind `mse_rlt`.
    pub per_replicate: Vec<f64>,
}

/// One estimator at one fraction within a comparison grid.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub fraction: f64,
    pub estimator: String,
    pub r2_fs: f64,
    pub r2_pred: f64,
    /// Average selected model size across RLT replicates, where the
    /// estimator reports one.
    pub k_avg: Option<f64>,
    /// Within the tie band of the best estimator at this fraction.
    pub best: bool,
}

/// Comparison grid over (estimator, fraction) with tie-band winners.
#[derive(Debug, Clone, Serialize)]
pub struct MethodComparison {
    pub dataset: String,
    pub rows: Vec<ComparisonRow>,
    /// Estimators that failed outright, with the reported error.
    pub failures: Vec<(String, String)>,
}

/// Absolute R² tie band within which estimators are declared tied.
pub const TIE_BAND: f64 = 0.02;

/// Maximum tolerated fraction of failed replicates in RLT and bootstrap.
const MAX_FAILURE_FRACTION: f64 = 0.10;

struct RltDetail {
    mse_rlt: f64,
    per_replicate: Vec<f64>,
    k_avg: Option<f64>,
}

fn rlt_detail(
    data: &Dataset,
    estimator: &dyn Estimator,
    fraction: f64,
    cfg: &RLTConfig,
) -> Result<RltDetail> {
    cfg.validate()?;
    let n = data.n();
    let n_l = ((fraction * n as f64).floor() as usize).max(1);
    if n_l >= n {
        return Err(FrontierError::InvalidConfig(format!(
            "learning fraction {fraction} leaves no testing observations"
        )));
    }
    if n_l < estimator.min_fit_size(data.d()) {
        return Err(FrontierError::InvalidConfig(format!(
            "learning size {} below the minimum fit size {} of {}",
            n_l,
            estimator.min_fit_size(data.d()),
            estimator.name()
        )));
    }

    let results: Vec<Result<(f64, Option<f64>)>> = (0..cfg.v)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ r as u64);
            let learn_idx = rand::seq::index::sample(&mut rng, n, n_l).into_vec();
            let mut in_learn = vec![false; n];
            for &i in &learn_idx {
                in_learn[i] = true;
            }
            let test_idx: Vec<usize> = (0..n).filter(|&i| !in_learn[i]).collect();
            let learn = data.subset(&learn_idx)?;
            let test = data.subset(&test_idx)?;
            let fit = estimator.fit(&learn)?;
            let pred = fit.predict(test.inputs())?;
            let mse = (test.outputs() - &pred).norm_squared() / test.n() as f64;
            Ok((mse, fit.complexity()))
        })
        .collect();

    let mut per_replicate = Vec::with_capacity(cfg.v);
    let mut ks = Vec::new();
    let mut failures = 0usize;
    for res in results {
        match res {
            Ok((mse, k)) => {
                per_replicate.push(mse);
                if let Some(k) = k {
                    ks.push(k);
                }
            }
            Err(_) => failures += 1,
        }
    }
    if (failures as f64) > MAX_FAILURE_FRACTION * cfg.v as f64 {
        return Err(FrontierError::EstimatorFailure(format!(
            "{} of {} RLT replicates failed for {}",
            failures,
            cfg.v,
            estimator.name()
        )));
    }
    let mse_rlt = per_replicate.iter().sum::<f64>() / per_replicate.len() as f64;
    let k_avg = if ks.is_empty() {
        None
    } else {
        Some(ks.iter().sum::<f64>() / ks.len() as f64)
    };
    Ok(RltDetail { mse_rlt, per_replicate, k_avg })
}

/// Repeated learning-testing predictive error: the mean over `V` random
/// learning/testing splits of the per-replicate testing MSE.
pub fn rlt_predictive_error(
    data: &Dataset,
    estimator: &dyn Estimator,
    fraction: f64,
    cfg: &RLTConfig,
) -> Result<(f64, Vec<f64>)> {
    let detail = rlt_detail(data, estimator, fraction, cfg)?;
    Ok((detail.mse_rlt, detail.per_replicate))
}

/// Parametric-bootstrap optimism: refit the estimator on `B` synthetic
/// output vectors `Y* ~ Normal(fitted, c * sigma2_hat * I)` and return the
/// covariance penalty `(2/n) * sum_i cov_i`, with each `cov_i` estimated as
/// `sum_b fitted*_i^b (Y*_i^b - mean_b Y*_i) / (B - 1)`.
pub fn bootstrap_optimism(
    data: &Dataset,
    estimator: &dyn Estimator,
    sigma2_hat: f64,
    cfg: &BootstrapConfig,
) -> Result<f64> {
    cfg.validate()?;
    if sigma2_hat < 0.0 {
        return Err(FrontierError::InvalidConfig("sigma2_hat must be >= 0".into()));
    }
    let n = data.n();
    let base = estimator.fit(data)?;
    let y_hat = base.fitted().clone();
    let sd = (cfg.c * sigma2_hat).sqrt();

    let results: Vec<Result<(DVector<f64>, DVector<f64>)>> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ b as u64);
            let y_star = DVector::from_fn(n, |i, _| {
                let z: f64 = rng.sample(StandardNormal);
                y_hat[i] + sd * z
            });
            let boot = Dataset::new(data.inputs().clone(), y_star.clone(), None)?;
            let fit = estimator.fit(&boot)?;
            Ok((fit.fitted().clone(), y_star))
        })
        .collect();

    let ok: Vec<&(DVector<f64>, DVector<f64>)> =
        results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failed = cfg.b - ok.len();
    if (failed as f64) > MAX_FAILURE_FRACTION * cfg.b as f64 {
        return Err(FrontierError::EstimatorFailure(format!(
            "{failed} of {} bootstrap replicates failed for {}",
            cfg.b,
            estimator.name()
        )));
    }
    let b_eff = ok.len();
    if b_eff < 2 {
        return Err(FrontierError::EstimatorFailure(
            "fewer than 2 successful bootstrap replicates".into(),
        ));
    }

    let mut y_bar = DVector::zeros(n);
    for (_, y_star) in &ok {
        y_bar += y_star;
    }
    y_bar /= b_eff as f64;

    let mut cov_sum = 0.0;
    for i in 0..n {
        let mut c_i = 0.0;
        for (fhat, y_star) in &ok {
            c_i += fhat[i] * (y_star[i] - y_bar[i]);
        }
        cov_sum += c_i / (b_eff - 1) as f64;
    }
    Ok(2.0 * cov_sum / n as f64)
}

/// The bootstrap noise variance: the CNLS learning MSE on the full data.
/// Deliberately downward biased (CNLS is the least constrained member of
/// the family), which is the "little bootstrap" choice.
pub fn sigma2_from_cnls(data: &Dataset) -> Result<f64> {
    Ok(fit_cnls(data, &SolverConfig::default())?.learning_mse)
}

/// Blend of predictive and in-sample error over the full population of
/// size `n` when `n_l` observations were available for learning:
/// `(n_t/n) * mse_rlt + (n_l/n) * (mse_learn + optimism)`.
pub fn full_set_error(mse_rlt: f64, mse_learn: f64, optimism: f64, n_l: usize, n: usize) -> f64 {
    assert!(n_l >= 1 && n_l <= n, "need 0 < n_l <= n");
    let n_t = (n - n_l) as f64;
    let n = n as f64;
    (n_t / n) * mse_rlt + (n_l as f64 / n) * (mse_learn + optimism)
}

fn clipped_r2(err: f64, var_y: f64) -> Result<f64> {
    if !(var_y > 0.0) {
        return Err(FrontierError::InvalidData(
            "output variance must be positive for R²".into(),
        ));
    }
    Ok((1.0 - err / var_y).clamp(0.0, 1.0))
}

/// Full-set R²: `max(1 - err_fullset / Var(Y), 0)`.
pub fn r2_fs(err_fullset: f64, var_y_fullset: f64) -> Result<f64> {
    clipped_r2(err_fullset, var_y_fullset)
}

/// Predictive-only R², built on the RLT error alone.
pub fn r2_pred(err_pred: f64, var_y_fullset: f64) -> Result<f64> {
    clipped_r2(err_pred, var_y_fullset)
}

/// All error components for one estimator at one learning fraction.
/// `sigma2_hat` is shared across estimators so their optimism estimates
/// see identical bootstrap noise scales.
pub fn error_estimates(
    data: &Dataset,
    estimator: &dyn Estimator,
    fraction: f64,
    sigma2_hat: f64,
    rlt_cfg: &RLTConfig,
    boot_cfg: &BootstrapConfig,
) -> Result<ErrorEstimates> {
    let fit = estimator.fit(data)?;
    let mse_learn = fit.learning_mse();
    let detail = rlt_detail(data, estimator, fraction, rlt_cfg)?;
    let optimism = bootstrap_optimism(data, estimator, sigma2_hat, boot_cfg)?;
    let n = data.n();
    let n_l = ((fraction * n as f64).floor() as usize).max(1);
    let err_fullset = full_set_error(detail.mse_rlt, mse_learn, optimism, n_l, n);
    let var_y = data.output_variance();
    Ok(ErrorEstimates {
        mse_learn,
        mse_rlt: detail.mse_rlt,
        optimism,
        err_insample: mse_learn + optimism,
        err_fullset,
        r2_fs: r2_fs(err_fullset, var_y)?,
        r2_pred: r2_pred(detail.mse_rlt, var_y)?,
        per_replicate: detail.per_replicate,
    })
}

/// Run the full (estimator × fraction) grid on one dataset and flag, per
/// fraction, every estimator whose R²_FS is within the tie band of the
/// best. Estimators that fail are recorded and skipped.
pub fn compare_methods(
    dataset_label: &str,
    data: &Dataset,
    estimators: &[&dyn Estimator],
    rlt_cfg: &RLTConfig,
    boot_cfg: &BootstrapConfig,
) -> Result<MethodComparison> {
    rlt_cfg.validate()?;
    boot_cfg.validate()?;
    let sigma2_hat = sigma2_from_cnls(data)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();

    for &fraction in &rlt_cfg.fractions {
        let mut at_fraction: Vec<ComparisonRow> = Vec::new();
        for est in estimators {
            match grid_cell(dataset_label, data, *est, fraction, sigma2_hat, rlt_cfg, boot_cfg) {
                Ok(row) => at_fraction.push(row),
                Err(e) => failures.push((est.name().to_string(), e.to_string())),
            }
        }
        let best_r2 = at_fraction.iter().map(|r| r.r2_fs).fold(f64::NEG_INFINITY, f64::max);
        for mut row in at_fraction {
            row.best = row.r2_fs >= best_r2 - TIE_BAND;
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(FrontierError::EstimatorFailure(
            "every estimator failed at every fraction".into(),
        ));
    }
    Ok(MethodComparison { dataset: dataset_label.to_string(), rows, failures })
}

fn grid_cell(
    dataset_label: &str,
    data: &Dataset,
    estimator: &dyn Estimator,
    fraction: f64,
    sigma2_hat: f64,
    rlt_cfg: &RLTConfig,
    boot_cfg: &BootstrapConfig,
) -> Result<ComparisonRow> {
    let fit = estimator.fit(data)?;
    let mse_learn = fit.learning_mse();
    let optimism = bootstrap_optimism(data, estimator, sigma2_hat, boot_cfg)?;
    let n = data.n();
    let var_y = data.output_variance();

    if fraction >= 1.0 {
        // census: no testing term, everything rides on learning + optimism
        let err = full_set_error(0.0, mse_learn, optimism, n, n);
        let r2 = r2_fs(err, var_y)?;
        return Ok(ComparisonRow {
            dataset: dataset_label.to_string(),
            fraction,
            estimator: estimator.name().to_string(),
            r2_fs: r2,
            r2_pred: r2,
            k_avg: fit.complexity(),
            best: false,
        });
    }

    let detail = rlt_detail(data, estimator, fraction, rlt_cfg)?;
    let n_l = ((fraction * n as f64).floor() as usize).max(1);
    let err = full_set_error(detail.mse_rlt, mse_learn, optimism, n_l, n);
    Ok(ComparisonRow {
        dataset: dataset_label.to_string(),
        fraction,
        estimator: estimator.name().to_string(),
        r2_fs: r2_fs(err, var_y)?,
        r2_pred: r2_pred(detail.mse_rlt, var_y)?,
        k_avg: detail.k_avg,
        best: false,
    })
}

impl MethodComparison {
    /// Estimators in the tie band at a given fraction.
    pub fn best_set(&self, fraction: f64) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.fraction == fraction && r.best)
            .map(|r| r.estimator.as_str())
            .collect()
    }

    /// Parametric-to-best ratio at a fraction: `r2` of the named
    /// estimator over the best `r2` at that fraction, plus whether the
    /// named estimator sits inside the tie band.
    pub fn ratio_to_best(&self, estimator: &str, fraction: f64) -> Option<(f64, bool)> {
        let at: Vec<&ComparisonRow> =
            self.rows.iter().filter(|r| r.fraction == fraction).collect();
        let target = at.iter().find(|r| r.estimator == estimator)?;
        let best = at.iter().map(|r| r.r2_fs).fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            return None;
        }
        Some((target.r2_fs / best, target.best))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,fraction,estimator,r2_fs,r2_pred,k_avg,best\n");
        for r in &self.rows {
            let k = r.k_avg.map(|k| format!("{k:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{},{}\n",
                r.dataset, r.fraction, r.estimator, r.r2_fs, r.r2_pred, k, r.best
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::baseline::{MeanEstimator, OlsEstimator};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn const_data(n: usize, c: f64) -> Dataset {
        let inputs = DMatrix::from_fn(n, 1, |i, _| 0.1 + i as f64 / n as f64);
        let outputs = DVector::from_element(n, c);
        Dataset::new(inputs, outputs, None).unwrap()
    }

    #[test]
    fn mean_estimator_on_constant_data_has_zero_rlt_error() {
        let data = const_data(10, 3.0);
        let cfg = RLTConfig { v: 10, ..Default::default() };
        let (mse, per) = rlt_predictive_error(&data, &MeanEstimator, 0.5, &cfg).unwrap();
        assert_eq!(mse, 0.0);
        assert_eq!(per.len(), 10);
    }

    #[test]
    fn rlt_matches_exhaustive_subset_enumeration() {
        // n = 4, y = (0,0,1,1), fraction 0.5, mean estimator. Brute force
        // over all C(4,2) = 6 learning subsets, each with its testing MSE.
        let inputs = DMatrix::from_fn(4, 1, |i, _| 1.0 + i as f64);
        let outputs = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        let data = Dataset::new(inputs, outputs.clone(), None).unwrap();

        let mut exhaustive = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let m = (outputs[a] + outputs[b]) / 2.0;
                let test: Vec<usize> = (0..4).filter(|&i| i != a && i != b).collect();
                let mse = test.iter().map(|&i| (outputs[i] - m).powi(2)).sum::<f64>() / 2.0;
                exhaustive.push(mse);
            }
        }
        let exact_mean = exhaustive.iter().sum::<f64>() / exhaustive.len() as f64;

        // many replicates of the randomized estimator must land near the
        // exact average, and every replicate value must be one of the six
        let cfg = RLTConfig { v: 600, rng_seed: 42, ..Default::default() };
        let (mse, per) = rlt_predictive_error(&data, &MeanEstimator, 0.5, &cfg).unwrap();
        for &v in &per {
            assert!(
                exhaustive.iter().any(|&e| (e - v).abs() < 1e-12),
                "replicate MSE {v} not among the enumerated values"
            );
        }
        assert_relative_eq!(mse, exact_mean, epsilon = 0.05);
    }

    #[test]
    fn bootstrap_optimism_matches_analytic_ols_penalty() {
        // OLS with p parameters: optimism = 2 sigma^2 p / n.
        let n = 100;
        let inputs = DMatrix::from_fn(n, 1, |i, _| 0.1 + 0.9 * i as f64 / n as f64);
        let outputs = DVector::from_fn(n, |i, _| 1.0 + 2.0 * inputs[(i, 0)]);
        let data = Dataset::new(inputs, outputs, None).unwrap();
        let cfg = BootstrapConfig { b: 500, rng_seed: 7, ..Default::default() };
        let omega = bootstrap_optimism(&data, &OlsEstimator, 1.0, &cfg).unwrap();
        let analytic = 2.0 * 1.0 * 2.0 / n as f64;
        assert!(
            (omega - analytic).abs() / analytic < 0.10,
            "omega {omega} vs analytic {analytic}"
        );
    }

    #[test]
    fn zero_variance_bootstrap_gives_zero_optimism() {
        let data = const_data(10, 2.0);
        let cfg = BootstrapConfig { b: 20, rng_seed: 1, ..Default::default() };
        let omega = bootstrap_optimism(&data, &MeanEstimator, 0.0, &cfg).unwrap();
        assert_eq!(omega, 0.0);
    }

    #[test]
    fn full_set_error_arithmetic_and_limits() {
        assert_relative_eq!(full_set_error(0.4, 0.2, 0.05, 50, 100), 0.325, epsilon = 1e-12);
        // census: the predictive term vanishes
        assert_relative_eq!(full_set_error(9.9, 0.2, 0.05, 100, 100), 0.25, epsilon = 1e-12);
        // degenerate equality collapses to mse_learn for any n_l
        for n_l in [10, 40, 90] {
            assert_relative_eq!(full_set_error(0.3, 0.3, 0.0, n_l, 100), 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn full_set_error_is_linear_in_each_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: f64 = rng.gen_range(0.0..2.0);
            let b: f64 = rng.gen_range(0.0..2.0);
            let c: f64 = rng.gen_range(0.0..2.0);
            let n_l = rng.gen_range(1..=99usize);
            let base = full_set_error(a, b, c, n_l, 100);
            let da = rng.gen_range(0.0..1.0);
            // linearity: f(a + da) - f(a) equals da times the slope, and
            // the value never decreases when any error term grows
            let up = full_set_error(a + da, b, c, n_l, 100);
            let slope = (100 - n_l) as f64 / 100.0;
            assert_relative_eq!(up - base, da * slope, epsilon = 1e-12);
            assert!(up >= base);
            let upb = full_set_error(a, b + da, c, n_l, 100);
            assert_relative_eq!(upb - base, da * n_l as f64 / 100.0, epsilon = 1e-12);
            let upc = full_set_error(a, b, c + da, n_l, 100);
            assert_relative_eq!(upc - base, da * n_l as f64 / 100.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn r2_clipping() {
        assert_eq!(r2_fs(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(r2_fs(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(r2_fs(2.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(r2_pred(0.25, 1.0).unwrap(), 0.75);
        assert!(r2_fs(0.1, 0.0).is_err());
    }

    #[test]
    fn single_estimator_is_trivially_best() {
        let n = 40;
        let inputs = DMatrix::from_fn(n, 1, |i, _| 0.1 + 0.9 * i as f64 / n as f64);
        let outputs = DVector::from_fn(n, |i, _| 1.0 + 0.5 * inputs[(i, 0)]);
        let data = Dataset::new(inputs, outputs, None).unwrap();
        let rlt = RLTConfig { fractions: vec![0.5], v: 5, rng_seed: 1 };
        let boot = BootstrapConfig { b: 10, rng_seed: 1, ..Default::default() };
        let cmp =
            compare_methods("demo", &data, &[&OlsEstimator], &rlt, &boot).unwrap();
        assert_eq!(cmp.best_set(0.5), vec!["ols"]);
        assert!(cmp.to_csv().lines().count() >= 2);
    }

    #[test]
    fn tie_band_logic() {
        // reproduce the band rule on hand-built rows
        let mut cmp = MethodComparison {
            dataset: "x".into(),
            rows: vec![
                ComparisonRow {
                    dataset: "x".into(),
                    fraction: 0.5,
                    estimator: "a".into(),
                    r2_fs: 0.88,
                    r2_pred: 0.8,
                    k_avg: None,
                    best: false,
                },
                ComparisonRow {
                    dataset: "x".into(),
                    fraction: 0.5,
                    estimator: "b".into(),
                    r2_fs: 0.79,
                    r2_pred: 0.7,
                    k_avg: None,
                    best: false,
                },
            ],
            failures: vec![],
        };
        let best = cmp.rows.iter().map(|r| r.r2_fs).fold(f64::NEG_INFINITY, f64::max);
        for r in &mut cmp.rows {
            r.best = r.r2_fs >= best - TIE_BAND;
        }
        assert_eq!(cmp.best_set(0.5), vec!["a"]);

        for (r, v) in cmp.rows.iter_mut().zip([0.64, 0.64]) {
            r.r2_fs = v;
            r.best = false;
        }
        cmp.rows.push(ComparisonRow {
            dataset: "x".into(),
            fraction: 0.5,
            estimator: "c".into(),
            r2_fs: 0.63,
            r2_pred: 0.6,
            k_avg: None,
            best: false,
        });
        let best = cmp.rows.iter().map(|r| r.r2_fs).fold(f64::NEG_INFINITY, f64::max);
        for r in &mut cmp.rows {
            r.best = r.r2_fs >= best - TIE_BAND;
        }
        assert_eq!(cmp.best_set(0.5).len(), 3);
    }

    #[test]
    fn sigma2_from_cnls_is_least_constrained() {
        let n = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0.1..1.0));
        let outputs = DVector::from_fn(n, |i, _| {
            let z: f64 = rng.sample(StandardNormal);
            inputs[(i, 0)].sqrt() + 0.1 * z
        });
        let data = Dataset::new(inputs, outputs, None).unwrap();
        let s2 = sigma2_from_cnls(&data).unwrap();
        let params = crate::estimators::CapNlsParams::default_for(1);
        let (model, _) =
            crate::estimators::fit_capnls(&data, &params, &SolverConfig::default()).unwrap();
        assert!(s2 <= model.learning_mse + 1e-9);
    }

    #[test]
    fn noise_free_concave_data_gives_near_zero_sigma2() {
        let n = 15;
        let inputs = DMatrix::from_fn(n, 1, |i, _| 0.1 + 0.9 * i as f64 / n as f64);
        let outputs = DVector::from_fn(n, |i, _| inputs[(i, 0)].sqrt());
        let data = Dataset::new(inputs, outputs, None).unwrap();
        assert!(sigma2_from_cnls(&data).unwrap() <= 1e-8);
    }
}
