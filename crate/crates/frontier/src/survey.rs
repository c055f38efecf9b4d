//! Survey ingestion and the subsample-size analysis: a documented CSV
//! schema for establishment records, KLEMS value-added construction
//! (VA = gross output − intermediates over capital, labor, energy,
//! services), positivity cleaning, a synthetic-survey generator for tests
//! and demos, and the goodness-of-fit-versus-sample-size curve.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FrontierError, Result};
use crate::estimators::Estimator;
use crate::selection::{
    bootstrap_optimism, full_set_error, r2_fs, r2_pred, rlt_predictive_error, sigma2_from_cnls,
    BootstrapConfig, RLTConfig,
};

/// One establishment row of the survey. Currency fields are in thousands;
/// labor is man-hours. `energy` already includes fuel expenditures
/// (summed on load).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub industry_code: String,
    /// Gross output Y.
    pub output: f64,
    /// Intermediate consumption M.
    pub intermediates: f64,
    /// Capital K.
    pub capital: f64,
    /// Labor L in man-hours.
    pub labor_hours: f64,
    /// Energy E (electricity plus fuel).
    pub energy: f64,
    /// Services S.
    pub services: f64,
}

/// A malformed input row, reported rather than fatal.
#[derive(Debug, Clone, Serialize)]
pub struct LoadIssue {
    /// 1-based line number in the file (header is line 1).
    pub line: usize,
    pub reason: String,
}

/// A cleaned single-industry dataset: inputs (K, L, E, S), output VA.
#[derive(Debug, Clone)]
pub struct IndustryDataset {
    pub industry_code: String,
    pub data: Dataset,
    /// Rows of this industry removed by the positivity filter.
    pub dropped_count: usize,
}

const COLUMNS: [&str; 8] = [
    "industry_code",
    "output",
    "intermediates",
    "capital",
    "labor_hours",
    "energy",
    "fuel",
    "services",
];

/// Read a survey CSV. The header must contain all schema columns (extra
/// columns are ignored); energy and fuel are summed into one input.
/// Malformed rows are returned as issues with their line numbers.
pub fn load_survey(path: &Path) -> Result<(Vec<SurveyRecord>, Vec<LoadIssue>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        FrontierError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
    })?;
    let headers = reader.headers()?.clone();
    let mut col = std::collections::HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        col.insert(h.trim().to_string(), i);
    }
    for required in COLUMNS {
        if !col.contains_key(required) {
            return Err(FrontierError::InvalidData(format!(
                "survey CSV missing column '{required}'"
            )));
        }
    }

    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // header occupies line 1
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                issues.push(LoadIssue { line, reason: e.to_string() });
                continue;
            }
        };
        let field = |name: &str| -> std::result::Result<f64, String> {
            let raw = row.get(col[name]).unwrap_or("").trim();
            raw.parse::<f64>()
                .map_err(|_| format!("column '{name}': cannot parse '{raw}' as a number"))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("column '{name}': non-finite value"))
                    }
                })
        };
        let parsed = (|| -> std::result::Result<SurveyRecord, String> {
            Ok(SurveyRecord {
                industry_code: row
                    .get(col["industry_code"])
                    .unwrap_or("")
                    .trim()
                    .to_string(),
                output: field("output")?,
                intermediates: field("intermediates")?,
                capital: field("capital")?,
                labor_hours: field("labor_hours")?,
                energy: field("energy")? + field("fuel")?,
                services: field("services")?,
            })
        })();
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => issues.push(LoadIssue { line, reason }),
        }
    }
    Ok((records, issues))
}

/// Filter records to one industry, compute VA = Y − M, and drop rows with
/// non-positive value added or inputs.
pub fn build_industry_dataset(
    records: &[SurveyRecord],
    industry_code: &str,
) -> Result<IndustryDataset> {
    let in_industry: Vec<&SurveyRecord> = records
        .iter()
        .filter(|r| r.industry_code == industry_code)
        .collect();
    if in_industry.is_empty() {
        return Err(FrontierError::InvalidData(format!(
            "no records for industry '{industry_code}'"
        )));
    }
    let kept: Vec<&&SurveyRecord> = in_industry
        .iter()
        .filter(|r| {
            let va = r.output - r.intermediates;
            va > 0.0
                && r.capital > 0.0
                && r.labor_hours > 0.0
                && r.energy > 0.0
                && r.services > 0.0
        })
        .collect();
    let dropped_count = in_industry.len() - kept.len();
    if kept.is_empty() {
        return Err(FrontierError::InvalidData(format!(
            "every record for industry '{industry_code}' fails the positivity filter"
        )));
    }
    let n = kept.len();
    let mut inputs = DMatrix::zeros(n, 4);
    let mut outputs = DVector::zeros(n);
    for (i, r) in kept.iter().enumerate() {
        inputs[(i, 0)] = r.capital;
        inputs[(i, 1)] = r.labor_hours;
        inputs[(i, 2)] = r.energy;
        inputs[(i, 3)] = r.services;
        outputs[i] = r.output - r.intermediates;
    }
    Ok(IndustryDataset {
        industry_code: industry_code.to_string(),
        data: Dataset::new(inputs, outputs, None)?,
        dropped_count,
    })
}

/// Shape parameters for one synthetic industry: establishment scales
/// cluster around `scale_location` (log scale) with a sparse heavy tail of
/// large establishments, and value added follows a Cobb-Douglas frontier
/// in the four inputs with relative Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticIndustry {
    pub code: String,
    pub n: usize,
    /// Mean of log establishment scale.
    pub scale_location: f64,
    /// Spread of log establishment scale within the cluster.
    pub scale_spread: f64,
    /// Fraction of establishments drawn from the large-scale tail.
    pub large_fraction: f64,
    /// Cobb-Douglas exponents over (K, L, E, S).
    pub exponents: [f64; 4],
    /// Noise standard deviation relative to the frontier level.
    pub noise_rel: f64,
}

impl SyntheticIndustry {
    pub fn demo(code: &str, n: usize, noise_rel: f64) -> Self {
        Self {
            code: code.to_string(),
            n,
            scale_location: 0.0,
            scale_spread: 0.35,
            large_fraction: 0.05,
            exponents: [0.25, 0.3, 0.15, 0.2],
            noise_rel,
        }
    }
}

/// Generate survey records for a list of synthetic industries.
pub fn generate_synthetic_survey(
    industries: &[SyntheticIndustry],
    seed: u64,
) -> Vec<SurveyRecord> {
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ind in industries {
        for _ in 0..ind.n {
            // clustered scale with a sparse large tail
            let z: f64 = rng.sample(StandardNormal);
            let location = if rng.gen_bool(ind.large_fraction) {
                ind.scale_location + 2.5
            } else {
                ind.scale_location
            };
            let scale = (location + ind.scale_spread * z).exp();
            // input mix varies around a common proportion per input
            let mut x = [0.0f64; 4];
            for (j, xj) in x.iter_mut().enumerate() {
                let jitter: f64 = rng.sample(StandardNormal);
                *xj = scale * (0.3 * jitter).exp() * [1.0, 8.0, 0.4, 0.9][j];
            }
            let frontier = x
                .iter()
                .zip(&ind.exponents)
                .map(|(&xi, &a)| xi.powf(a))
                .product::<f64>();
            let eps: f64 = rng.sample(StandardNormal);
            let va = (frontier * (1.0 + ind.noise_rel * eps)).max(frontier * 0.05);
            // split VA back into gross output and intermediates
            let m = va * rng.gen_range(0.5..1.5);
            records.push(SurveyRecord {
                industry_code: ind.code.clone(),
                output: va + m,
                intermediates: m,
                capital: x[0],
                labor_hours: x[1],
                // split energy between the two source columns on write;
                // in-memory records carry the sum
                energy: x[2],
                services: x[3],
            });
        }
    }
    records
}

/// Write records back out in the documented CSV schema (energy split
/// evenly between the `energy` and `fuel` columns).
pub fn records_to_csv(records: &[SurveyRecord]) -> String {
    let mut out = String::from(
        "industry_code,output,intermediates,capital,labor_hours,energy,fuel,services\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.industry_code,
            r.output,
            r.intermediates,
            r.capital,
            r.labor_hours,
            r.energy / 2.0,
            r.energy / 2.0,
            r.services
        ));
    }
    out
}

/// One point of the goodness-of-fit-versus-subsample-size curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub mean_r2_fs: f64,
    pub min_r2_fs: f64,
    pub max_r2_fs: f64,
    pub mean_r2_pred: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsampleCurve {
    pub estimator: String,
    pub points: Vec<CurvePoint>,
}

/// R²_FS as a function of the learning fraction. Fractions below 1 use
/// per-replicate RLT testing errors (giving a band); fraction 1.0 is the
/// census limit where only learning MSE plus optimism remains.
pub fn subsample_curve(
    data: &Dataset,
    estimator: &dyn Estimator,
    fractions: &[f64],
    rlt_cfg: &RLTConfig,
    boot_cfg: &BootstrapConfig,
) -> Result<SubsampleCurve> {
    if fractions.is_empty() {
        return Err(FrontierError::InvalidConfig("need at least one fraction".into()));
    }
    let fit = estimator.fit(data)?;
    let mse_learn = fit.learning_mse();
    let sigma2 = sigma2_from_cnls(data)?;
    let optimism = bootstrap_optimism(data, estimator, sigma2, boot_cfg)?;
    let var_y = data.output_variance();
    let n = data.n();

    let mut points = Vec::new();
    for &fraction in fractions {
        if !(0.0 < fraction && fraction <= 1.0) {
            return Err(FrontierError::InvalidConfig(format!(
                "fraction {fraction} outside (0, 1]"
            )));
        }
        if (fraction - 1.0).abs() < f64::EPSILON {
            let err = full_set_error(0.0, mse_learn, optimism, n, n);
            let r2 = r2_fs(err, var_y)?;
            points.push(CurvePoint {
                fraction,
                mean_r2_fs: r2,
                min_r2_fs: r2,
                max_r2_fs: r2,
                mean_r2_pred: r2,
            });
            continue;
        }
        let n_l = ((fraction * n as f64).floor() as usize).max(1);
        let (mse_rlt, per_replicate) =
            rlt_predictive_error(data, estimator, fraction, rlt_cfg)?;
        let mut r2s = Vec::with_capacity(per_replicate.len());
        for &rep in &per_replicate {
            let err = full_set_error(rep, mse_learn, optimism, n_l, n);
            r2s.push(r2_fs(err, var_y)?);
        }
        let mean = r2s.iter().sum::<f64>() / r2s.len() as f64;
        let min = r2s.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r2s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        points.push(CurvePoint {
            fraction,
            mean_r2_fs: mean,
            min_r2_fs: min,
            max_r2_fs: max,
            mean_r2_pred: r2_pred(mse_rlt, var_y)?,
        });
    }
    Ok(SubsampleCurve { estimator: estimator.name().to_string(), points })
}

impl SubsampleCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,mean_r2_fs,min_r2_fs,max_r2_fs,mean_r2_pred\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                p.fraction, p.mean_r2_fs, p.min_r2_fs, p.max_r2_fs, p.mean_r2_pred
            ));
        }
        out
    }

    /// Smallest fraction whose mean R²_FS reaches `rho` times the census
    /// (fraction 1.0) value; `None` if the curve lacks a census point or
    /// no fraction qualifies.
    pub fn required_fraction(&self, rho: f64) -> Option<f64> {
        let census = self
            .points
            .iter()
            .find(|p| (p.fraction - 1.0).abs() < f64::EPSILON)?
            .mean_r2_fs;
        let mut qualifying: Vec<&CurvePoint> = self
            .points
            .iter()
            .filter(|p| p.mean_r2_fs >= rho * census)
            .collect();
        qualifying.sort_by(|a, b| a.fraction.partial_cmp(&b.fraction).unwrap());
        qualifying.first().map(|p| p.fraction)
    }
}

/// Spearman rank correlation between two equal-length sequences.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}
