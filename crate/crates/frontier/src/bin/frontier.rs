//! Batch command-line surface: Monte Carlo experiments, single fits,
//! survey model selection, and model validation. Every command writes a
//! manifest naming its artifacts and is deterministic given (inputs,
//! config, seed); wall-clock timings are opt-in so that artifacts stay
//! byte-identical across reruns.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use frontier::estimators::Estimator;
use frontier::selection::{compare_methods, BootstrapConfig, RLTConfig};
use frontier::simlab::{run_experiment, EstimatorKind, ExperimentConfig};
use frontier::survey::{build_industry_dataset, load_survey, subsample_curve};
use frontier::{Dataset, FrontierError, PiecewiseLinearModel};

#[derive(Parser)]
#[command(name = "frontier", version, about = "Shape-constrained production-function toolkit")]
struct Cli {
    /// Bound worker parallelism (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override every configured RNG seed (also via FRONTIER_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a TOML config.
    Simulate(SimulateArgs),
    /// Fit one estimator to a CSV dataset and emit the model as JSON.
    Fit(FitArgs),
    /// Model-selection report on a survey CSV.
    Select(SelectArgs),
    /// Recheck a serialized model against a dataset.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for metrics.csv and manifest.json.
    #[arg(long, default_value = "frontier-out")]
    out: PathBuf,
    /// Validate the config and exit without running.
    #[arg(long)]
    dry_run: bool,
    /// Record wall-clock timings (makes artifacts nondeterministic).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV: plain schema (x1..xd,y) or survey schema.
    #[arg(long)]
    data: PathBuf,
    /// capnls | capnls_fast | cap | cnls | cda | cdm
    #[arg(long)]
    estimator: String,
    /// Treat the input as a survey CSV and fit this industry.
    #[arg(long)]
    industry: Option<String>,
    /// Where to write the model JSON.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Cap on the number of partition regions grown.
    #[arg(long)]
    max_k: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    /// Survey CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    industry: String,
    /// Comma-separated estimator names.
    #[arg(long, default_value = "capnls,cap,cda,cdm")]
    estimators: String,
    /// Comma-separated learning fractions (1.0 = census).
    #[arg(long, default_value = "0.2,0.3,0.4,0.5")]
    fractions: String,
    /// RLT replicates.
    #[arg(long, default_value_t = 100)]
    v: usize,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 500)]
    b: usize,
    /// Also emit the subsample-size curve for this estimator.
    #[arg(long)]
    curve: Option<String>,
    #[arg(long, default_value = "frontier-out")]
    out: PathBuf,
    /// Cap on the number of partition regions grown.
    #[arg(long)]
    max_k: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Model JSON produced by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// The dataset the model was fit on (plain schema, or survey schema
    /// with --industry).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    industry: Option<String>,
    /// Maximum tolerated constraint violation.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    versions: serde_json::Value,
    wall_time_seconds: Option<f64>,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), FrontierError> {
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

/// Load a plain x1..xd,y CSV, or carve one industry out of a survey CSV.
fn load_dataset(path: &Path, industry: Option<&str>) -> Result<Dataset, FrontierError> {
    if let Some(code) = industry {
        let (records, issues) = load_survey(path)?;
        if !issues.is_empty() {
            eprintln!("note: {} malformed rows skipped", issues.len());
        }
        return Ok(build_industry_dataset(&records, code)?.data);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        FrontierError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
    })?;
    let headers = reader.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    if d == 0 || headers.iter().last() != Some("y") {
        return Err(FrontierError::InvalidData(
            "plain data CSV must have columns x1..xd followed by y".into(),
        ));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: Result<Vec<f64>, _> =
            record.iter().map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == d + 1 => rows.push(v),
            _ => {
                return Err(FrontierError::InvalidData(format!(
                    "cannot parse data row {}",
                    idx + 2
                )))
            }
        }
    }
    let n = rows.len();
    let inputs = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let outputs = DVector::from_fn(n, |i, _| rows[i][d]);
    Dataset::new(inputs, outputs, None)
}

fn effective_seed(cli_seed: Option<u64>, config_seed: u64) -> u64 {
    if let Some(s) = cli_seed {
        return s;
    }
    if let Ok(env) = std::env::var("FRONTIER_SEED") {
        if let Ok(s) = env.parse() {
            return s;
        }
    }
    config_seed
}

fn versions() -> serde_json::Value {
    serde_json::json!({ "frontier": env!("CARGO_PKG_VERSION") })
}

fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<(), FrontierError> {
    let raw = std::fs::read_to_string(&args.config)?;
    let mut config: ExperimentConfig = toml::from_str(&raw)
        .map_err(|e| FrontierError::InvalidConfig(format!("{}: {e}", args.config.display())))?;
    config.rng_seed = effective_seed(seed, config.rng_seed);
    config.validate()?;
    if args.dry_run {
        println!("config ok: {}", args.config.display());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out)?;
    let started = Instant::now();
    let mut result = run_experiment(&config)?;
    let wall = started.elapsed().as_secs_f64();
    if !args.timings {
        for row in &mut result.rows {
            row.runtime_seconds = 0.0;
        }
    }
    let csv_path = args.out.join("metrics.csv");
    std::fs::write(&csv_path, result.to_csv())?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "simulate".into(),
            config: serde_json::to_value(&config)?,
            seed: config.rng_seed,
            versions: versions(),
            wall_time_seconds: args.timings.then_some(wall),
            outputs: vec![csv_path.display().to_string()],
        },
    )?;
    println!("wrote {} ({} rows)", csv_path.display(), result.rows.len());
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    estimator: String,
    n: usize,
    d: usize,
    learning_mse: f64,
    k: Option<f64>,
    model_path: String,
}

fn cmd_fit(args: &FitArgs, seed: Option<u64>) -> Result<(), FrontierError> {
    let kind = EstimatorKind::parse(&args.estimator)?;
    let data = load_dataset(&args.data, args.industry.as_deref())?;
    let seed = effective_seed(seed, 0);
    let estimator = kind.build(data.d(), seed, args.max_k);
    let fit = estimator.fit(&data)?;

    // piecewise estimators serialize the full hyperplane model; the
    // parametric ones refit their compact form for the JSON artifact
    let model_json = match kind {
        EstimatorKind::Cda => serde_json::to_value(
            frontier::estimators::fit_cd_additive(&data)?,
        )?,
        EstimatorKind::Cdm => serde_json::to_value(
            frontier::estimators::fit_cd_multiplicative(&data)?,
        )?,
        _ => piecewise_json(&data, kind, seed, args.max_k)?,
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&model_json)?)?;
    let report = FitReport {
        estimator: kind.name().into(),
        n: data.n(),
        d: data.d(),
        learning_mse: fit.learning_mse(),
        k: fit.complexity(),
        model_path: args.out.display().to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn piecewise_json(
    data: &Dataset,
    kind: EstimatorKind,
    seed: u64,
    max_k: Option<usize>,
) -> Result<serde_json::Value, FrontierError> {
    use frontier::estimators::{fit_cap, fit_capnls, fit_capnls_fast, fit_cnls, CapNlsParams};
    use frontier::qp::SolverConfig;
    let mut params = CapNlsParams::default_for(data.d());
    params.rng_seed = seed;
    if max_k.is_some() {
        params.max_k = max_k;
    }
    let solver = SolverConfig::default();
    let model: PiecewiseLinearModel = match kind {
        EstimatorKind::CapNls => fit_capnls(data, &params, &solver)?.0,
        EstimatorKind::CapNlsFast => fit_capnls_fast(data, &params, &solver)?.0,
        EstimatorKind::Cap => fit_cap(data, &params)?,
        // CNLS runs without ridge so its reported slopes show the estimator's
        // native (non-identified) extrapolation behavior.
        EstimatorKind::Cnls => fit_cnls(data, &SolverConfig { ridge: 0.0, ..solver })?,
        _ => unreachable!("parametric kinds handled by the caller"),
    };
    Ok(model.to_json())
}

fn cmd_select(args: &SelectArgs, seed: Option<u64>) -> Result<(), FrontierError> {
    let kinds: Vec<EstimatorKind> = args
        .estimators
        .split(',')
        .map(|s| EstimatorKind::parse(s.trim()))
        .collect::<Result<_, _>>()?;
    let fractions: Vec<f64> = args
        .fractions
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| FrontierError::InvalidConfig(format!("bad fraction '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    let data = load_dataset(&args.data, Some(&args.industry))?;
    let seed = effective_seed(seed, 0);
    let rlt = RLTConfig { fractions: fractions.clone(), v: args.v, rng_seed: seed };
    let boot = BootstrapConfig { b: args.b, c: 1.0, rng_seed: seed.wrapping_add(1) };

    let estimators: Vec<Box<dyn Estimator>> = kinds
        .iter()
        .map(|k| k.build(data.d(), seed.wrapping_add(2), args.max_k))
        .collect();
    let refs: Vec<&dyn Estimator> = estimators.iter().map(|b| b.as_ref()).collect();
    let comparison = compare_methods(&args.industry, &data, &refs, &rlt, &boot)?;

    std::fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    let csv_path = args.out.join("comparison.csv");
    std::fs::write(&csv_path, comparison.to_csv())?;
    outputs.push(csv_path.display().to_string());
    let json_path = args.out.join("comparison.json");
    std::fs::write(&json_path, comparison.to_json()?)?;
    outputs.push(json_path.display().to_string());

    // Ratio of the parametric CDA fit to the best model, per fraction
    if kinds.contains(&EstimatorKind::Cda) {
        let mut ratio_csv = String::from("fraction,cda_ratio,tie\n");
        for &f in &fractions {
            if let Some((ratio, tie)) = comparison.ratio_to_best("cda", f) {
                ratio_csv.push_str(&format!("{f},{ratio:.6},{tie}\n"));
            }
        }
        let ratio_path = args.out.join("cda_ratio.csv");
        std::fs::write(&ratio_path, ratio_csv)?;
        outputs.push(ratio_path.display().to_string());
    }

    if let Some(curve_est) = &args.curve {
        let kind = EstimatorKind::parse(curve_est)?;
        let est = kind.build(data.d(), seed.wrapping_add(3), args.max_k);
        let curve = subsample_curve(&data, est.as_ref(), &fractions, &rlt, &boot)?;
        let curve_path = args.out.join("curve.csv");
        std::fs::write(&curve_path, curve.to_csv())?;
        outputs.push(curve_path.display().to_string());
    }

    write_manifest(
        &args.out,
        &RunManifest {
            command: "select".into(),
            config: serde_json::json!({
                "data": args.data.display().to_string(),
                "industry": args.industry,
                "estimators": kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
                "fractions": fractions,
                "v": args.v,
                "b": args.b,
            }),
            seed,
            versions: versions(),
            wall_time_seconds: None,
            outputs,
        },
    )?;
    println!("wrote comparison for '{}' to {}", args.industry, args.out.display());
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), FrontierError> {
    let raw = std::fs::read_to_string(&args.model)?;
    let value: serde_json::Value = serde_json::from_str(&raw)?;
    let model = PiecewiseLinearModel::from_json(&value)?;
    let data = load_dataset(&args.data, args.industry.as_deref())?;
    let diag = model.validate(&data)?;
    println!("{}", serde_json::to_string_pretty(&serde_json::json!({
        "k": model.k(),
        "max_afriat_violation": diag.max_afriat_violation,
        "min_slope": diag.min_slope,
        "recomputed_mse": diag.recomputed_mse,
        "stored_mse": model.learning_mse,
    }))?);
    if diag.max_afriat_violation > args.tolerance || diag.min_slope < -args.tolerance {
        return Err(FrontierError::EstimatorFailure(format!(
            "model violates constraints beyond {} (afriat {}, min slope {})",
            args.tolerance, diag.max_afriat_violation, diag.min_slope
        )));
    }
    println!("model ok within tolerance {}", args.tolerance);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, cli.seed),
        Command::Fit(args) => cmd_fit(args, cli.seed),
        Command::Select(args) => cmd_select(args, cli.seed),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                FrontierError::InvalidConfig(_) | FrontierError::InvalidData(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
