use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use tshrink_core::harness::lasso::{self, LassoTuning};
use tshrink_core::harness::{
    self, BenchmarkOptions, BenchmarkReport, ExperimentSpec, Method, Summary,
};
use tshrink_core::marginal_kl::{compare_joint_marginal, MarginalConfig};
use tshrink_core::model::prior_rate;
use tshrink_core::{posterior, vb, Hyperparameters, PriorPreset};

use crate::{
    check_level, io, parse_lasso, BenchmarkArgs, CliError, CompareArgs, FitArgs, SimulateArgs,
};

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::input(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: Option<&PathBuf>, value: &T) -> Result<(), CliError> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::input(format!("cannot write json: {e}")))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::input(format!("cannot write output: {e}")))
}

fn parse_preset(s: &str) -> Result<PriorPreset, CliError> {
    match s {
        "simulation" => Ok(PriorPreset::Simulation),
        "strict" => Ok(PriorPreset::Strict),
        other => Err(CliError::config(format!(
            "unknown preset `{other}` (expected simulation or strict)"
        ))),
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be >= 1".into()));
        }
        builder = builder.num_threads(j);
    }
    builder
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))
}

#[derive(Serialize)]
struct FitConfig<'a> {
    input: String,
    level: f64,
    preset: PriorPreset,
    lasso: LassoTuning,
    lasso_lambda: f64,
    hyperparameters: &'a Hyperparameters,
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    seed: u64,
    config: FitConfig<'a>,
    columns: &'a [String],
    mu: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    sigma: f64,
    selected: Vec<usize>,
    selected_columns: Vec<&'a str>,
    intervals: Vec<[f64; 2]>,
    elbo_trace: &'a [f64],
    iterations: usize,
    converged: bool,
    wall_time_sec: f64,
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    check_level(args.level)?;
    let tuning = parse_lasso(&args.lasso)?;
    let preset = parse_preset(&args.preset)?;
    let table = io::read_dataset(&args.input)?;
    let data = &table.data;
    let (n, p) = (data.n(), data.p());

    let mut hyper = Hyperparameters::with_preset(n, p, preset)?;
    if let Some(a0) = args.a0 {
        hyper.a0 = a0;
        if !(a0 > 1.0 && a0.is_finite()) {
            return Err(CliError::config(format!(
                "--a0 must be finite and > 1, got {a0}"
            )));
        }
        hyper.bn = prior_rate(n, p, a0, preset)?;
    }
    if let Some(bn) = args.bn {
        hyper.bn = bn;
    }
    hyper = match args.sigma {
        Some(s) => hyper.known_sigma(s),
        None => hyper.empirical_bayes(),
    };
    if let Some(b) = args.blocks {
        hyper = hyper.blocks(b);
    }
    if let Some(t) = args.tol {
        hyper.tol = t;
    }
    if let Some(m) = args.max_iters {
        hyper.max_iters = m;
    }
    hyper.validate(p)?;

    let (lambda, init) = lasso::tuned_lasso(data, tuning)?;
    let result = vb::fit(data, &hyper, &init)?;
    let selection = posterior::select_variables(&result.state, args.level)?;
    let state = &result.state;
    let report = FitReport {
        command: "fit",
        seed: args.common.seed,
        config: FitConfig {
            input: args.input.display().to_string(),
            level: args.level,
            preset,
            lasso: tuning,
            lasso_lambda: lambda,
            hyperparameters: &hyper,
        },
        columns: &table.columns,
        mu: state.mu.iter().copied().collect(),
        a: state.a.iter().copied().collect(),
        b: state.b.iter().copied().collect(),
        sigma: state.sigma,
        selected_columns: selection
            .selected
            .iter()
            .map(|&j| table.columns[j].as_str())
            .collect(),
        selected: selection.selected,
        intervals: selection
            .intervals
            .iter()
            .map(|&(lo, hi)| [lo, hi])
            .collect(),
        elbo_trace: &result.elbo_trace,
        iterations: result.iterations,
        converged: result.converged,
        wall_time_sec: result.wall_time,
    };
    write_json(args.common.output.as_ref(), &report)
}

#[derive(Serialize)]
struct Truth<'a> {
    spec: &'a ExperimentSpec,
    index: u64,
    seed: u64,
    beta: Vec<f64>,
    support: &'a [usize],
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let spec = ExperimentSpec::by_name(&args.spec, args.common.seed, 1)?;
    let rep = harness::generate(&spec, args.index)?;
    let out = open_output(args.common.output.as_ref())?;
    io::write_dataset(out, &rep.data)?;
    if let Some(path) = &args.truth {
        let truth = Truth {
            spec: &spec,
            index: args.index,
            seed: args.common.seed,
            beta: rep.beta.iter().copied().collect(),
            support: &rep.support,
        };
        write_json(Some(path), &truth)?;
    }
    Ok(())
}

const TABLE_COLUMNS: [&str; 22] = [
    "method",
    "rmse_mean",
    "rmse_sd",
    "fdr_mean",
    "fdr_sd",
    "tpr_mean",
    "tpr_sd",
    "cov_signal_mean",
    "cov_signal_sd",
    "cov_null_mean",
    "cov_null_sd",
    "time_mean_sec",
    "time_sd_sec",
    "failures",
    "fdr_undefined",
    "spec",
    "n",
    "p",
    "reps",
    "seed",
    "level",
    "lasso",
];

fn lasso_label(t: LassoTuning) -> String {
    match t {
        LassoTuning::Universal => "universal".into(),
        LassoTuning::Scaled => "scaled".into(),
        LassoTuning::CrossValidated(k) => format!("cv:{k}"),
        LassoTuning::Fixed(v) => format!("fixed:{v}"),
    }
}

fn write_table<W: Write>(writer: W, report: &BenchmarkReport) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::input(format!("cannot write csv: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_COLUMNS).map_err(err)?;
    let spec = &report.spec;
    let lasso = lasso_label(report.options.lasso);
    for m in &report.methods {
        let x = &m.metrics;
        let pair = |s: &Summary| [s.mean.to_string(), s.sd.to_string()];
        let mut row = vec![m.method.name().to_owned()];
        for s in [
            &x.rmse,
            &x.fdr,
            &x.tpr,
            &x.coverage_signal,
            &x.coverage_null,
            &x.run_time,
        ] {
            row.extend(pair(s));
        }
        row.extend([
            x.failures.to_string(),
            x.fdr.undefined.to_string(),
            spec.name.clone(),
            spec.n.to_string(),
            spec.p.to_string(),
            spec.replications.to_string(),
            spec.seed.to_string(),
            report.options.level.to_string(),
            lasso.clone(),
        ]);
        w.write_record(&row).map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::input(format!("cannot write csv: {e}")))
}

pub fn benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    check_level(args.level)?;
    let spec = ExperimentSpec::by_name(&args.spec, args.common.seed, args.reps)?;
    let methods = args
        .methods
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Method::parse)
        .collect::<Result<Vec<_>, _>>()?;
    let options = BenchmarkOptions {
        level: args.level,
        lasso: parse_lasso(&args.lasso)?,
        gibbs_iterations: args.gibbs_iterations,
        gibbs_burn_in: args.burn_in,
        marginal: MarginalConfig {
            steps: args.marginal_steps,
            ..MarginalConfig::default()
        },
        jobs: None,
    };
    let pool = thread_pool(args.jobs)?;
    let report = pool.install(|| harness::run_benchmark(&spec, &methods, &options))?;
    write_table(open_output(args.common.output.as_ref())?, &report)?;
    if let Some(path) = &args.records {
        write_json(Some(path), &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareConfig {
    reps: usize,
    marginal: MarginalConfig,
    lasso: LassoTuning,
    spec: ExperimentSpec,
}

#[derive(Serialize)]
struct CompareRecord {
    index: u64,
    mse_nonzero: Option<f64>,
    mse_zero: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct CompareReport {
    command: &'static str,
    seed: u64,
    config: CompareConfig,
    mse_nonzero: Summary,
    mse_zero: Summary,
    failures: usize,
    replications: Vec<CompareRecord>,
}

pub fn compare_kl(args: CompareArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::config("--reps must be >= 1".into()));
    }
    let config = MarginalConfig {
        steps: args.steps,
        learning_rate: args.learning_rate,
        n_samples: args.samples,
    };
    let tuning = parse_lasso(&args.lasso)?;
    let seed = args.common.seed;
    let pool = thread_pool(args.jobs)?;
    let outcomes: Vec<_> = pool.install(|| {
        (0..args.reps as u64)
            .into_par_iter()
            .map(|i| (i, compare_joint_marginal(seed, i, &config, tuning)))
            .collect()
    });
    if let Some((_, Err(e))) = outcomes
        .iter()
        .find(|(_, r)| matches!(r, Err(tshrink_core::Error::Config(_))))
    {
        return Err(e.clone().into());
    }
    let records: Vec<CompareRecord> = outcomes
        .into_iter()
        .map(|(index, r)| match r {
            Ok(c) => CompareRecord {
                index,
                mse_nonzero: Some(c.mse_nonzero),
                mse_zero: Some(c.mse_zero),
                error: None,
            },
            Err(e) => CompareRecord {
                index,
                mse_nonzero: None,
                mse_zero: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let report = CompareReport {
        command: "compare-kl",
        seed,
        mse_nonzero: Summary::from_values(records.iter().filter_map(|r| r.mse_nonzero)),
        mse_zero: Summary::from_values(records.iter().filter_map(|r| r.mse_zero)),
        failures: records.iter().filter(|r| r.error.is_some()).count(),
        config: CompareConfig {
            reps: args.reps,
            marginal: config,
            lasso: tuning,
            spec: ExperimentSpec::toy_c(seed, args.reps),
        },
        replications: records,
    };
    write_json(args.common.output.as_ref(), &report)
}
