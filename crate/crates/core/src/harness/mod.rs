//! Seeded simulation experiments: data generation, Lasso start, per-method
//! fits, metrics and replication summaries.
//!
//! RMSE is reported per coordinate, ‖β̂ − β⁰‖₂/√p.

pub mod lasso;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{self, GibbsConfig};
use crate::marginal_kl::{self, MarginalConfig, MarginalState};
use crate::model::{Dataset, Hyperparameters, NoiseMode, PriorPreset};
use crate::posterior::{self, t_interval};
use crate::rng::{substream, substream_seed};
use crate::vb;

use lasso::LassoTuning;

/// Where the nonzero coefficients sit and what they equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SignalRule {
    /// `sparsity` coefficients equal to `value` at uniformly random positions.
    RandomPositions { value: f64 },
    /// β⁰ starts with these values; the rest are zero.
    Leading { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub sparsity: usize,
    pub signal: SignalRule,
    pub sigma: f64,
    pub noise: NoiseMode,
    pub preset: PriorPreset,
    pub replications: usize,
    pub seed: u64,
    /// Blocks for the variational mean sweep; `None` uses the default for p.
    pub vb_blocks: Option<usize>,
    pub gibbs_blocks: usize,
}

impl ExperimentSpec {
    fn random_positions(name: &str, value: f64, seed: u64, replications: usize) -> Self {
        Self {
            name: name.into(),
            n: 100,
            p: 400,
            sparsity: 20,
            signal: SignalRule::RandomPositions { value },
            sigma: 4.0,
            noise: NoiseMode::Known,
            preset: PriorPreset::Simulation,
            replications,
            seed,
            vb_blocks: Some(1),
            gibbs_blocks: 5,
        }
    }

    /// n = 100, p = 400, 20 coefficients equal to ln 100, σ = 4 known.
    pub fn example1a(seed: u64, replications: usize) -> Self {
        Self::random_positions("example1a", 100f64.ln(), seed, replications)
    }

    /// As `example1a` with coefficients ln(100)/2.
    pub fn example1b(seed: u64, replications: usize) -> Self {
        Self::random_positions("example1b", 0.5 * 100f64.ln(), seed, replications)
    }

    /// n = 100, p = 1000, β⁰ = (3, 2, 1, 0, …), σ = 1 estimated.
    pub fn example2(seed: u64, replications: usize) -> Self {
        Self {
            name: "example2".into(),
            n: 100,
            p: 1000,
            sparsity: 3,
            signal: SignalRule::Leading {
                values: vec![3.0, 2.0, 1.0],
            },
            sigma: 1.0,
            noise: NoiseMode::EmpiricalBayes,
            preset: PriorPreset::Simulation,
            replications,
            seed,
            vb_blocks: Some(10),
            gibbs_blocks: 10,
        }
    }

    /// n = p = 100, β⁰ = (10 × 5, 0, …), σ = 1 known, strict prior.
    pub fn toy_c(seed: u64, replications: usize) -> Self {
        Self {
            name: "toyC".into(),
            n: 100,
            p: 100,
            sparsity: 5,
            signal: SignalRule::Leading {
                values: vec![10.0; 5],
            },
            sigma: 1.0,
            noise: NoiseMode::Known,
            preset: PriorPreset::Strict,
            replications,
            seed,
            vb_blocks: Some(1),
            gibbs_blocks: 1,
        }
    }

    pub fn by_name(name: &str, seed: u64, replications: usize) -> Result<Self> {
        match name {
            "example1a" => Ok(Self::example1a(seed, replications)),
            "example1b" => Ok(Self::example1b(seed, replications)),
            "example2" => Ok(Self::example2(seed, replications)),
            "toyC" | "toy_c" | "toyc" => Ok(Self::toy_c(seed, replications)),
            other => Err(Error::Config(format!(
                "unknown experiment '{other}' (expected example1a, example1b, example2 or toyC)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.p == 0 {
            return bad(format!(
                "n and p must be positive, got n={}, p={}",
                self.n, self.p
            ));
        }
        if self.sparsity > self.p {
            return bad(format!("sparsity {} exceeds p = {}", self.sparsity, self.p));
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and > 0, got {}", self.sigma));
        }
        if let SignalRule::Leading { values } = &self.signal {
            if values.len() != self.sparsity || values.len() > self.p {
                return bad(format!(
                    "{} leading coefficients given for sparsity {} and p = {}",
                    values.len(),
                    self.sparsity,
                    self.p
                ));
            }
        }
        if self.gibbs_blocks == 0 || self.gibbs_blocks > self.p {
            return bad(format!("gibbs block count must lie in [1, {}]", self.p));
        }
        Ok(())
    }

    /// Hyperparameters the variational fit uses for this experiment.
    pub fn hyperparameters(&self) -> Result<Hyperparameters> {
        let mut hyper = Hyperparameters::with_preset(self.n, self.p, self.preset)?;
        hyper = match self.noise {
            NoiseMode::Known => hyper.known_sigma(self.sigma),
            NoiseMode::EmpiricalBayes => hyper.empirical_bayes(),
        };
        if let Some(b) = self.vb_blocks {
            hyper = hyper.blocks(b);
        }
        hyper.validate(self.p)?;
        Ok(hyper)
    }
}

/// One simulated data set with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: u64,
    pub data: Dataset,
    pub beta: DVector<f64>,
    /// Sorted indices of the nonzero coefficients.
    pub support: Vec<usize>,
}

/// Replication `index` of `spec`. Design, noise and signal positions use
/// separate substreams of the base seed.
pub fn generate(spec: &ExperimentSpec, index: u64) -> Result<Replication> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut beta = DVector::zeros(p);
    let support: Vec<usize> = match &spec.signal {
        SignalRule::RandomPositions { value } => {
            let mut rng = substream(spec.seed, "support", index);
            let mut idx = sample(&mut rng, p, spec.sparsity).into_vec();
            idx.sort_unstable();
            for &j in &idx {
                beta[j] = *value;
            }
            idx
        }
        SignalRule::Leading { values } => {
            for (j, v) in values.iter().enumerate() {
                beta[j] = *v;
            }
            (0..values.len()).filter(|&j| values[j] != 0.0).collect()
        }
    };
    let mut design = substream(spec.seed, "design", index);
    // column-major fill so column j depends only on the first (j+1)·n draws
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut design));
    let mut noise = substream(spec.seed, "noise", index);
    let eps = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut noise));
    let y = &x * &beta + eps * spec.sigma;
    let data = Dataset::new(x, y)?;
    Ok(Replication {
        index,
        data,
        beta,
        support,
    })
}

/// Metrics of a single fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub rmse: f64,
    /// NaN when nothing is selected.
    pub fdr: f64,
    /// NaN when the true support is empty.
    pub tpr: f64,
    pub coverage_signal: f64,
    pub coverage_null: f64,
    pub run_time: f64,
}

/// Scores an estimate, its selected set and its intervals against the truth.
pub fn evaluate(
    estimate: &DVector<f64>,
    selected: &[usize],
    intervals: &[(f64, f64)],
    truth: &DVector<f64>,
    support: &[usize],
    run_time: f64,
) -> Result<ReplicationMetrics> {
    let p = truth.len();
    for (got, op) in [
        (estimate.len(), "evaluate: estimate"),
        (intervals.len(), "evaluate: intervals"),
    ] {
        if got != p {
            return Err(Error::Dimension {
                op,
                expected: p,
                got,
            });
        }
    }
    let mut in_support = vec![false; p];
    for &j in support {
        in_support[j] = true;
    }
    let rmse = (estimate - truth).norm() / (p as f64).sqrt();
    let hits = selected.iter().filter(|&&j| in_support[j]).count();
    let fdr = if selected.is_empty() {
        f64::NAN
    } else {
        (selected.len() - hits) as f64 / selected.len() as f64
    };
    let tpr = if support.is_empty() {
        f64::NAN
    } else {
        hits as f64 / support.len() as f64
    };
    let (mut cov_s, mut cov_n) = (0usize, 0usize);
    for j in 0..p {
        let (lo, hi) = intervals[j];
        if lo <= truth[j] && truth[j] <= hi {
            if in_support[j] {
                cov_s += 1;
            } else {
                cov_n += 1;
            }
        }
    }
    let ratio = |k: usize, m: usize| {
        if m == 0 {
            f64::NAN
        } else {
            k as f64 / m as f64
        }
    };
    Ok(ReplicationMetrics {
        rmse,
        fdr,
        tpr,
        coverage_signal: ratio(cov_s, support.len()),
        coverage_null: ratio(cov_n, p - support.len()),
        run_time,
    })
}

/// Mean and sample s.d. over the defined (non-NaN) values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
    /// Values left out because they were undefined.
    pub undefined: usize,
}

impl Summary {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut kept = Vec::new();
        let mut undefined = 0;
        for v in values {
            if v.is_nan() {
                undefined += 1;
            } else {
                kept.push(v);
            }
        }
        let m = kept.len();
        let mean = if m == 0 {
            f64::NAN
        } else {
            kept.iter().sum::<f64>() / m as f64
        };
        let sd = match m {
            0 => f64::NAN,
            1 => 0.0,
            _ => (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt(),
        };
        Self {
            mean,
            sd,
            count: m,
            undefined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: Summary,
    pub fdr: Summary,
    pub tpr: Summary,
    pub coverage_signal: Summary,
    pub coverage_null: Summary,
    pub run_time: Summary,
    /// Replications whose fit returned an error.
    pub failures: usize,
}

impl MetricsReport {
    pub fn aggregate(metrics: &[ReplicationMetrics], failures: usize) -> Self {
        let col = |f: fn(&ReplicationMetrics) -> f64| Summary::from_values(metrics.iter().map(f));
        Self {
            rmse: col(|m| m.rmse),
            fdr: col(|m| m.fdr),
            tpr: col(|m| m.tpr),
            coverage_signal: col(|m| m.coverage_signal),
            coverage_null: col(|m| m.coverage_null),
            run_time: col(|m| m.run_time),
            failures,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Coordinate-ascent variational fit.
    #[serde(rename = "tvb")]
    TVb,
    /// Blockwise Gibbs sampler.
    #[serde(rename = "tmcmc")]
    TMcmc,
    /// Stochastic optimisation of the marginal objective.
    #[serde(rename = "marginal")]
    MarginalVb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TVb => "tvb",
            Method::TMcmc => "tmcmc",
            Method::MarginalVb => "marginal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tvb" | "t-vb" => Ok(Method::TVb),
            "tmcmc" | "t-mcmc" | "gibbs" => Ok(Method::TMcmc),
            "marginal" | "marginal-vb" | "mvb" => Ok(Method::MarginalVb),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected tvb, tmcmc or marginal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub level: f64,
    pub lasso: LassoTuning,
    pub gibbs_iterations: usize,
    pub gibbs_burn_in: usize,
    pub marginal: MarginalConfig,
    /// Worker threads for replications; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            lasso: LassoTuning::CrossValidated(10),
            gibbs_iterations: 1000,
            gibbs_burn_in: 200,
            marginal: MarginalConfig::default(),
            jobs: None,
        }
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub method: Method,
    pub metrics: Option<ReplicationMetrics>,
    pub error: Option<String>,
    /// Noise s.d. the method used (estimated under EB).
    pub sigma: Option<f64>,
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub spec: ExperimentSpec,
    pub options: BenchmarkOptions,
    pub methods: Vec<MethodReport>,
    /// Ordered by replication, then by method.
    pub records: Vec<ReplicationRecord>,
}

/// Noise s.d. from a Lasso fit: √(RSS / (n − |support|)).
pub fn lasso_sigma(data: &Dataset, beta: &DVector<f64>) -> f64 {
    let active = beta.iter().filter(|v| **v != 0.0).count();
    let dof = data.n().saturating_sub(active).max(1) as f64;
    (data.residual(beta).norm_squared() / dof)
        .sqrt()
        .max(vb::SIGMA_FLOOR)
}

struct Fitted {
    estimate: DVector<f64>,
    selected: Vec<usize>,
    intervals: Vec<(f64, f64)>,
    sigma: f64,
}

fn fit_method(
    method: Method,
    rep: &Replication,
    spec: &ExperimentSpec,
    hyper: &Hyperparameters,
    init: &DVector<f64>,
    options: &BenchmarkOptions,
) -> Result<Fitted> {
    let data = &rep.data;
    // the sampler and the marginal fit hold σ fixed; under EB they use the Lasso residual estimate
    let fixed_sigma = match hyper.noise {
        NoiseMode::Known => hyper.sigma,
        NoiseMode::EmpiricalBayes => lasso_sigma(data, init),
    };
    match method {
        Method::TVb => {
            let fit = vb::fit(data, hyper, init)?;
            let sel = posterior::select_variables(&fit.state, options.level)?;
            Ok(Fitted {
                estimate: fit.state.mu.clone(),
                selected: sel.selected,
                intervals: sel.intervals,
                sigma: fit.state.sigma,
            })
        }
        Method::TMcmc => {
            let config = GibbsConfig {
                iterations: options.gibbs_iterations,
                burn_in: options.gibbs_burn_in,
                blocks: spec.gibbs_blocks,
                seed: substream_seed(spec.seed, "gibbs", rep.index),
            };
            let h = hyper.clone().known_sigma(fixed_sigma);
            let chain = gibbs::gibbs_fit(data, &h, &config, init)?;
            let sel = chain.select(options.level)?;
            Ok(Fitted {
                estimate: chain.mean(),
                selected: sel.selected,
                intervals: sel.intervals,
                sigma: fixed_sigma,
            })
        }
        Method::MarginalVb => {
            let h = hyper.clone().known_sigma(fixed_sigma);
            let mut rng = substream(spec.seed, "marginal-kl", rep.index);
            let fit = marginal_kl::fit_marginal(
                data,
                &h,
                MarginalState::from_init(init, &h),
                &options.marginal,
                &mut rng,
            )?;
            let s = &fit.state;
            let intervals = (0..s.p())
                .map(|j| t_interval(s.mu_tilde[j], s.scale(j), s.df(j), options.level))
                .collect::<Result<Vec<_>>>()?;
            let sel = posterior::selection_from_intervals(intervals, options.level);
            Ok(Fitted {
                estimate: s.mu_tilde.clone(),
                selected: sel.selected,
                intervals: sel.intervals,
                sigma: fixed_sigma,
            })
        }
    }
}

/// Runs every method on replication `index`, all from the same data and Lasso start.
pub fn run_replication(
    spec: &ExperimentSpec,
    index: u64,
    methods: &[Method],
    options: &BenchmarkOptions,
) -> Result<Vec<ReplicationRecord>> {
    let rep = generate(spec, index)?;
    let hyper = spec.hyperparameters()?;
    let init = lasso::tuned_lasso(&rep.data, options.lasso).map(|(_, b)| b);
    Ok(methods
        .iter()
        .map(|&method| {
            let outcome = init.clone().and_then(|init| {
                let start = Instant::now();
                let fitted = fit_method(method, &rep, spec, &hyper, &init, options)?;
                let elapsed = start.elapsed().as_secs_f64();
                let metrics = evaluate(
                    &fitted.estimate,
                    &fitted.selected,
                    &fitted.intervals,
                    &rep.beta,
                    &rep.support,
                    elapsed,
                )?;
                Ok((metrics, fitted))
            });
            match outcome {
                Ok((metrics, fitted)) => ReplicationRecord {
                    replication: index,
                    method,
                    metrics: Some(metrics),
                    error: None,
                    sigma: Some(fitted.sigma),
                    selected: Some(fitted.selected.len()),
                },
                Err(e) => ReplicationRecord {
                    replication: index,
                    method,
                    metrics: None,
                    error: Some(e.to_string()),
                    sigma: None,
                    selected: None,
                },
            }
        })
        .collect())
}

/// Runs all replications of `spec` and summarises each method.
pub fn run_benchmark(
    spec: &ExperimentSpec,
    methods: &[Method],
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    spec.validate()?;
    spec.hyperparameters()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let indices: Vec<u64> = (0..spec.replications as u64).collect();
    let run = || -> Result<Vec<Vec<ReplicationRecord>>> {
        indices
            .par_iter()
            .map(|&i| run_replication(spec, i, methods, options))
            .collect()
    };
    let per_rep = match options.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
    let reports = methods
        .iter()
        .map(|&method| {
            let rows: Vec<&ReplicationRecord> =
                records.iter().filter(|r| r.method == method).collect();
            let metrics: Vec<ReplicationMetrics> = rows.iter().filter_map(|r| r.metrics).collect();
            MethodReport {
                method,
                metrics: MetricsReport::aggregate(&metrics, rows.len() - metrics.len()),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        spec: spec.clone(),
        options: options.clone(),
        methods: reports,
        records,
    })
}
