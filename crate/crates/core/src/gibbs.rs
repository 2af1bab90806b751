//! Blockwise Gibbs sampler under the same Student-t prior.
//!
//! Full conditionals, with σ treated as known:
//!
//! * λ_j | β_j ~ Gamma(a0 + 1/2, rate b_n + β_j²/2), independently over j;
//! * β_(k) | rest ~ N(m_(k), σ² (X_(k)ᵀX_(k) + σ²Λ_(k))⁻¹) with
//!   m_(k) = (X_(k)ᵀX_(k) + σ²Λ_(k))⁻¹ X_(k)ᵀ (Y − X_(−k) β_(−k)).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::linalg::BlockPlan;
use crate::model::{Dataset, Hyperparameters};
use crate::posterior::{selection_from_intervals, SelectionResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub blocks: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 200,
            blocks: 1,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.blocks == 0 || self.blocks > p {
            return Err(Error::Config(format!(
                "block count must lie in [1, {p}], got {}",
                self.blocks
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    /// One row per retained iteration.
    pub beta_samples: DMatrix<f64>,
    pub lambda_last: DVector<f64>,
}

impl GibbsChain {
    pub fn len(&self) -> usize {
        self.beta_samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_samples.nrows() == 0
    }

    pub fn mean(&self) -> DVector<f64> {
        self.beta_samples.row_mean().transpose()
    }

    pub fn draws(&self, j: usize) -> Vec<f64> {
        self.beta_samples.column(j).iter().copied().collect()
    }

    /// Equal-tailed empirical interval for coordinate `j`.
    pub fn interval(&self, j: usize, level: f64) -> (f64, f64) {
        let mut d = self.draws(j);
        d.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - level);
        (
            empirical_quantile(&d, tail),
            empirical_quantile(&d, 1.0 - tail),
        )
    }

    pub fn select(&self, level: f64) -> Result<SelectionResult> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain {
                op: "GibbsChain::select",
                msg: format!("level must lie in (0, 1), got {level}"),
            });
        }
        let intervals = (0..self.beta_samples.ncols())
            .map(|j| self.interval(j, level))
            .collect();
        Ok(selection_from_intervals(intervals, level))
    }
}

/// Linear-interpolation quantile of sorted data.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Independent draws λ_j ~ Gamma(a0 + 1/2, b_n + β_j²/2).
pub fn sample_lambda<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> DVector<f64> {
    let shape = hyper.a0 + 0.5;
    beta.map(|b| {
        let rate = hyper.bn + 0.5 * b * b;
        Gamma::new(shape, 1.0 / rate)
            .expect("shape and rate are positive")
            .sample(rng)
    })
}

/// One Gauss–Seidel pass of block draws for β, in place.
pub fn sample_beta_blocks<R: Rng + ?Sized>(
    beta: &mut DVector<f64>,
    lambda: &DVector<f64>,
    data: &Dataset,
    sigma: f64,
    plan: &BlockPlan,
    rng: &mut R,
) -> Result<()> {
    if let Some(j) = lambda.iter().position(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Domain {
            op: "sample_beta_blocks",
            msg: format!("lambda[{j}] = {} must be positive", lambda[j]),
        });
    }
    let mut resid = data.residual(beta);
    for k in 0..plan.len() {
        let range = plan.range(k);
        let xk = data.x().columns(range.start, range.len());
        let old = beta.rows(range.start, range.len()).clone_owned();
        let partial = &resid + xk * &old;
        let lam = &lambda.as_slice()[range.clone()];
        let new = plan.sample(k, data, &partial, lam, sigma, rng)?;
        resid = partial - xk * &new;
        beta.rows_mut(range.start, range.len()).copy_from(&new);
    }
    Ok(())
}

/// Runs the sampler from `beta_init`, alternating λ | β and β | λ draws.
/// σ is taken from `hyper.sigma` and held fixed.
pub fn gibbs_fit(
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &GibbsConfig,
    beta_init: &DVector<f64>,
) -> Result<GibbsChain> {
    config.validate(data.p())?;
    if beta_init.len() != data.p() {
        return Err(Error::Dimension {
            op: "gibbs_fit",
            expected: data.p(),
            got: beta_init.len(),
        });
    }
    let plan = BlockPlan::new(data, config.blocks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let kept = config.iterations - config.burn_in;
    let mut samples = DMatrix::zeros(kept, data.p());
    let mut beta = beta_init.clone();
    let mut lambda = sample_lambda(&beta, hyper, &mut rng);
    for it in 0..config.iterations {
        sample_beta_blocks(&mut beta, &lambda, data, hyper.sigma, &plan, &mut rng)
            .map_err(|e| e.at_iteration(it + 1))?;
        lambda = sample_lambda(&beta, hyper, &mut rng);
        if it >= config.burn_in {
            samples
                .row_mut(it - config.burn_in)
                .copy_from(&beta.transpose());
        }
    }
    Ok(GibbsChain {
        beta_samples: samples,
        lambda_last: lambda,
    })
}

/// Effective sample size using Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(draws: &[f64]) -> f64 {
    let n = draws.len();
    if n < 4 {
        return n as f64;
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = draws.iter().map(|d| d - mean).collect();
    let var = centered.iter().map(|c| c * c).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let mut pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10())
}
