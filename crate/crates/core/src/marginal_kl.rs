//! Direct minimisation of the marginal variational objective
//!
//! Ω̃ = −E_q log p(Y | β) + Σ_j KL(q(β_j) ‖ π(β_j)),
//!
//! where both q(β_j) and π(β_j) are Student-t. The KL term has no closed form
//! and is estimated by Monte Carlo with β_j = μ̃_j + s_j T_j, T_j ~ t(ν_j).
//! The expected log-likelihood is exact: E‖Y − Xβ‖² = ‖Y − Xμ̃‖² +
//! Σ_j n_j s_j² ν_j / (ν_j − 2). Parameters are (μ̃_j, ln s_j, ln(ν_j − 2)) and
//! are optimised with Adam on reparameterised gradients; the d.f. gradient
//! uses the score of the base t density with a leave-one-out baseline.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{self, lasso, ExperimentSpec};
use crate::model::{Dataset, Hyperparameters, VariationalState};
use crate::special_fn::{digamma_pos, log_gamma_pos};
use crate::vb;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_PI: f64 = 1.144_729_885_849_400_2;

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalState {
    pub mu_tilde: DVector<f64>,
    pub log_scale: DVector<f64>,
    /// ln(ν_j − 2), keeping every d.f. above 2.
    pub log_df_excess: DVector<f64>,
}

impl MarginalState {
    pub fn p(&self) -> usize {
        self.mu_tilde.len()
    }

    pub fn scale(&self, j: usize) -> f64 {
        self.log_scale[j].exp()
    }

    pub fn df(&self, j: usize) -> f64 {
        2.0 + self.log_df_excess[j].exp()
    }

    /// Student-t marginal implied by a joint (Normal–Gamma) state.
    pub fn from_joint(state: &VariationalState) -> Self {
        let p = state.p();
        Self {
            mu_tilde: state.mu.clone(),
            log_scale: DVector::from_fn(p, |j, _| state.marginal_scale(j).ln()),
            log_df_excess: DVector::from_fn(p, |j, _| (state.marginal_df(j) - 2.0).ln()),
        }
    }

    /// Same starting point as the coordinate-ascent fit: a_j = a0 + 1/2, b_j = b_n + μ_j².
    pub fn from_init(mu_init: &DVector<f64>, hyper: &Hyperparameters) -> Self {
        let a = hyper.a0 + 0.5;
        let p = mu_init.len();
        Self {
            mu_tilde: mu_init.clone(),
            log_scale: mu_init.map(|m| ((hyper.bn + m * m) / a).sqrt().ln()),
            log_df_excess: DVector::from_element(p, (2.0 * a - 2.0).ln()),
        }
    }

    /// Prior marginal: location 0, scale √(b_n/a0), 2a0 d.f.
    pub fn prior(p: usize, hyper: &Hyperparameters) -> Self {
        Self {
            mu_tilde: DVector::zeros(p),
            log_scale: DVector::from_element(p, (hyper.bn / hyper.a0).sqrt().ln()),
            log_df_excess: DVector::from_element(p, (2.0 * hyper.a0 - 2.0).ln()),
        }
    }

    fn check(&self, p: usize) -> Result<()> {
        for v in [&self.mu_tilde, &self.log_scale, &self.log_df_excess] {
            if v.len() != p {
                return Err(Error::Dimension {
                    op: "MarginalState",
                    expected: p,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalGradient {
    pub mu_tilde: DVector<f64>,
    pub log_scale: DVector<f64>,
    pub log_df_excess: DVector<f64>,
}

/// Log density of t(ν) located at `loc` with scale `scale`.
pub fn t_log_density(x: f64, loc: f64, scale: f64, df: f64) -> f64 {
    let z = (x - loc) / scale;
    t_log_norm(df) - scale.ln() - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

fn t_log_norm(df: f64) -> f64 {
    log_gamma_pos(0.5 * (df + 1.0)) - log_gamma_pos(0.5 * df) - 0.5 * (df.ln() + LN_PI)
}

/// ∂/∂ν of the standard t log density at fixed t.
fn t_df_score(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    0.5 * (digamma_pos(0.5 * (df + 1.0)) - digamma_pos(0.5 * df) - 1.0 / df - (t2 / df).ln_1p()
        + (df + 1.0) * t2 / (df * (df + t2)))
}

/// Everything about the data and prior the objective needs.
struct Problem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    col_sq: DVector<f64>,
    yty: f64,
    n: f64,
    sigma: f64,
    prior_df: f64,
    prior_scale: f64,
}

impl Problem {
    fn new(data: &Dataset, hyper: &Hyperparameters) -> Self {
        Self {
            gram: data.x().tr_mul(data.x()),
            xty: data.xty().clone(),
            col_sq: data.col_sq_norms().clone(),
            yty: data.yty(),
            n: data.n() as f64,
            sigma: hyper.sigma,
            prior_df: 2.0 * hyper.a0,
            prior_scale: (hyper.bn / hyper.a0).sqrt(),
        }
    }

    fn prior_log_density(&self, beta: f64) -> f64 {
        t_log_density(beta, 0.0, self.prior_scale, self.prior_df)
    }

    /// d/dβ of −ln π(β).
    fn prior_neg_log_grad(&self, beta: f64) -> f64 {
        let v = self.prior_df * self.prior_scale * self.prior_scale;
        (self.prior_df + 1.0) * beta / (v + beta * beta)
    }

    /// Exact −E_q ln p(Y | β) and its gradient.
    fn expected_nll(&self, state: &MarginalState) -> (f64, MarginalGradient) {
        let s2 = self.sigma * self.sigma;
        let gmu = &self.gram * &state.mu_tilde;
        let rss = self.yty - 2.0 * self.xty.dot(&state.mu_tilde) + state.mu_tilde.dot(&gmu);
        let p = state.p();
        let mut spread = 0.0;
        let mut g_ls = DVector::zeros(p);
        let mut g_df = DVector::zeros(p);
        for j in 0..p {
            let s = state.scale(j);
            let excess = state.log_df_excess[j].exp();
            let df = 2.0 + excess;
            let var = s * s * df / excess;
            spread += self.col_sq[j] * var;
            g_ls[j] = self.col_sq[j] * var / s2;
            // d var / d ln(ν−2) = −2 s² / (ν − 2)
            g_df[j] = -self.col_sq[j] * s * s / excess / s2;
        }
        let value = 0.5 * self.n * (LN_2PI + s2.ln()) + (rss.max(0.0) + spread) / (2.0 * s2);
        let g_mu = (gmu - &self.xty) / s2;
        (
            value,
            MarginalGradient {
                mu_tilde: g_mu,
                log_scale: g_ls,
                log_df_excess: g_df,
            },
        )
    }

    /// MC estimate of Σ_j KL(q_j ‖ π_j) and (optionally) its gradient.
    fn kl<R: Rng + ?Sized>(
        &self,
        state: &MarginalState,
        n_samples: usize,
        rng: &mut R,
        grad: Option<&mut MarginalGradient>,
    ) -> McEstimate {
        let p = state.p();
        let mut totals = vec![0.0; n_samples];
        let mut f = vec![0.0; n_samples];
        let mut score = vec![0.0; n_samples];
        let mut grad = grad;
        let inv = 1.0 / n_samples as f64;
        for j in 0..p {
            let (mu, s, df) = (state.mu_tilde[j], state.scale(j), state.df(j));
            let dist = StudentT::new(df).expect("df > 2");
            let log_norm = t_log_norm(df);
            let (mut g_mu, mut g_ls) = (0.0, 0.0);
            for k in 0..n_samples {
                let t: f64 = dist.sample(rng);
                let beta = mu + s * t;
                let log_q = log_norm - s.ln() - 0.5 * (df + 1.0) * (t * t / df).ln_1p();
                f[k] = log_q - self.prior_log_density(beta);
                totals[k] += f[k];
                if grad.is_some() {
                    let h = self.prior_neg_log_grad(beta);
                    g_mu += h;
                    // the path derivative of ln q(μ + sT) in ln s is −1
                    g_ls += h * s * t - 1.0;
                    score[k] = t_df_score(t, df);
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                g.mu_tilde[j] += g_mu * inv;
                g.log_scale[j] += g_ls * inv;
                let sum_f: f64 = f.iter().sum();
                let mut g_df = 0.0;
                for k in 0..n_samples {
                    let baseline = if n_samples > 1 {
                        (sum_f - f[k]) / (n_samples - 1) as f64
                    } else {
                        0.0
                    };
                    // d/dν E[F_ν(T)] = E[(F − c)·score] + E[score]
                    g_df += (f[k] - baseline + 1.0) * score[k];
                }
                g.log_df_excess[j] += g_df * inv * (df - 2.0);
            }
        }
        mean_and_se(&totals)
    }
}

fn mean_and_se(values: &[f64]) -> McEstimate {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let se = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        f64::NAN
    };
    McEstimate {
        value: mean,
        std_error: se,
    }
}

/// Unbiased Monte Carlo estimate of Ω̃ from `n_samples` joint draws of β.
pub fn mc_negative_elbo_marginal<R: Rng + ?Sized>(
    state: &MarginalState,
    data: &Dataset,
    hyper: &Hyperparameters,
    n_samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    state.check(data.p())?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let problem = Problem::new(data, hyper);
    let (nll, _) = problem.expected_nll(state);
    let kl = problem.kl(state, n_samples, rng, None);
    Ok(McEstimate {
        value: nll + kl.value,
        std_error: kl.std_error,
    })
}

/// Stochastic gradient of Ω̃ from `n_samples` draws per coordinate, together
/// with the objective estimate from the same draws.
pub fn mc_gradient<R: Rng + ?Sized>(
    state: &MarginalState,
    data: &Dataset,
    hyper: &Hyperparameters,
    n_samples: usize,
    rng: &mut R,
) -> Result<(McEstimate, MarginalGradient)> {
    state.check(data.p())?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let problem = Problem::new(data, hyper);
    Ok(problem.gradient(state, n_samples, rng))
}

impl Problem {
    fn gradient<R: Rng + ?Sized>(
        &self,
        state: &MarginalState,
        n_samples: usize,
        rng: &mut R,
    ) -> (McEstimate, MarginalGradient) {
        let (nll, mut grad) = self.expected_nll(state);
        let kl = self.kl(state, n_samples, rng, Some(&mut grad));
        (
            McEstimate {
                value: nll + kl.value,
                std_error: kl.std_error,
            },
            grad,
        )
    }
}

/// Adaptive-moment optimiser state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Draws per coordinate per gradient step.
    pub n_samples: usize,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            learning_rate: 0.001,
            n_samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub state: MarginalState,
    /// Per-step MC objective estimates.
    pub objective_trace: Vec<f64>,
    pub wall_time: f64,
}

/// Steps the objective must stay above 10× its starting value to count as diverged.
const DIVERGENCE_PATIENCE: usize = 50;

/// Adam on the reparameterised MC gradient of Ω̃ with σ held at `hyper.sigma`.
pub fn fit_marginal<R: Rng + ?Sized>(
    data: &Dataset,
    hyper: &Hyperparameters,
    init: MarginalState,
    config: &MarginalConfig,
    rng: &mut R,
) -> Result<MarginalFit> {
    init.check(data.p())?;
    if config.steps == 0 || config.n_samples == 0 {
        return Err(Error::Config("steps and n_samples must be >= 1".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be > 0, got {}",
            config.learning_rate
        )));
    }
    let start = Instant::now();
    let problem = Problem::new(data, hyper);
    let p = data.p();
    let mut params: Vec<f64> = init
        .mu_tilde
        .iter()
        .chain(init.log_scale.iter())
        .chain(init.log_df_excess.iter())
        .copied()
        .collect();
    let mut adam = Adam::new(3 * p, config.learning_rate);
    let mut state = init;
    let mut trace = Vec::with_capacity(config.steps);
    let mut flat_grad = vec![0.0; 3 * p];
    let mut initial = None;
    let mut above = 0;

    for step in 1..=config.steps {
        let (objective, grad) = problem.gradient(&state, config.n_samples, rng);
        let value = objective.value;
        if !value.is_finite() {
            return Err(Error::Numeric {
                op: "fit_marginal",
                detail: format!("objective is {value} at step {step}"),
            });
        }
        let first = *initial.get_or_insert(value);
        if value > first + 9.0 * first.abs() {
            above += 1;
            if above >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged {
                    step,
                    objective: value,
                    initial: first,
                });
            }
        } else {
            above = 0;
        }
        trace.push(value);
        flat_grad[..p].copy_from_slice(grad.mu_tilde.as_slice());
        flat_grad[p..2 * p].copy_from_slice(grad.log_scale.as_slice());
        flat_grad[2 * p..].copy_from_slice(grad.log_df_excess.as_slice());
        adam.step(&mut params, &flat_grad);
        state.mu_tilde.copy_from_slice(&params[..p]);
        state.log_scale.copy_from_slice(&params[p..2 * p]);
        state.log_df_excess.copy_from_slice(&params[2 * p..]);
    }

    Ok(MarginalFit {
        state,
        objective_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Mean squared differences between the joint and marginal locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMarginalComparison {
    pub mse_nonzero: f64,
    pub mse_zero: f64,
}

/// Generates replication `index` of the toy problem under `seed`, fits both
/// objectives from the same Lasso start and compares their location vectors.
pub fn compare_joint_marginal(
    seed: u64,
    index: u64,
    config: &MarginalConfig,
    tuning: lasso::LassoTuning,
) -> Result<JointMarginalComparison> {
    let spec = ExperimentSpec::toy_c(seed, 1);
    let rep = harness::generate(&spec, index)?;
    let hyper = spec.hyperparameters()?;
    let (_, init) = lasso::tuned_lasso(&rep.data, tuning)?;
    let joint = vb::fit(&rep.data, &hyper, &init)?;
    let mut rng = crate::rng::substream(seed, "marginal-kl", index);
    let marginal = fit_marginal(
        &rep.data,
        &hyper,
        MarginalState::from_init(&init, &hyper),
        config,
        &mut rng,
    )?;
    let mut nonzero = (0.0, 0usize);
    let mut zero = (0.0, 0usize);
    for j in 0..rep.data.p() {
        let d = (joint.state.mu[j] - marginal.state.mu_tilde[j]).powi(2);
        let slot = if rep.support.contains(&j) {
            &mut nonzero
        } else {
            &mut zero
        };
        slot.0 += d;
        slot.1 += 1;
    }
    Ok(JointMarginalComparison {
        mse_nonzero: nonzero.0 / nonzero.1.max(1) as f64,
        mse_zero: zero.0 / zero.1.max(1) as f64,
    })
}
