//! Coordinate-ascent variational inference under the Student-t shrinkage prior.
//!
//! The prior is the Normal–Gamma mixture β_j | λ_j ~ N(0, 1/λ_j),
//! λ_j ~ Gamma(a0, b_n) (shape–rate), and the variational family has the same
//! shape: β_j | λ_j ~ N(μ_j, 1/λ_j), λ_j ~ Gamma(a_j, b_j). The objective is the
//! negative ELBO Ω of the joint law of (β, λ), which is available in closed
//! form. Each outer iteration performs one Gauss–Seidel sweep over the mean
//! blocks, then updates every (a_j, b_j) pair, then (optionally) the noise
//! scale. Every step is an exact or safeguarded minimisation, so Ω never
//! increases.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::BlockPlan;
use crate::model::{Dataset, Hyperparameters, NoiseMode, VariationalState};
use crate::special_fn::{digamma_pos, log_gamma_pos, trigamma_pos};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower bound on the noise scale under empirical Bayes.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Lower end of the shape bracket.
const SHAPE_LO: f64 = 1.0 + 1e-6;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub state: VariationalState,
    /// Negative ELBO of the initial state followed by one value per outer iteration.
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
}

impl FitResult {
    pub fn final_elbo(&self) -> f64 {
        *self
            .elbo_trace
            .last()
            .expect("trace holds the initial value")
    }
}

/// Partial derivatives of Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub mu: DVector<f64>,
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub sigma: f64,
}

fn numeric(op: &'static str, detail: String) -> Error {
    Error::Numeric { op, detail }
}

fn check_compatible(state: &VariationalState, data: &Dataset) -> Result<()> {
    if state.p() != data.p() {
        return Err(Error::Dimension {
            op: "VariationalState",
            expected: data.p(),
            got: state.p(),
        });
    }
    state.check()
}

/// Σ_j n_j b_j / (a_j - 1): the trace of XᵀX against E_q[diag(1/λ)].
fn expected_inverse_precision_trace(state: &VariationalState, data: &Dataset) -> f64 {
    data.col_sq_norms()
        .iter()
        .zip(state.a.iter().zip(state.b.iter()))
        .map(|(nj, (a, b))| nj * b / (a - 1.0))
        .sum()
}

/// Closed-form negative ELBO, including the Gaussian normalising constant
/// n ln σ + (n/2) ln 2π so that values stay comparable when σ changes.
pub fn negative_elbo(
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<f64> {
    check_compatible(state, data)?;
    let n = data.n() as f64;
    let s2 = state.sigma * state.sigma;
    let rss = data.residual(&state.mu).norm_squared();

    let likelihood = n * state.sigma.ln() + 0.5 * n * LN_2PI + rss / (2.0 * s2);
    if !likelihood.is_finite() {
        return Err(numeric(
            "negative_elbo",
            format!("likelihood term is {likelihood}"),
        ));
    }
    let variance = expected_inverse_precision_trace(state, data) / (2.0 * s2);
    if !variance.is_finite() {
        return Err(numeric(
            "negative_elbo",
            format!("variance term is {variance}"),
        ));
    }
    let mut prior = 0.0;
    let lg_a0 = log_gamma_pos(hyper.a0);
    for j in 0..state.p() {
        let t = coordinate_prior_terms(state.mu[j], state.a[j], state.b[j], hyper, lg_a0);
        if !t.is_finite() {
            return Err(numeric(
                "negative_elbo",
                format!(
                    "KL term of coordinate {j} is {t} (mu={}, a={}, b={})",
                    state.mu[j], state.a[j], state.b[j]
                ),
            ));
        }
        prior += t;
    }
    Ok(likelihood + variance + prior)
}

/// (μ²/2 + b_n)(a/b) + a0 ln(b/b_n) − ln Γ(a) + ln Γ(a0) + (a − a0) ψ(a) − a
fn coordinate_prior_terms(mu: f64, a: f64, b: f64, hyper: &Hyperparameters, lg_a0: f64) -> f64 {
    (0.5 * mu * mu + hyper.bn) * a / b + hyper.a0 * (b / hyper.bn).ln() - log_gamma_pos(a)
        + lg_a0
        + (a - hyper.a0) * digamma_pos(a)
        - a
}

/// Analytic gradient of [`negative_elbo`].
pub fn elbo_gradient(
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<ElboGradient> {
    check_compatible(state, data)?;
    let s2 = state.sigma * state.sigma;
    let resid = data.residual(&state.mu);
    let lambda = state.precision_mean();
    let mu = -data.x().tr_mul(&resid) / s2 + lambda.component_mul(&state.mu);
    let p = state.p();
    let mut ga = DVector::zeros(p);
    let mut gb = DVector::zeros(p);
    for j in 0..p {
        let (a, b) = (state.a[j], state.b[j]);
        let nj = data.col_sq_norms()[j];
        let k = 0.5 * state.mu[j] * state.mu[j] + hyper.bn;
        ga[j] = -nj / (2.0 * s2) * b / ((a - 1.0) * (a - 1.0))
            + k / b
            + (a - hyper.a0) * trigamma_pos(a)
            - 1.0;
        gb[j] = nj / (2.0 * s2 * (a - 1.0)) - k * a / (b * b) + hyper.a0 / b;
    }
    let n = data.n() as f64;
    let total = resid.norm_squared() + expected_inverse_precision_trace(state, data);
    let sigma = n / state.sigma - total / (s2 * state.sigma);
    Ok(ElboGradient {
        mu,
        a: ga,
        b: gb,
        sigma,
    })
}

/// Starting point: μ from the supplied estimate, a_j = a0 + 1/2, b_j = b_n + μ_j².
pub fn initialize_state(
    data: &Dataset,
    hyper: &Hyperparameters,
    mu_init: &DVector<f64>,
) -> Result<VariationalState> {
    if mu_init.len() != data.p() {
        return Err(Error::Dimension {
            op: "initialize_state",
            expected: data.p(),
            got: mu_init.len(),
        });
    }
    if let Some(j) = mu_init.iter().position(|m| !m.is_finite()) {
        return Err(Error::Domain {
            op: "initialize_state",
            msg: format!("mu_init[{j}] is not finite"),
        });
    }
    let p = data.p();
    let sigma = match hyper.noise {
        NoiseMode::Known => hyper.sigma,
        NoiseMode::EmpiricalBayes => {
            let rss = data.residual(mu_init).norm_squared();
            (rss / data.n() as f64).sqrt().max(SIGMA_FLOOR)
        }
    };
    Ok(VariationalState {
        mu: mu_init.clone(),
        a: DVector::from_element(p, hyper.a0 + 0.5),
        b: mu_init.map(|m| hyper.bn + m * m),
        sigma,
    })
}

/// One Gauss–Seidel sweep of the block mean update, using a fresh block plan.
pub fn update_mu(
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<DVector<f64>> {
    check_compatible(state, data)?;
    let plan = BlockPlan::new(data, hyper.blocks)?;
    let mut mu = state.mu.clone();
    sweep_mu(&plan, data, state, &mut mu)?;
    Ok(mu)
}

/// One Gauss–Seidel sweep over the blocks of `plan`, writing into `mu`.
/// The precisions a/b and σ are taken from `state`.
pub fn sweep_mu(
    plan: &BlockPlan,
    data: &Dataset,
    state: &VariationalState,
    mu: &mut DVector<f64>,
) -> Result<()> {
    let s2 = state.sigma * state.sigma;
    let mut resid = data.residual(mu);
    for (k, range) in plan.ranges().enumerate() {
        let xk = data.x().columns(range.start, range.len());
        let old = mu.rows(range.start, range.len()).clone_owned();
        let partial = &resid + xk * &old;
        let d: Vec<f64> = range
            .clone()
            .map(|j| s2 * state.a[j] / state.b[j])
            .collect();
        if let Some(j) = d.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(numeric(
                "update_mu",
                format!(
                    "precision of coordinate {} is {}",
                    range.start + j,
                    d[j] / s2
                ),
            ));
        }
        let new = plan.solve(k, data, &partial, &d)?;
        if new.iter().any(|v| !v.is_finite()) {
            return Err(numeric(
                "update_mu",
                format!("block {k} produced a non-finite mean"),
            ));
        }
        resid = partial - xk * &new;
        mu.rows_mut(range.start, range.len()).copy_from(&new);
    }
    Ok(())
}

/// Per-coordinate pieces of Ω that depend on a_j with μ_j, b_j fixed.
struct ShapeProblem {
    /// n_j b_j / (2σ²)
    c_var: f64,
    /// (μ_j²/2 + b_n) / b_j
    c_prec: f64,
    a0: f64,
}

impl ShapeProblem {
    fn new(j: usize, state: &VariationalState, data: &Dataset, hyper: &Hyperparameters) -> Self {
        let b = state.b[j];
        let s2 = state.sigma * state.sigma;
        Self {
            c_var: data.col_sq_norms()[j] * b / (2.0 * s2),
            c_prec: (0.5 * state.mu[j] * state.mu[j] + hyper.bn) / b,
            a0: hyper.a0,
        }
    }

    /// ∂Ω/∂a_j.
    fn g(&self, a: f64) -> f64 {
        let am1 = a - 1.0;
        -self.c_var / (am1 * am1) + self.c_prec + (a - self.a0) * trigamma_pos(a) - 1.0
    }

    /// Ω restricted to a_j, up to terms free of a_j.
    fn objective(&self, a: f64) -> f64 {
        self.c_var / (a - 1.0) + self.c_prec * a - log_gamma_pos(a) + (a - self.a0) * digamma_pos(a)
            - a
    }
}

/// Root of ∂Ω/∂a_j = 0 by a bracketed search, kept only if it does not raise Ω.
pub fn update_shape(
    j: usize,
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<f64> {
    let b = state.b[j];
    if !(b > 0.0 && b.is_finite()) || !state.mu[j].is_finite() {
        return Err(Error::Domain {
            op: "update_shape",
            msg: format!(
                "coordinate {j} needs b > 0 and finite mu (b={b}, mu={})",
                state.mu[j]
            ),
        });
    }
    let prob = ShapeProblem::new(j, state, data, hyper);
    let root = shape_root(j, &prob)?;
    let old = state.a[j];
    if prob.objective(root) <= prob.objective(old) {
        Ok(root)
    } else {
        Ok(old)
    }
}

fn shape_root(j: usize, prob: &ShapeProblem) -> Result<f64> {
    increasing_root(j, prob.a0, |a| prob.g(a))
}

/// Root of an increasing derivative on [SHAPE_LO, ∞), or SHAPE_LO when it is
/// already non-negative there.
fn increasing_root(j: usize, a0: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    let mut lo = SHAPE_LO;
    let mut g_lo = g(lo);
    if g_lo >= 0.0 {
        // the singular term is not yet dominant this close to 1; the objective
        // increases on the whole bracket, so the left end is the minimiser
        return Ok(lo);
    }
    let mut hi = (2.0 * a0).max(4.0);
    let mut g_hi = g(hi);
    let mut doublings = 0;
    while !(g_hi > 0.0) {
        if doublings == MAX_DOUBLINGS || g_hi.is_nan() {
            return Err(Error::RootBracket {
                index: j,
                lo,
                hi,
                g_lo,
                g_hi,
            });
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = g(hi);
        doublings += 1;
    }
    Ok(refine_root(lo, g_lo, hi, g_hi, g))
}

/// Like [`increasing_root`], but brackets outward from `guess` with growing
/// steps, which keeps the bracket short when the root has barely moved.
fn increasing_root_near(j: usize, guess: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    let g_guess = g(guess);
    if g_guess == 0.0 {
        return Ok(guess);
    }
    let mut step = 0.01 * (guess - 1.0);
    if g_guess > 0.0 {
        let (hi, g_hi) = (guess, g_guess);
        let mut lo = guess;
        let mut g_lo = g_guess;
        while g_lo > 0.0 {
            if lo <= SHAPE_LO {
                return Ok(SHAPE_LO);
            }
            lo = (lo - step).max(SHAPE_LO);
            g_lo = g(lo);
            step *= 4.0;
        }
        return Ok(refine_root(lo, g_lo, hi, g_hi, g));
    }
    let (lo, g_lo) = (guess, g_guess);
    let mut hi = guess;
    let mut g_hi = g_guess;
    let mut doublings = 0;
    while !(g_hi > 0.0) {
        if doublings == 2 * MAX_DOUBLINGS || g_hi.is_nan() {
            return Err(Error::RootBracket {
                index: j,
                lo,
                hi,
                g_lo,
                g_hi,
            });
        }
        hi += step;
        g_hi = g(hi);
        step *= 4.0;
        doublings += 1;
    }
    Ok(refine_root(lo, g_lo, hi, g_hi, g))
}

/// Shrinks a sign-change bracket (g_lo ≤ 0 < g_hi) to relative width 1e-10.
/// False position, falling back to bisection whenever a step fails to halve
/// the bracket; points are nudged at least tol/2 from the ends so the bracket
/// itself collapses.
fn refine_root(
    mut lo: f64,
    mut g_lo: f64,
    mut hi: f64,
    mut g_hi: f64,
    g: impl Fn(f64) -> f64,
) -> f64 {
    let mut bisect = false;
    loop {
        let width = hi - lo;
        let tol = 1e-10 * (1.0 + lo);
        if width < tol {
            break;
        }
        let mut x = if bisect {
            0.5 * (lo + hi)
        } else {
            lo - g_lo * width / (g_hi - g_lo)
        };
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        x = x.clamp(lo + 0.5 * tol, hi - 0.5 * tol);
        if x <= lo || x >= hi {
            break;
        }
        let g_x = g(x);
        if g_x > 0.0 {
            hi = x;
            g_hi = g_x;
        } else {
            lo = x;
            g_lo = g_x;
        }
        bisect = hi - lo > 0.5 * width;
    }
    0.5 * (lo + hi)
}

/// Ω restricted to the pair (a_j, b_j) with μ_j and σ fixed.
struct PairProblem {
    /// n_j / (2σ²)
    c_n: f64,
    /// μ_j²/2 + b_n
    c: f64,
    a0: f64,
}

impl PairProblem {
    fn new(j: usize, state: &VariationalState, data: &Dataset, hyper: &Hyperparameters) -> Self {
        Self {
            c_n: data.col_sq_norms()[j] / (2.0 * state.sigma * state.sigma),
            c: 0.5 * state.mu[j] * state.mu[j] + hyper.bn,
            a0: hyper.a0,
        }
    }

    /// Minimiser of Ω over b_j at fixed a_j.
    fn rate(&self, a: f64) -> f64 {
        let quad = self.c_n / (a - 1.0);
        let constant = self.c * a;
        2.0 * constant / (self.a0 + (self.a0 * self.a0 + 4.0 * quad * constant).sqrt())
    }

    /// ∂Ω/∂a_j along b_j = rate(a_j), which equals the derivative of the profile.
    fn profile_slope(&self, a: f64) -> f64 {
        let b = self.rate(a);
        let am1 = a - 1.0;
        -self.c_n * b / (am1 * am1) + self.c / b + (a - self.a0) * trigamma_pos(a) - 1.0
    }

    fn objective(&self, a: f64, b: f64) -> f64 {
        self.c_n * b / (a - 1.0) + self.c * a / b + self.a0 * b.ln() - log_gamma_pos(a)
            + (a - self.a0) * digamma_pos(a)
            - a
    }
}

/// Joint minimiser of Ω over (a_j, b_j): the shape solves the profile
/// stationarity equation with the rate at its closed-form optimum. The current
/// pair is kept if the candidate would raise Ω.
pub fn update_shape_rate(
    j: usize,
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<(f64, f64)> {
    let (a_old, b_old) = (state.a[j], state.b[j]);
    if !(b_old > 0.0 && b_old.is_finite() && a_old > 1.0) || !state.mu[j].is_finite() {
        return Err(Error::Domain {
            op: "update_shape_rate",
            msg: format!(
                "coordinate {j} needs a > 1, b > 0 and finite mu (a={a_old}, b={b_old}, mu={})",
                state.mu[j]
            ),
        });
    }
    let prob = PairProblem::new(j, state, data, hyper);
    let a = increasing_root_near(j, a_old, |a| prob.profile_slope(a))?;
    let b = prob.rate(a);
    if !(b > 0.0 && b.is_finite()) {
        return Err(numeric(
            "update_shape_rate",
            format!("coordinate {j} produced b = {b}"),
        ));
    }
    if prob.objective(a, b) <= prob.objective(a_old, b_old) {
        Ok((a, b))
    } else {
        Ok((a_old, b_old))
    }
}

/// Positive root of (n_j / (2σ²(a_j − 1))) b² + a0 b − (μ_j²/2 + b_n) a_j = 0.
pub fn update_rate(
    j: usize,
    state: &VariationalState,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<f64> {
    let a = state.a[j];
    if !(a > 1.0) {
        return Err(Error::Domain {
            op: "update_rate",
            msg: format!("a[{j}] = {a} must exceed 1"),
        });
    }
    let s2 = state.sigma * state.sigma;
    let quad = data.col_sq_norms()[j] / (2.0 * s2 * (a - 1.0));
    let constant = (0.5 * state.mu[j] * state.mu[j] + hyper.bn) * a;
    // rationalised form of (-a0 + sqrt(a0² + 4 quad constant)) / (2 quad)
    let b = 2.0 * constant / (hyper.a0 + (hyper.a0 * hyper.a0 + 4.0 * quad * constant).sqrt());
    if b > 0.0 && b.is_finite() {
        Ok(b)
    } else {
        Err(numeric(
            "update_rate",
            format!("coordinate {j} produced b = {b}"),
        ))
    }
}

/// Empirical-Bayes noise scale, floored at [`SIGMA_FLOOR`].
pub fn update_noise_eb(state: &VariationalState, data: &Dataset) -> Result<f64> {
    let total =
        data.residual(&state.mu).norm_squared() + expected_inverse_precision_trace(state, data);
    let sigma = (total / data.n() as f64).sqrt();
    if sigma.is_nan() {
        return Err(numeric("update_noise_eb", "noise estimate is NaN".into()));
    }
    Ok(sigma.max(SIGMA_FLOOR))
}

/// Runs the coordinate-ascent loop from `mu_init` until the relative change
/// of Ω drops below `hyper.tol` or `hyper.max_iters` is reached.
pub fn fit(data: &Dataset, hyper: &Hyperparameters, mu_init: &DVector<f64>) -> Result<FitResult> {
    hyper.validate(data.p())?;
    let start = Instant::now();
    let plan = BlockPlan::new(data, hyper.blocks)?;
    let mut state = initialize_state(data, hyper, mu_init)?;
    let mut omega = negative_elbo(&state, data, hyper)?;
    let mut trace = vec![omega];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < hyper.max_iters {
        iterations += 1;
        step(&plan, data, hyper, &mut state).map_err(|e| e.at_iteration(iterations))?;
        let next = negative_elbo(&state, data, hyper).map_err(|e| e.at_iteration(iterations))?;
        trace.push(next);
        let delta = (next - omega).abs();
        omega = next;
        if delta < hyper.tol * (1.0 + omega.abs()) {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        state,
        elbo_trace: trace,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// One outer iteration: mean sweep, (a_j, b_j) updates, then σ under EB.
fn step(
    plan: &BlockPlan,
    data: &Dataset,
    hyper: &Hyperparameters,
    state: &mut VariationalState,
) -> Result<()> {
    let mut mu = state.mu.clone();
    sweep_mu(plan, data, state, &mut mu)?;
    state.mu = mu;
    for j in 0..state.p() {
        let (a, b) = update_shape_rate(j, state, data, hyper)?;
        state.a[j] = a;
        state.b[j] = b;
    }
    if hyper.noise == NoiseMode::EmpiricalBayes {
        state.sigma = update_noise_eb(state, data)?;
    }
    Ok(())
}
