//! Coordinate-descent Lasso used to initialise the variational means and
//! the Gibbs chain.
//!
//! Minimises ½‖Y − Xβ‖²/n + λ‖β‖₁ with cyclic soft-threshold updates and an
//! active-set inner loop.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const MAX_SWEEPS: usize = 10_000;
const TOL: f64 = 1e-7;

/// How the Lasso penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum LassoTuning {
    /// λ = sd(Y)·√(2 ln p / n).
    Universal,
    /// λ = σ̂·√(2 ln p / n) with σ̂ re-estimated from the Lasso residual until it settles.
    Scaled,
    /// λ minimising K-fold prediction error over a log-spaced path; row i is in fold i mod K.
    CrossValidated(usize),
    Fixed(f64),
}

/// Number of penalties on the cross-validation path.
pub const PATH_LEN: usize = 100;

/// Path stops once the training residual falls below this fraction of ‖Y‖².
const SATURATION: f64 = 1e-3;

/// Sweep budget per penalty inside cross-validation folds.
const FOLD_SWEEPS: usize = 1_000;

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso solution at penalty `lambda`, started from zero.
pub fn lasso_init(data: &Dataset, lambda: f64) -> Result<DVector<f64>> {
    lasso_path_point(data.x(), data.y(), lambda, DVector::zeros(data.p()))
}

/// sd(Y)·√(2 ln p / n).
pub fn universal_lambda(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    let mean = data.y().mean();
    let var = data.y().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    var.sqrt() * universal_factor(data)
}

fn universal_factor(data: &Dataset) -> f64 {
    (2.0 * (data.p() as f64).ln().max(0.0) / data.n() as f64).sqrt()
}

/// Penalty chosen by `tuning`, together with the matching Lasso fit.
pub fn tuned_lasso(data: &Dataset, tuning: LassoTuning) -> Result<(f64, DVector<f64>)> {
    match tuning {
        LassoTuning::Universal => {
            let lambda = universal_lambda(data);
            Ok((lambda, lasso_init(data, lambda)?))
        }
        LassoTuning::Fixed(lambda) => Ok((lambda, lasso_init(data, lambda)?)),
        LassoTuning::Scaled => scaled_lasso(data),
        LassoTuning::CrossValidated(folds) => cv_lasso(data, folds),
    }
}

/// Alternates σ̂ = ‖Y − Xβ̂‖/√n and β̂ = Lasso(σ̂·√(2 ln p/n)) from σ̂ = sd(Y).
pub fn scaled_lasso(data: &Dataset) -> Result<(f64, DVector<f64>)> {
    let factor = universal_factor(data);
    let n = data.n() as f64;
    let mut lambda = universal_lambda(data);
    let mut beta = lasso_init(data, lambda)?;
    for _ in 0..50 {
        let sigma = (data.residual(&beta).norm_squared() / n).sqrt();
        let next = sigma * factor;
        if next <= 0.0 {
            break;
        }
        let done = ((next - lambda) / lambda).abs() < 1e-4;
        lambda = next;
        beta = lasso_path_point(data.x(), data.y(), lambda, beta)?;
        if done {
            break;
        }
    }
    Ok((lambda, beta))
}

/// Smallest penalty with an all-zero solution, max_j |x_jᵀY|/n.
pub fn max_lambda(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    x.tr_mul(y).amax() / x.nrows() as f64
}

/// Log-spaced path from `max_lambda` down to a ratio of 0.01 (p > n) or 1e-4.
pub fn lambda_path(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let top = max_lambda(x, y);
    let ratio: f64 = if x.ncols() > x.nrows() { 1e-2 } else { 1e-4 };
    (0..PATH_LEN)
        .map(|k| top * ratio.powf(k as f64 / (PATH_LEN - 1) as f64))
        .collect()
}

/// K-fold cross-validated Lasso refitted on all rows at the selected penalty.
pub fn cv_lasso(data: &Dataset, folds: usize) -> Result<(f64, DVector<f64>)> {
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(Error::Config(format!(
            "fold count must lie in [2, {n}], got {folds}"
        )));
    }
    let path = lambda_path(data.x(), data.y());
    if path[0] == 0.0 {
        return Ok((0.0, DVector::zeros(data.p())));
    }
    let mut cv_error = vec![0.0; path.len()];
    let mut usable = path.len();
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
        let xt = data.x().select_rows(&train);
        let yt = data.y().select_rows(&train);
        let xv = data.x().select_rows(&test);
        let yv = data.y().select_rows(&test);
        let total = yt.norm_squared();
        let mut beta = DVector::zeros(data.p());
        for (k, &lambda) in path[..usable].iter().enumerate() {
            // near interpolation coordinate descent crawls; the path is cut there
            beta = match coordinate_descent(&xt, &yt, lambda, beta, FOLD_SWEEPS) {
                Ok(b) => b,
                Err(Error::LassoNotConverged { .. }) if k > 0 => {
                    usable = k;
                    break;
                }
                Err(e) => return Err(e),
            };
            cv_error[k] += (&yv - &xv * &beta).norm_squared();
            // the rest of the path is near interpolation
            if (&yt - &xt * &beta).norm_squared() <= SATURATION * total {
                usable = k + 1;
                break;
            }
        }
    }
    let best = (0..usable)
        .min_by(|&i, &j| cv_error[i].total_cmp(&cv_error[j]))
        .expect("non-empty path");
    let mut beta = DVector::zeros(data.p());
    for &lambda in &path[..=best] {
        beta = lasso_path_point(data.x(), data.y(), lambda, beta)?;
    }
    Ok((path[best], beta))
}

/// Warm-started coordinate descent at a single penalty.
pub fn lasso_path_point(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: DVector<f64>,
) -> Result<DVector<f64>> {
    coordinate_descent(x, y, lambda, warm, MAX_SWEEPS)
}

fn coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: DVector<f64>,
    max_sweeps: usize,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "lasso penalty must be finite and >= 0, got {lambda}"
        )));
    }
    let (n, p) = x.shape();
    let nf = n as f64;
    let scale: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / nf).collect();
    let mut beta = warm;
    let mut resid = y - x * &beta;
    let mut sweeps = 0;

    let update = |j: usize, beta: &mut DVector<f64>, resid: &mut DVector<f64>| -> f64 {
        if scale[j] == 0.0 {
            return 0.0;
        }
        let col = x.column(j);
        let old = beta[j];
        let z = col.dot(resid) / nf + scale[j] * old;
        let new = soft_threshold(z, lambda) / scale[j];
        let delta = new - old;
        if delta != 0.0 {
            resid.axpy(-delta, &col, 1.0);
            beta[j] = new;
        }
        delta.abs()
    };

    loop {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            max_change = max_change.max(update(j, &mut beta, &mut resid));
        }
        sweeps += 1;
        if max_change < TOL {
            return Ok(beta);
        }
        // converge on the current active set before the next full pass
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        loop {
            if sweeps >= max_sweeps {
                return Err(Error::LassoNotConverged { sweeps });
            }
            let mut change: f64 = 0.0;
            for &j in &active {
                change = change.max(update(j, &mut beta, &mut resid));
            }
            sweeps += 1;
            if change < TOL {
                break;
            }
        }
        if sweeps >= max_sweeps {
            return Err(Error::LassoNotConverged { sweeps });
        }
    }
}
