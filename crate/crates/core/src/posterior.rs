//! Summaries of the marginal variational posterior.
//!
//! Integrating λ_j out of the Normal–Gamma pair leaves a Student-t marginal
//! for β_j with 2a_j degrees of freedom, location μ_j and scale √(b_j/a_j).
//! Credible intervals and the selection rule are built on that marginal.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VariationalState;
use crate::special_fn::{incomplete_beta_pos, log_gamma_pos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Sorted column indices whose interval excludes zero.
    pub selected: Vec<usize>,
    pub intervals: Vec<(f64, f64)>,
    pub level: f64,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            op: "credible_interval",
            msg: format!("level must lie in (0, 1), got {level}"),
        })
    }
}

/// Density of the standard Student-t with `df` degrees of freedom.
pub fn student_t_pdf(t: f64, df: f64) -> f64 {
    let ln_norm = log_gamma_pos(0.5 * (df + 1.0))
        - log_gamma_pos(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (t * t / df).ln_1p()).exp()
}

/// P(T > t) for t ≥ 0.
fn upper_tail(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    if t2 < df {
        // x = df/(df + t²) is close to 1; use the complementary argument
        0.5 * (1.0 - incomplete_beta_pos(t2 / (df + t2), 0.5, 0.5 * df))
    } else {
        0.5 * incomplete_beta_pos(df / (df + t2), 0.5 * df, 0.5)
    }
}

/// CDF of the standard Student-t.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t >= 0.0 {
        1.0 - upper_tail(t, df)
    } else {
        upper_tail(-t, df)
    }
}

/// Quantile function of the standard Student-t for any real `df > 0`.
///
/// Inverts the incomplete-beta tail by safeguarded Newton iteration.
pub fn student_t_quantile(prob: f64, df: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain {
            op: "student_t_quantile",
            msg: format!("probability must lie in (0, 1), got {prob}"),
        });
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::Domain {
            op: "student_t_quantile",
            msg: format!("degrees of freedom must be finite and > 0, got {df}"),
        });
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    let tail = prob.min(1.0 - prob);
    let t = upper_quantile(tail, df);
    Ok(if prob > 0.5 { t } else { -t })
}

/// Solves P(T > t) = tail for t > 0, tail < 1/2.
fn upper_quantile(tail: f64, df: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 2.0;
    while upper_tail(hi, df) > tail {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = upper_tail(t, df) - tail;
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = -student_t_pdf(t, df);
        let mut next = t - f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        t = next;
    }
    t
}

/// Equal-tailed interval `loc ± t_{(1+level)/2, df} · scale`.
pub fn t_interval(loc: f64, scale: f64, df: f64, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let half = student_t_quantile(0.5 * (1.0 + level), df)? * scale;
    Ok((loc - half, loc + half))
}

/// Credible interval of β_j under its Student-t marginal.
pub fn credible_interval(j: usize, state: &VariationalState, level: f64) -> Result<(f64, f64)> {
    if j >= state.p() {
        return Err(Error::Dimension {
            op: "credible_interval",
            expected: state.p(),
            got: j,
        });
    }
    t_interval(
        state.mu[j],
        state.marginal_scale(j),
        state.marginal_df(j),
        level,
    )
}

/// Half-width of the interval for β_j; j is selected iff |μ_j| exceeds it.
pub fn selection_threshold(j: usize, state: &VariationalState, level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(student_t_quantile(0.5 * (1.0 + level), state.marginal_df(j))? * state.marginal_scale(j))
}

/// Selects every coordinate whose credible interval excludes zero.
pub fn select_variables(state: &VariationalState, level: f64) -> Result<SelectionResult> {
    check_level(level)?;
    let intervals = (0..state.p())
        .map(|j| credible_interval(j, state, level))
        .collect::<Result<Vec<_>>>()?;
    Ok(selection_from_intervals(intervals, level))
}

pub(crate) fn selection_from_intervals(intervals: Vec<(f64, f64)>, level: f64) -> SelectionResult {
    let selected = intervals
        .iter()
        .enumerate()
        .filter(|(_, (lo, hi))| *lo > 0.0 || *hi < 0.0)
        .map(|(j, _)| j)
        .collect();
    SelectionResult {
        selected,
        intervals,
        level,
    }
}

/// Posterior mean of β (the t locations).
pub fn posterior_mean(state: &VariationalState) -> DVector<f64> {
    state.mu.clone()
}
