//! Data containers shared by the fitting, sampling and evaluation code.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design matrix and response with the cross products every fit needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    col_sq_norms: DVector<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(format!("empty design ({n} x {p})")));
        }
        if y.len() != n {
            return Err(Error::Dimension {
                op: "Dataset::new",
                expected: n,
                got: y.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite design entry at row {}, column {}",
                i % n,
                i / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite response at row {i}"
            )));
        }
        let col_sq_norms = DVector::from_iterator(p, x.column_iter().map(|c| c.norm_squared()));
        if let Some(j) = col_sq_norms.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidData(format!(
                "column {j} is identically zero"
            )));
        }
        let xty = x.tr_mul(&y);
        let yty = y.norm_squared();
        Ok(Self {
            x,
            y,
            col_sq_norms,
            xty,
            yty,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Diagonal of XᵀX.
    pub fn col_sq_norms(&self) -> &DVector<f64> {
        &self.col_sq_norms
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// Y - Xβ.
    pub fn residual(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }
}

/// How the noise scale is treated during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Known,
    EmpiricalBayes,
}

/// Choice of prior rate formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorPreset {
    /// b_n / a0 = log(p ∨ n) / [n p^(2 + 1/a0) (p ∨ n)^(1/a0)]
    Simulation,
    /// b_n / a0 = log p / [n p^(2 + 1/a0) p^(6/a0)]
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Prior Gamma shape; the marginal prior is Student-t with 2·a0 d.f.
    pub a0: f64,
    /// Prior Gamma rate.
    pub bn: f64,
    /// Noise s.d. (used as-is when known, ignored at start under EB).
    pub sigma: f64,
    pub noise: NoiseMode,
    /// Number of contiguous blocks for the mean sweep.
    pub blocks: usize,
    /// Relative negative-ELBO change that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
}

impl Hyperparameters {
    /// Default settings for an `n × p` problem with the simulation preset.
    pub fn default_for(n: usize, p: usize) -> Result<Self> {
        Self::with_preset(n, p, PriorPreset::Simulation)
    }

    pub fn with_preset(n: usize, p: usize, preset: PriorPreset) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Config(format!(
                "n and p must be positive, got n={n}, p={p}"
            )));
        }
        let a0 = 2.0;
        let bn = prior_rate(n, p, a0, preset)?;
        Ok(Self {
            a0,
            bn,
            sigma: 1.0,
            noise: NoiseMode::EmpiricalBayes,
            blocks: default_blocks(p),
            tol: 1e-7,
            max_iters: 500,
        })
    }

    pub fn known_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self.noise = NoiseMode::Known;
        self
    }

    pub fn empirical_bayes(mut self) -> Self {
        self.noise = NoiseMode::EmpiricalBayes;
        self
    }

    pub fn blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.a0 > 1.0 && self.a0.is_finite()) {
            return bad(format!("a0 must be finite and > 1, got {}", self.a0));
        }
        if !(self.bn > 0.0 && self.bn.is_finite()) {
            return bad(format!("bn must be finite and > 0, got {}", self.bn));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and > 0, got {}", self.sigma));
        }
        if self.blocks == 0 || self.blocks > p {
            return bad(format!(
                "block count must lie in [1, {p}], got {}",
                self.blocks
            ));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        Ok(())
    }
}

/// Prior rate b_n for shape `a0` under the given preset.
pub fn prior_rate(n: usize, p: usize, a0: f64, preset: PriorPreset) -> Result<f64> {
    let (nf, pf) = (n as f64, p as f64);
    let big = nf.max(pf);
    let ratio = match preset {
        PriorPreset::Simulation => big.ln() / (nf * pf.powf(2.0 + 1.0 / a0) * big.powf(1.0 / a0)),
        PriorPreset::Strict => pf.ln() / (nf * pf.powf(2.0 + 1.0 / a0) * pf.powf(6.0 / a0)),
    };
    let bn = a0 * ratio;
    if bn > 0.0 && bn.is_finite() {
        Ok(bn)
    } else {
        Err(Error::Config(format!(
            "prior rate is degenerate ({bn:e}) for n={n}, p={p}, preset {preset:?}"
        )))
    }
}

/// One block for p ≤ 500, otherwise blocks of roughly 100 columns.
pub fn default_blocks(p: usize) -> usize {
    if p <= 500 {
        1
    } else {
        p.div_ceil(100)
    }
}

/// Parameters of the mean-field family: β_j | λ_j ~ N(μ_j, 1/λ_j), λ_j ~ Gamma(a_j, b_j).
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu: DVector<f64>,
    /// Gamma shapes, all > 1.
    pub a: DVector<f64>,
    /// Gamma rates, all > 0.
    pub b: DVector<f64>,
    pub sigma: f64,
}

impl VariationalState {
    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn check(&self) -> Result<()> {
        let p = self.mu.len();
        for v in [&self.a, &self.b] {
            if v.len() != p {
                return Err(Error::Dimension {
                    op: "VariationalState",
                    expected: p,
                    got: v.len(),
                });
            }
        }
        if let Some(j) = self.mu.iter().position(|m| !m.is_finite()) {
            return Err(Error::Domain {
                op: "VariationalState",
                msg: format!("mu[{j}] is not finite"),
            });
        }
        if let Some(j) = self.a.iter().position(|&a| !(a > 1.0 && a.is_finite())) {
            return Err(Error::Domain {
                op: "VariationalState",
                msg: format!("a[{j}] = {} must exceed 1", self.a[j]),
            });
        }
        if let Some(j) = self.b.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::Domain {
                op: "VariationalState",
                msg: format!("b[{j}] = {} must be positive", self.b[j]),
            });
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain {
                op: "VariationalState",
                msg: format!("sigma = {} must be positive", self.sigma),
            });
        }
        Ok(())
    }

    /// E_q[λ_j] = a_j / b_j.
    pub fn precision_mean(&self) -> DVector<f64> {
        self.a.component_div(&self.b)
    }

    /// Scale of the Student-t marginal of β_j.
    pub fn marginal_scale(&self, j: usize) -> f64 {
        (self.b[j] / self.a[j]).sqrt()
    }

    /// Degrees of freedom of the Student-t marginal of β_j.
    pub fn marginal_df(&self, j: usize) -> f64 {
        2.0 * self.a[j]
    }
}
