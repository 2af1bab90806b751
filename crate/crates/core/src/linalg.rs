//! Block partition and the per-block ridge-type solves shared by the
//! variational mean sweep and the Gibbs sampler.
//!
//! Every block system has the form `(X_kᵀ X_k + D) m = X_kᵀ r`, with `D`
//! diagonal and positive. Blocks no wider than `n` factor the cached Gram
//! block directly; wider blocks go through the `n × n` system
//! `(I + X_k D⁻¹ X_kᵀ)` via the push-through identity.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Contiguous near-equal partition of `0..p` into `blocks` ranges.
/// The first `p % blocks` ranges are one column longer.
pub fn partition(p: usize, blocks: usize) -> Vec<Range<usize>> {
    assert!(blocks >= 1 && blocks <= p, "need 1 <= blocks <= p");
    let base = p / blocks;
    let extra = p % blocks;
    let mut out = Vec::with_capacity(blocks);
    let mut start = 0;
    for k in 0..blocks {
        let len = base + usize::from(k < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

#[derive(Debug, Clone)]
struct Block {
    range: Range<usize>,
    /// X_kᵀ X_k, cached when the block is no wider than n.
    gram: Option<DMatrix<f64>>,
}

/// Precomputed block structure for a dataset.
#[derive(Debug, Clone)]
pub struct BlockPlan {
    blocks: Vec<Block>,
}

impl BlockPlan {
    pub fn new(data: &Dataset, blocks: usize) -> Result<Self> {
        let p = data.p();
        if blocks == 0 || blocks > p {
            return Err(Error::Config(format!(
                "block count must lie in [1, {p}], got {blocks}"
            )));
        }
        let n = data.n();
        let blocks = partition(p, blocks)
            .into_iter()
            .map(|range| {
                let gram = (range.len() <= n).then(|| {
                    let xk = data.x().columns(range.start, range.len());
                    xk.tr_mul(&xk)
                });
                Block { range, gram }
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.blocks.iter().map(|b| b.range.clone())
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.blocks[k].range.clone()
    }

    /// Solves `(X_kᵀX_k + diag(d)) m = X_kᵀ partial` for block `k`, where
    /// `partial = Y - X_{(-k)} β_{(-k)}` and `d` is indexed by block position.
    pub fn solve(
        &self,
        k: usize,
        data: &Dataset,
        partial: &DVector<f64>,
        d: &[f64],
    ) -> Result<DVector<f64>> {
        let block = &self.blocks[k];
        let xk = data.x().columns(block.range.start, block.range.len());
        match &block.gram {
            Some(gram) => {
                let chol = factor_gram(gram, d, k)?;
                Ok(chol.solve(&xk.tr_mul(partial)))
            }
            None => {
                let inv_d: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
                let chol = factor_push_through(&xk, &inv_d, k)?;
                let w = chol.solve(partial);
                let mut m = xk.tr_mul(&w);
                for (mi, id) in m.iter_mut().zip(&inv_d) {
                    *mi *= id;
                }
                Ok(m)
            }
        }
    }

    /// Draws block `k` from N(m, σ² (X_kᵀX_k + σ² diag(λ_k))⁻¹), with `m` the
    /// solution of the same system as [`BlockPlan::solve`].
    pub fn sample<R: Rng + ?Sized>(
        &self,
        k: usize,
        data: &Dataset,
        partial: &DVector<f64>,
        lambda: &[f64],
        sigma: f64,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let block = &self.blocks[k];
        let len = block.range.len();
        let xk = data.x().columns(block.range.start, len);
        let s2 = sigma * sigma;
        match &block.gram {
            Some(gram) => {
                let d: Vec<f64> = lambda.iter().map(|l| s2 * l).collect();
                let chol = factor_gram(gram, &d, k)?;
                let mean = chol.solve(&xk.tr_mul(partial));
                let z = DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
                let l = chol.l();
                let noise = l
                    .tr_solve_lower_triangular(&z)
                    .ok_or_else(|| singular("sample_beta_blocks", k))?;
                Ok(mean + noise * sigma)
            }
            None => {
                // Precision Φᵀ Φ + Λ with Φ = X_k / σ and target mean from α = partial / σ.
                let n = data.n();
                let inv_lambda: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
                let u = DVector::from_fn(len, |j, _| {
                    inv_lambda[j].sqrt() * rng.sample::<f64, _>(StandardNormal)
                });
                let delta = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = (xk * &u) / sigma + delta;
                let scaled_inv: Vec<f64> = inv_lambda.iter().map(|il| il / s2).collect();
                let chol = factor_push_through(&xk, &scaled_inv, k)?;
                let w = chol.solve(&(partial / sigma - v));
                let mut out = xk.tr_mul(&w) / sigma;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = u[j] + inv_lambda[j] * *o;
                }
                Ok(out)
            }
        }
    }
}

fn singular(op: &'static str, k: usize) -> Error {
    Error::Numeric {
        op,
        detail: format!("block {k} system is not positive definite"),
    }
}

fn factor_gram(gram: &DMatrix<f64>, d: &[f64], k: usize) -> Result<Cholesky<f64, Dyn>> {
    let mut a = gram.clone();
    for (i, di) in d.iter().enumerate() {
        a[(i, i)] += di;
    }
    Cholesky::new(a).ok_or_else(|| singular("update_mu", k))
}

/// Factors `I + X_k diag(inv_d) X_kᵀ`.
fn factor_push_through(
    xk: &nalgebra::DMatrixView<'_, f64>,
    inv_d: &[f64],
    k: usize,
) -> Result<Cholesky<f64, Dyn>> {
    let n = xk.nrows();
    let mut w = xk.clone_owned();
    for (mut col, id) in w.column_iter_mut().zip(inv_d) {
        col *= id.sqrt();
    }
    let mut m = &w * w.transpose();
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    Cholesky::new(m).ok_or_else(|| singular("update_mu", k))
}
