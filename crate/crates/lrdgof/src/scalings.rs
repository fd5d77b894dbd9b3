//! Normalization sequences and classification constants: sigma_{n,p},
//! a_n = sigma_{n,2}/sigma_{n,1}, the combination weight c_n, the rate
//! sequences d_{n,p} and Xi_n, the integer index k* and the second-order
//! rank of an M-estimator.

use crate::error::{Error, Result};
use crate::multilinear;
use crate::process::{gen_coefficients, validate_beta, ProcessConfig};
use serde::{Deserialize, Serialize};

/// Which side of beta = 3/4 the model sits on; the limit theory differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "beta_below_3_4")]
    BetaBelow34,
    #[serde(rename = "beta_above_3_4")]
    BetaAbove34,
}

impl Regime {
    pub fn of(beta: f64) -> Regime {
        if beta < 0.75 {
            Regime::BetaBelow34
        } else {
            Regime::BetaAbove34
        }
    }
}

/// Second-order rank classification of an M-estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecondOrderRank {
    #[serde(rename = "rank_2")]
    Rank2,
    #[serde(rename = "rank_gt_2")]
    RankGt2,
}

/// k* = integer part of 1/(2 beta - 1).
pub fn k_star(beta: f64) -> Result<usize> {
    validate_beta(beta)?;
    // small nudge so exact reciprocals (1/0.2 = 5) survive rounding
    Ok((1.0 / (2.0 * beta - 1.0) + 1e-12).floor() as usize)
}

/// Rank 2 when k* = 1, or when k* > 1 with lambda_2 != 0; rank > 2 when
/// k* > 1 and lambda_2 = 0 (decided up to `tol`).
pub fn second_order_rank(beta: f64, lambda2: f64, tol: f64) -> Result<SecondOrderRank> {
    if !(tol > 0.0) {
        return Err(Error::parameter("tol", "must be positive"));
    }
    if k_star(beta)? == 1 || lambda2.abs() > tol {
        Ok(SecondOrderRank::Rank2)
    } else {
        Ok(SecondOrderRank::RankGt2)
    }
}

fn branch(beta: f64, p: usize) -> Result<bool> {
    validate_beta(beta)?;
    let t = (p + 1) as f64 * (2.0 * beta - 1.0);
    if (t - 1.0).abs() < 1e-12 {
        return Err(Error::UnsupportedBoundary(format!(
            "(p+1)(2 beta - 1) = 1 at beta = {beta}, p = {p}; the rate is undefined there"
        )));
    }
    Ok(t > 1.0)
}

/// Almost-sure rate sequence d_{n,p} (constant slowly varying part).
pub fn d_np(n: usize, beta: f64, p: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::parameter("n", "must be at least 3 for log log n"));
    }
    if p < 1 {
        return Err(Error::parameter("p", "must be at least 1"));
    }
    let nf = n as f64;
    let ln = nf.ln();
    let lln = ln.ln();
    Ok(if branch(beta, p)? {
        nf.powf(-(1.0 - beta)) * ln.powf(2.5) * lln.powf(0.75)
    } else {
        nf.powf(-(p as f64) * (beta - 0.5)) * ln.sqrt() * lln.powf(0.75)
    })
}

/// Xi_n from the reduction principle: n in the short-memory branch,
/// n^{2-(p+1)(2 beta - 1)} otherwise.
pub fn xi_rate(n: usize, beta: f64, p: usize) -> Result<f64> {
    let nf = n as f64;
    Ok(if branch(beta, p)? {
        nf
    } else {
        nf.powf(2.0 - (p + 1) as f64 * (2.0 * beta - 1.0))
    })
}

/// The full second-moment bound Xi_n + n (log n)^2.
pub fn xi_full_bound(n: usize, beta: f64, p: usize) -> Result<f64> {
    let nf = n as f64;
    Ok(xi_rate(n, beta, p)? + nf * nf.ln().powi(2))
}

/// Where sigma_{n,2} comes from when building a [`ScalingSet`].
#[derive(Debug, Clone, Copy)]
pub enum Sigma2Source {
    /// Exact evaluation within the given work budget on n + K.
    Exact { budget: usize },
    /// A precomputed variance (typically a Monte Carlo estimate).
    Precomputed(f64),
}

impl Default for Sigma2Source {
    fn default() -> Self {
        Sigma2Source::Exact {
            budget: multilinear::DEFAULT_SIGMA2_BUDGET,
        }
    }
}

/// All normalizations for one (config, n) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSet {
    pub n: usize,
    pub beta: f64,
    pub sigma_n1: f64,
    pub sigma_n2: f64,
    /// a_n = sigma_{n,2} / sigma_{n,1}.
    pub a_n: f64,
    /// c_n = sigma_{n,1}^2 / (n sigma_{n,2}), the weight of z1^2/2 in the
    /// same-path combination.
    pub c_n: f64,
    pub d_n2: f64,
    pub k_star: usize,
    pub regime: Regime,
}

/// Populates every normalization for (config, n).
pub fn build_scaling_set(
    config: &ProcessConfig,
    n: usize,
    sigma2: Sigma2Source,
) -> Result<ScalingSet> {
    config.validate()?;
    let coeffs = gen_coefficients(config.beta, config.trunc_k)?;
    let s1_sq = multilinear::exact_sigma1_sq(n, &coeffs)?;
    let s2_sq = match sigma2 {
        Sigma2Source::Exact { budget } => {
            multilinear::exact_sigma2_sq_with_budget(n, &coeffs, budget)?
        }
        Sigma2Source::Precomputed(v) => v,
    };
    ScalingSet::from_variances(config.beta, n, s1_sq, s2_sq)
}

impl ScalingSet {
    pub fn from_variances(beta: f64, n: usize, s1_sq: f64, s2_sq: f64) -> Result<ScalingSet> {
        if !(s1_sq > 0.0) {
            return Err(Error::DegenerateModel(format!(
                "sigma_{{n,1}}^2 = {s1_sq} is not positive"
            )));
        }
        if !(s2_sq > 0.0) {
            return Err(Error::DegenerateModel(format!(
                "sigma_{{n,2}}^2 = {s2_sq} is not positive; the model has no \
                 second-order component"
            )));
        }
        let sigma_n1 = s1_sq.sqrt();
        let sigma_n2 = s2_sq.sqrt();
        Ok(ScalingSet {
            n,
            beta,
            sigma_n1,
            sigma_n2,
            a_n: sigma_n2 / sigma_n1,
            c_n: s1_sq / (n as f64 * sigma_n2),
            d_n2: d_np(n, beta, 2)?,
            k_star: k_star(beta)?,
            regime: Regime::of(beta),
        })
    }
}
