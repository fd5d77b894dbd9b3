//! Empirical distribution functions, the normalized empirical processes
//! beta_n / gamma_n / gamma-hat_n, the reduction-principle residual
//! S_{n,p}, and the Taylor decomposition of the estimated process.
//!
//! Sups of a step function against a smooth monotone CDF are taken exactly
//! at the order statistics. The residual S_{n,p} is not monotone in x, so
//! its sup is scanned over the union of the sample jump points (both
//! one-sided values) and a fixed quantile grid.

use crate::error::{Error, Result};
use crate::multilinear::MultilinearSums;
use crate::process::{MarginalModel, PathBundle};
use crate::scalings::ScalingSet;
use serde::Serialize;

/// Number of quantile-grid points added to the jump points when scanning
/// the reduction residual.
pub const RESIDUAL_GRID_M: usize = 512;

/// Where a set of evaluation points came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridOrigin {
    SampleJumps,
    QuantileGrid { m: usize },
}

/// Sorted evaluation points for process traces.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub points: Vec<f64>,
    pub origin: GridOrigin,
}

impl EvaluationGrid {
    /// Quantile grid in observation (Y) coordinates, anchored at the true
    /// location: points H^{-1}(g/(m+1); theta0) for g = 1..m.
    pub fn quantiles(marginal: &MarginalModel, theta0: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::parameter("m", "quantile grid needs at least 2 points"));
        }
        let points = (1..=m)
            .map(|g| marginal.h_quantile(g as f64 / (m + 1) as f64, theta0))
            .collect();
        Ok(EvaluationGrid {
            points,
            origin: GridOrigin::QuantileGrid { m },
        })
    }

    /// Quantile grid in X coordinates: F^{-1}(g/(m+1)).
    pub fn x_quantiles(marginal: &MarginalModel, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::parameter("m", "quantile grid needs at least 2 points"));
        }
        let points = (1..=m)
            .map(|g| marginal.quantile(g as f64 / (m + 1) as f64))
            .collect();
        Ok(EvaluationGrid {
            points,
            origin: GridOrigin::QuantileGrid { m },
        })
    }

    /// The sample's own jump points, sorted.
    pub fn sample_jumps(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut points = sample.to_vec();
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EvaluationGrid {
            points,
            origin: GridOrigin::SampleJumps,
        })
    }
}

/// Which normalized process a trace holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLabel {
    BetaN,
    GammaN,
    GammaHatN,
    SNpResidual,
}

/// A process evaluated on a grid.
#[derive(Debug, Clone)]
pub struct ProcessTrace {
    pub grid: EvaluationGrid,
    pub values: Vec<f64>,
    pub label: TraceLabel,
    /// The multiplier applied to the raw CDF difference (n / sigma for the
    /// normalized processes); |values| <= scaling_used.
    pub scaling_used: f64,
}

impl ProcessTrace {
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Right-continuous empirical CDF value n^{-1} #\{X_i <= x\}.
pub fn ecdf(sample: &[f64], x: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let count = sample.iter().filter(|&&v| v <= x).count();
    Ok(count as f64 / sample.len() as f64)
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn count_le(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v <= x)
}

/// Evaluates the selected normalized empirical process on `grid`.
///
/// `BetaN` reads the grid in X coordinates against F; `GammaN` and
/// `GammaHatN` read it in Y coordinates against H(.; theta0) and
/// H(.; theta-hat). The estimated process requires `theta_hat`.
pub fn process_trace(
    path: &PathBundle,
    marginal: &MarginalModel,
    theta_hat: Option<f64>,
    scalings: &ScalingSet,
    which: TraceLabel,
    grid: &EvaluationGrid,
) -> Result<ProcessTrace> {
    let n = path.n as f64;
    let scale = n / scalings.sigma_n1;
    let values = match which {
        TraceLabel::BetaN => {
            let sx = sorted_copy(&path.x);
            grid.points
                .iter()
                .map(|&t| {
                    (count_le(&sx, t) as f64 / n - marginal.cdf(t)) * scale
                })
                .collect()
        }
        TraceLabel::GammaN => {
            let sy = sorted_copy(&path.y);
            grid.points
                .iter()
                .map(|&t| {
                    (count_le(&sy, t) as f64 / n - marginal.h_cdf(t, marginal.mu)) * scale
                })
                .collect()
        }
        TraceLabel::GammaHatN => {
            let theta = theta_hat.ok_or_else(|| {
                Error::parameter("theta_hat", "required for the estimated process")
            })?;
            let sy = sorted_copy(&path.y);
            grid.points
                .iter()
                .map(|&t| (count_le(&sy, t) as f64 / n - marginal.h_cdf(t, theta)) * scale)
                .collect()
        }
        TraceLabel::SNpResidual => {
            return Err(Error::Contract(
                "use reduction_residual for S_{n,p} traces".into(),
            ))
        }
    };
    Ok(ProcessTrace {
        grid: grid.clone(),
        values,
        label: which,
        scaling_used: scale,
    })
}

/// Exact sup over all of R of |F_n - G| for a step ECDF against a
/// continuous nondecreasing `cdf`, taken at the order statistics:
/// max_i max(i/n - G(y_(i)), G(y_(i)) - (i-1)/n).
///
/// `sample` need not be sorted. Monotonicity and range of `cdf` are spot
/// checked along the way.
pub fn sup_norm_exact(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let sorted = sorted_copy(sample);
    sup_norm_exact_sorted(&sorted, cdf)
}

/// As [`sup_norm_exact`] but for pre-sorted samples.
pub fn sup_norm_exact_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let n = sorted.len() as f64;
    let mut prev = f64::NEG_INFINITY;
    let mut sup = 0.0f64;
    for (i, &y) in sorted.iter().enumerate() {
        let g = cdf(y);
        if !(-1e-9..=1.0 + 1e-9).contains(&g) {
            return Err(Error::Contract(format!(
                "cdf evaluator returned {g} outside [0, 1] at {y}"
            )));
        }
        if g < prev - 1e-12 {
            return Err(Error::Contract(format!(
                "cdf evaluator is not nondecreasing near {y}"
            )));
        }
        prev = g;
        let hi = (i + 1) as f64 / n - g;
        let lo = g - i as f64 / n;
        sup = sup.max(hi).max(lo);
    }
    Ok(sup)
}

/// The reduction residual and its normalized sup.
#[derive(Debug, Clone)]
pub struct ResidualTrace {
    /// S_{n,p} sampled on the quantile grid (raw, unnormalized).
    pub trace: ProcessTrace,
    /// sup |S_{n,p}| over the union of jump points and the grid.
    pub sup_raw: f64,
    /// sigma_{n,p}^{-1} sup |S_{n,p}|.
    pub sup_scaled: f64,
}

/// S_{n,p}(x) = sum_i (1_{X_i <= x} - F(x)) + f(x) Y_{n,1} [- f'(x) Y_{n,2}]
/// for p = 1, 2, with the sup taken over jump points (both one-sided
/// values) and a [`RESIDUAL_GRID_M`]-point quantile grid.
pub fn reduction_residual(
    path: &PathBundle,
    marginal: &MarginalModel,
    sums: &MultilinearSums,
    scalings: &ScalingSet,
    p: usize,
) -> Result<ResidualTrace> {
    let sx = sorted_copy(&path.x);
    reduction_residual_sorted(&sx, marginal, sums, scalings, p)
}

/// Core of [`reduction_residual`] on a pre-sorted X sample.
pub(crate) fn reduction_residual_sorted(
    sx: &[f64],
    marginal: &MarginalModel,
    sums: &MultilinearSums,
    scalings: &ScalingSet,
    p: usize,
) -> Result<ResidualTrace> {
    if !(1..=2).contains(&p) {
        return Err(Error::parameter("p", "must be 1 or 2"));
    }
    let n = sx.len() as f64;
    let smooth = |x: f64| -> f64 {
        let mut v = -n * marginal.cdf(x) + marginal.pdf(x) * sums.y1;
        if p == 2 {
            v -= marginal.pdf_d1(x) * sums.y2;
        }
        v
    };

    let mut sup: f64 = 0.0;
    for (i, &x) in sx.iter().enumerate() {
        let s = smooth(x);
        // value at x (count i+1) and just left of it (count i)
        sup = sup.max((s + (i + 1) as f64).abs()).max((s + i as f64).abs());
    }
    let grid = EvaluationGrid::x_quantiles(marginal, RESIDUAL_GRID_M)?;
    let values: Vec<f64> = grid
        .points
        .iter()
        .map(|&x| count_le(sx, x) as f64 + smooth(x))
        .collect();
    for v in &values {
        sup = sup.max(v.abs());
    }
    let sigma_np = match p {
        1 => scalings.sigma_n1,
        _ => scalings.sigma_n2,
    };
    Ok(ResidualTrace {
        trace: ProcessTrace {
            grid,
            values,
            label: TraceLabel::SNpResidual,
            scaling_used: 1.0,
        },
        sup_raw: sup,
        sup_scaled: sup / sigma_np,
    })
}

/// Terms of the theta-expansion of the estimated process around theta_0.
#[derive(Debug, Clone)]
pub struct TaylorDecomposition {
    pub grid: EvaluationGrid,
    pub gamma_hat: Vec<f64>,
    pub gamma: Vec<f64>,
    /// sigma_{n,1}^{-1} n (theta0 - theta_hat) grad H(x; theta0).
    pub first_order: Vec<f64>,
    /// -(1/2) sigma_{n,1}^{-1} n (theta0 - theta_hat)^2 grad^2 H(x; theta0),
    /// signed as it enters gamma_hat = gamma + first + second + remainder.
    pub second_order: Vec<f64>,
    /// sup over the grid of |gamma_hat - (gamma + first + second)|.
    pub reconstruction_sup_error: f64,
    /// Cubic Lagrange bound sup|f''| / (6 |sigma|^3) * n |dtheta|^3 / sigma_{n,1}.
    pub remainder_bound: f64,
}

/// Splits gamma-hat into gamma plus the first- and second-order location
/// terms, reporting the sup reconstruction error against the cubic bound.
pub fn taylor_decomposition(
    path: &PathBundle,
    marginal: &MarginalModel,
    theta_hat: f64,
    scalings: &ScalingSet,
    grid: &EvaluationGrid,
) -> Result<TaylorDecomposition> {
    if !theta_hat.is_finite() {
        return Err(Error::parameter("theta_hat", "must be finite"));
    }
    let n = path.n as f64;
    let scale = n / scalings.sigma_n1;
    let delta = marginal.mu - theta_hat;
    let sy = sorted_copy(&path.y);

    let mut gamma_hat = Vec::with_capacity(grid.points.len());
    let mut gamma = Vec::with_capacity(grid.points.len());
    let mut first = Vec::with_capacity(grid.points.len());
    let mut second = Vec::with_capacity(grid.points.len());
    let mut err: f64 = 0.0;
    for &t in &grid.points {
        let hn = count_le(&sy, t) as f64 / n;
        let gh = (hn - marginal.h_cdf(t, theta_hat)) * scale;
        let g = (hn - marginal.h_cdf(t, marginal.mu)) * scale;
        let t1 = scale * delta * marginal.grad_h(1, t);
        let t2 = -0.5 * scale * delta * delta * marginal.grad_h(2, t);
        err = err.max((gh - (g + t1 + t2)).abs());
        gamma_hat.push(gh);
        gamma.push(g);
        first.push(t1);
        second.push(t2);
    }
    let sup_f2 = marginal.pdf(0.0) / marginal.var_x;
    let bound = sup_f2 / (6.0 * marginal.sigma.abs().powi(3)) * delta.abs().powi(3) * scale;
    Ok(TaylorDecomposition {
        grid: grid.clone(),
        gamma_hat,
        gamma,
        first_order: first,
        second_order: second,
        reconstruction_sup_error: err,
        remainder_bound: bound,
    })
}
