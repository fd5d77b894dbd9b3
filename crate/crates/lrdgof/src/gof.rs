//! Goodness-of-fit statistics: the known-parameter Kolmogorov-Smirnov
//! statistic, its estimated-parameter version under the regime-dependent
//! normalization, and the estimated Cramer-Smirnov-von Mises statistic via
//! the order-statistic formula. Sups and integrals are exact; grid and
//! quadrature evaluations exist only as test oracles.

use crate::empirical::sup_norm_exact_sorted;
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::numerics;
use crate::process::{MarginalModel, PathBundle};
use crate::scalings::{Regime, ScalingSet};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatLabel {
    Ks,
    Cvm,
}

/// The multiplier applied to the raw statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// n / sigma_{n,1}
    SigmaN1N,
    /// n / sigma_{n,2}
    SigmaN2N,
    /// sqrt(n)
    SqrtN,
}

impl Normalization {
    pub fn value(self, n: usize, scalings: &ScalingSet) -> f64 {
        match self {
            Normalization::SigmaN1N => n as f64 / scalings.sigma_n1,
            Normalization::SigmaN2N => n as f64 / scalings.sigma_n2,
            Normalization::SqrtN => (n as f64).sqrt(),
        }
    }
}

/// One computed statistic. `normalized = raw * normalization_value`.
#[derive(Debug, Clone, Serialize)]
pub struct GofResult {
    pub stat: StatLabel,
    pub raw: f64,
    pub normalization: Normalization,
    pub normalization_value: f64,
    pub normalized: f64,
    /// The sigma_{n,1}^{-1} n scaling of the same raw statistic, always
    /// reported so negligibility and the nondegenerate limit are testable
    /// from one run.
    pub normalized_sigma_n1: f64,
    pub estimator: Option<EstimatorSpec>,
    pub theta_hat: Option<f64>,
    pub regime: Regime,
}

impl GofResult {
    /// The flat JSON record emitted per statistic.
    pub fn record(&self, n: usize, beta: f64, seed: u64) -> serde_json::Value {
        serde_json::json!({
            "stat": self.stat,
            "raw": self.raw,
            "normalized": self.normalized,
            "normalization": self.normalization,
            "estimator": self.estimator.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
            "n": n,
            "beta": beta,
            "seed": seed,
        })
    }

    fn build(
        stat: StatLabel,
        raw: f64,
        normalization: Normalization,
        estimator: Option<EstimatorSpec>,
        theta_hat: Option<f64>,
        n: usize,
        scalings: &ScalingSet,
    ) -> GofResult {
        let value = normalization.value(n, scalings);
        GofResult {
            stat,
            raw,
            normalization,
            normalization_value: value,
            normalized: raw * value,
            normalized_sigma_n1: raw * Normalization::SigmaN1N.value(n, scalings),
            estimator,
            theta_hat,
            regime: scalings.regime,
        }
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// sigma_{n,1}^{-1} n sup |F_n - F| with the true marginal.
pub fn ks_known(
    path: &PathBundle,
    marginal: &MarginalModel,
    scalings: &ScalingSet,
) -> Result<GofResult> {
    let sx = sorted(&path.x);
    let raw = sup_norm_exact_sorted(&sx, |t| marginal.cdf(t))?;
    Ok(GofResult::build(
        StatLabel::Ks,
        raw,
        Normalization::SigmaN1N,
        None,
        None,
        path.n,
        scalings,
    ))
}

/// sup |H_n - H(.; theta-hat)|, normalized by regime: sigma_{n,2}^{-1} n
/// below beta = 3/4 and sqrt(n) above.
pub fn ks_estimated(
    path: &PathBundle,
    marginal: &MarginalModel,
    estimator: EstimatorSpec,
    scalings: &ScalingSet,
) -> Result<GofResult> {
    let norm = match scalings.regime {
        Regime::BetaBelow34 => Normalization::SigmaN2N,
        Regime::BetaAbove34 => Normalization::SqrtN,
    };
    ks_estimated_with(path, marginal, estimator, scalings, norm)
}

/// As [`ks_estimated`] with an explicit normalization; requesting the
/// scaling of the opposite regime is refused.
pub fn ks_estimated_with(
    path: &PathBundle,
    marginal: &MarginalModel,
    estimator: EstimatorSpec,
    scalings: &ScalingSet,
    normalization: Normalization,
) -> Result<GofResult> {
    match (normalization, scalings.regime) {
        (Normalization::SigmaN2N, Regime::BetaAbove34) => {
            return Err(Error::RegimeMismatch(
                "sigma_{n,2}^{-1} n scaling belongs to beta < 3/4".into(),
            ))
        }
        (Normalization::SqrtN, Regime::BetaBelow34) => {
            return Err(Error::RegimeMismatch(
                "sqrt(n) scaling belongs to beta > 3/4".into(),
            ))
        }
        _ => {}
    }
    let theta = estimator.estimate(&path.y)?;
    let sy = sorted(&path.y);
    ks_estimated_sorted(&sy, marginal, estimator, theta, scalings, normalization)
}

/// Core of [`ks_estimated`] on a pre-sorted sample with theta already
/// computed; used by the harness to avoid repeated sorting/estimation.
pub(crate) fn ks_estimated_sorted(
    sorted_y: &[f64],
    marginal: &MarginalModel,
    estimator: EstimatorSpec,
    theta: f64,
    scalings: &ScalingSet,
    normalization: Normalization,
) -> Result<GofResult> {
    let raw = sup_norm_exact_sorted(sorted_y, |t| marginal.h_cdf(t, theta))?;
    Ok(GofResult::build(
        StatLabel::Ks,
        raw,
        normalization,
        Some(estimator),
        Some(theta),
        sorted_y.len(),
        scalings,
    ))
}

/// Estimated Cramer-Smirnov-von Mises statistic. With u_i = H(Y_(i);
/// theta-hat), n int (H_n - H)^2 dH = 1/(12n) + sum_i (u_i - (2i-1)/(2n))^2;
/// the raw value is the bare integral and the normalization is
/// sigma_{n,2}^{-1} n.
pub fn cvm_estimated(
    path: &PathBundle,
    marginal: &MarginalModel,
    estimator: EstimatorSpec,
    scalings: &ScalingSet,
) -> Result<GofResult> {
    let theta = estimator.estimate(&path.y)?;
    let sy = sorted(&path.y);
    cvm_estimated_sorted(&sy, marginal, estimator, theta, scalings)
}

pub(crate) fn cvm_estimated_sorted(
    sorted_y: &[f64],
    marginal: &MarginalModel,
    estimator: EstimatorSpec,
    theta: f64,
    scalings: &ScalingSet,
) -> Result<GofResult> {
    let n = sorted_y.len() as f64;
    let mut t = 1.0 / (12.0 * n);
    for (i, &y) in sorted_y.iter().enumerate() {
        let u = marginal.h_cdf(y, theta);
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::NumericDomain(format!(
                "H(Y_({}); theta_hat) = {u} outside (0, 1)",
                i + 1
            )));
        }
        let d = u - (2.0 * (i + 1) as f64 - 1.0) / (2.0 * n);
        t += d * d;
    }
    Ok(GofResult::build(
        StatLabel::Cvm,
        t / n,
        Normalization::SigmaN2N,
        Some(estimator),
        Some(theta),
        sorted_y.len(),
        scalings,
    ))
}

/// The deterministic factor in the CvM limit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CvmLimitConstant {
    /// int (f^(1)(z))^2 f(z) dz over the marginal of X.
    pub integral: f64,
    /// The 1/sigma prefactor of the limit, reported separately.
    pub sigma_factor: f64,
}

/// Quadrature of int (f^(1))^2 f, plus the 1/sigma factor of the limit.
pub fn cvm_limit_constant(marginal: &MarginalModel) -> Result<CvmLimitConstant> {
    let s = marginal.var_x.sqrt();
    let integral = numerics::integrate(
        &|z| {
            let d = marginal.pdf_d1(z);
            d * d * marginal.pdf(z)
        },
        -8.0 * s,
        8.0 * s,
        1e-12,
        &[0.0],
    )?;
    Ok(CvmLimitConstant {
        integral,
        sigma_factor: 1.0 / marginal.sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{
        derive_replication_seed, gen_coefficients, marginal_model, CoefficientSet, GenMode,
        Innovation, PathGenerator, ProcessConfig,
    };
    use crate::scalings::{build_scaling_set, Sigma2Source};
    use approx::assert_relative_eq;

    fn cfg(beta: f64, trunc_k: usize, mu: f64, sigma: f64, seed: u64) -> ProcessConfig {
        ProcessConfig {
            beta,
            trunc_k,
            innovation: Innovation::StandardGaussian,
            mu,
            sigma,
            seed,
        }
    }

    fn scalings_for(c: &ProcessConfig, n: usize) -> ScalingSet {
        build_scaling_set(c, n, Sigma2Source::Exact { budget: 1 << 13 }).unwrap()
    }

    #[test]
    fn ks_known_single_observation() {
        // raw 0.5 when F(X_1) = 0.5, normalized by n / sigma_{n,1}
        let c = cfg(0.7, 4, 0.0, 1.0, 0);
        let g = PathGenerator::with_mode(&c, 1, GenMode::Direct).unwrap();
        let path = g.from_innovations(vec![0.0; 5]).unwrap();
        let var_x = g.coeffs().var_x();
        let s = ScalingSet {
            n: 1,
            beta: 0.7,
            sigma_n1: var_x.sqrt(),
            sigma_n2: 1.0,
            a_n: 1.0 / var_x.sqrt(),
            c_n: var_x,
            d_n2: f64::NAN,
            k_star: 2,
            regime: Regime::BetaBelow34,
        };
        let r = ks_known(&path, &g.marginal(), &s).unwrap();
        assert_relative_eq!(r.raw, 0.5);
        assert_relative_eq!(r.normalized, 0.5 / s.sigma_n1);
    }

    #[test]
    fn ks_estimated_at_true_theta_matches_known_raw() {
        let c = cfg(0.65, 128, 0.4, 1.6, 77);
        let g = PathGenerator::new(&c, 256).unwrap();
        let path = g.generate(77);
        let m = g.marginal();
        let s = scalings_for(&c, 256);
        let known = ks_known(&path, &m, &s).unwrap();
        // force theta-hat = theta_0 by evaluating H(.; mu) directly
        let sy = sorted(&path.y);
        let raw_forced = sup_norm_exact_sorted(&sy, |t| m.h_cdf(t, m.mu)).unwrap();
        assert_relative_eq!(known.raw, raw_forced, epsilon = 1e-12);
    }

    #[test]
    fn ks_estimated_normalization_by_regime() {
        let c_lo = cfg(0.65, 64, 0.0, 1.0, 5);
        let g = PathGenerator::new(&c_lo, 128).unwrap();
        let path = g.generate(5);
        let s = scalings_for(&c_lo, 128);
        let r = ks_estimated(&path, &g.marginal(), EstimatorSpec::Mean, &s).unwrap();
        assert_eq!(r.normalization, Normalization::SigmaN2N);
        assert_relative_eq!(r.normalized, r.raw * 128.0 / s.sigma_n2);
        assert_relative_eq!(r.normalized_sigma_n1, r.raw * 128.0 / s.sigma_n1);

        let c_hi = cfg(0.85, 64, 0.0, 1.0, 5);
        let g = PathGenerator::new(&c_hi, 128).unwrap();
        let path = g.generate(5);
        let s = scalings_for(&c_hi, 128);
        let r = ks_estimated(&path, &g.marginal(), EstimatorSpec::Mean, &s).unwrap();
        assert_eq!(r.normalization, Normalization::SqrtN);
        assert_relative_eq!(r.normalized, r.raw * 128f64.sqrt());
    }

    #[test]
    fn ks_estimated_regime_mismatch_rejected() {
        let c = cfg(0.85, 64, 0.0, 1.0, 5);
        let g = PathGenerator::new(&c, 128).unwrap();
        let path = g.generate(5);
        let s = scalings_for(&c, 128);
        assert!(matches!(
            ks_estimated_with(
                &path,
                &g.marginal(),
                EstimatorSpec::Mean,
                &s,
                Normalization::SigmaN2N
            ),
            Err(Error::RegimeMismatch(_))
        ));
        // the o_P(1) scale is legitimate in both regimes
        assert!(ks_estimated_with(
            &path,
            &g.marginal(),
            EstimatorSpec::Mean,
            &s,
            Normalization::SigmaN1N
        )
        .is_ok());
    }

    #[test]
    fn cvm_formula_minimum() {
        // u_i = (2i-1)/(2n) exactly: n * integral = 1/(12 n)
        let n = 8usize;
        let mut t = 1.0 / (12.0 * n as f64);
        for _ in 0..n {
            t += 0.0;
        }
        assert_relative_eq!(t, 1.0 / (12.0 * n as f64));
        // and through the public path with a crafted sample
        let coeffs = CoefficientSet::from_coeffs(vec![1.0], 0.7).unwrap();
        let m = marginal_model(&coeffs, 0.0, 1.0);
        let c = cfg(0.7, 1, 0.0, 1.0, 0);
        let g = PathGenerator::with_coeffs(&c, coeffs, 2, GenMode::Direct).unwrap();
        // choose innovations so that u_i = (0.25, 0.75) under theta = 0:
        // y_(i) = F^{-1}(u_i); K = 0 so x = eps
        let q1 = m.quantile(0.25);
        let q2 = m.quantile(0.75);
        let path = g.from_innovations(vec![q1, q2]).unwrap();
        let s = ScalingSet::from_variances(0.7, 4, 2.0, 1.0).unwrap();
        // mean of (q1, q2) is 0 by symmetry, so theta-hat = 0 = mu
        let r = cvm_estimated(&path, &m, EstimatorSpec::Mean, &s).unwrap();
        assert_relative_eq!(r.raw * 2.0, 1.0 / 24.0, epsilon = 1e-12);
    }

    #[test]
    fn cvm_matches_trapezoid_quadrature() {
        let c = cfg(0.7, 64, 0.3, 1.4, 41);
        let g = PathGenerator::new(&c, 100).unwrap();
        let path = g.generate(41);
        let m = g.marginal();
        let s = scalings_for(&c, 100);
        let r = cvm_estimated(&path, &m, EstimatorSpec::Mean, &s).unwrap();
        let theta = r.theta_hat.unwrap();

        // trapezoid in u = H(x; theta): integral (H_n - u)^2 du
        let sy = sorted(&path.y);
        let n = 100.0;
        let grid_n = 100_000;
        let mut acc = 0.0;
        let mut prev_u = 0.0;
        let mut prev_v = 0.0;
        for i in 0..=grid_n {
            let u = i as f64 / grid_n as f64;
            let x = if u == 0.0 {
                f64::NEG_INFINITY
            } else if u == 1.0 {
                f64::INFINITY
            } else {
                m.h_quantile(u, theta)
            };
            let hn = sy.partition_point(|&v| v <= x) as f64 / n;
            let v = (hn - u) * (hn - u);
            if i > 0 {
                acc += 0.5 * (v + prev_v) * (u - prev_u);
            }
            prev_u = u;
            prev_v = v;
        }
        assert_relative_eq!(r.raw, acc, max_relative = 1e-3, epsilon = 1e-9);
    }

    #[test]
    fn cvm_bounded_by_ks_squared() {
        let c = cfg(0.65, 128, 0.0, 1.0, 55);
        let g = PathGenerator::new(&c, 200).unwrap();
        let m = g.marginal();
        let s = scalings_for(&c, 200);
        for rep in 0..20 {
            let path = g.generate(derive_replication_seed(55, 200, rep));
            let ks = ks_estimated(&path, &m, EstimatorSpec::Mean, &s).unwrap();
            let cvm = cvm_estimated(&path, &m, EstimatorSpec::Mean, &s).unwrap();
            // n integral <= n sup^2 since integral dH = 1
            assert!(cvm.raw * 200.0 <= 200.0 * ks.raw * ks.raw + 1e-12);
        }
    }

    #[test]
    fn cvm_limit_constant_standard_normal() {
        // int (f')^2 f dz = 1 / (2 pi sqrt(27)) for the standard normal
        let coeffs = CoefficientSet::from_coeffs(vec![1.0], 0.7).unwrap();
        let m = marginal_model(&coeffs, 0.0, 1.0);
        let c = cvm_limit_constant(&m).unwrap();
        let closed = 1.0 / (2.0 * std::f64::consts::PI * 27f64.sqrt());
        assert_relative_eq!(c.integral, closed, epsilon = 1e-10);
        assert_relative_eq!(c.sigma_factor, 1.0);
    }

    #[test]
    fn cvm_limit_constant_variance_scaling() {
        // J(v) = J(1) / v^2, checked against quadrature at v = 4
        let coeffs = CoefficientSet::from_coeffs(vec![1.0], 0.7).unwrap();
        let m1 = marginal_model(&coeffs, 0.0, 1.0);
        let j1 = cvm_limit_constant(&m1).unwrap().integral;
        let m4 = MarginalModel {
            var_x: 4.0,
            mu: 0.0,
            sigma: 2.0,
        };
        let j4 = cvm_limit_constant(&m4).unwrap().integral;
        assert_relative_eq!(j4, j1 / 16.0, max_relative = 1e-9);
        assert_relative_eq!(cvm_limit_constant(&m4).unwrap().sigma_factor, 0.5);
    }

    #[test]
    fn cvm_limit_constant_even_integrand() {
        let coeffs = gen_coefficients(0.7, 64).unwrap();
        let m = marginal_model(&coeffs, 0.0, 1.0);
        let full = cvm_limit_constant(&m).unwrap().integral;
        let s = m.var_x.sqrt();
        let half = numerics::integrate(
            &|z| {
                let d = m.pdf_d1(z);
                d * d * m.pdf(z)
            },
            0.0,
            8.0 * s,
            1e-12,
            &[],
        )
        .unwrap();
        assert_relative_eq!(full, 2.0 * half, epsilon = 1e-10);
    }

    #[test]
    fn gof_record_shape() {
        let c = cfg(0.65, 32, 0.0, 1.0, 2);
        let g = PathGenerator::new(&c, 64).unwrap();
        let path = g.generate(2);
        let s = scalings_for(&c, 64);
        let r = ks_estimated(&path, &g.marginal(), EstimatorSpec::Mean, &s).unwrap();
        let rec = r.record(64, 0.65, 2);
        for key in ["stat", "raw", "normalized", "normalization", "estimator", "n", "beta", "seed"]
        {
            assert!(rec.get(key).is_some(), "missing {key}");
        }
        assert_eq!(rec["estimator"], "mean");
    }
}
