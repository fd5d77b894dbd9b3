//! Location estimators: the sample mean and M-estimators built from a
//! catalog of nondecreasing bounded psi functions, together with the
//! functionals lambda_k = int psi f^(k) and an empirical sigma_psi^2.
//!
//! An M-estimate minimizes |sum_j psi(Y_j - x)| over x. Since every catalog
//! psi is nondecreasing, the score x -> sum psi(Y_j - x) is nonincreasing
//! and the minimizing set is an interval; we return its midpoint, locating
//! both edges by bisection after geometric bracket expansion around the
//! sample median.

use crate::error::{Error, Result};
use crate::multilinear::MonteCarloEstimate;
use crate::numerics;
use crate::process::{derive_replication_seed, MarginalModel, PathGenerator, ProcessConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Default Huber clipping constant.
pub const DEFAULT_HUBER_C: f64 = 1.345;
/// Default smoothing width for the smoothed sign.
pub const DEFAULT_SSIGN_H: f64 = 0.1;
/// Default bisection width for M-estimates driven by the harness.
pub const DEFAULT_M_TOL: f64 = 1e-9;

/// Catalog of monotone, bounded, odd psi functions. Monotonicity is
/// guaranteed structurally: no other shapes are constructible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    Sign,
    Huber { c: f64 },
    SmoothedSign { h: f64 },
}

impl PsiKind {
    pub fn huber(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::parameter("c", "huber constant must be positive"));
        }
        Ok(PsiKind::Huber { c })
    }

    pub fn smoothed_sign(h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::parameter("h", "smoothing width must be positive"));
        }
        Ok(PsiKind::SmoothedSign { h })
    }

    /// Parses the CLI form `sign | huber:<c> | ssign:<h>`.
    pub fn parse(s: &str) -> Result<Self> {
        let unknown = || {
            Error::parameter(
                "psi",
                format!("unknown psi `{s}`; catalog: sign | huber:<c> | ssign:<h>"),
            )
        };
        if s == "sign" {
            return Ok(PsiKind::Sign);
        }
        if let Some(rest) = s.strip_prefix("huber:") {
            let c: f64 = rest.parse().map_err(|_| unknown())?;
            return PsiKind::huber(c);
        }
        if let Some(rest) = s.strip_prefix("ssign:") {
            let h: f64 = rest.parse().map_err(|_| unknown())?;
            return PsiKind::smoothed_sign(h);
        }
        Err(unknown())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            PsiKind::Sign => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            PsiKind::Huber { c } => t.clamp(-c, c),
            PsiKind::SmoothedSign { h } => (t / h).tanh(),
        }
    }

    /// Kinks/jumps of psi, used to pre-split quadrature intervals.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            PsiKind::Sign => vec![0.0],
            PsiKind::Huber { c } => vec![-c, c],
            PsiKind::SmoothedSign { .. } => vec![],
        }
    }
}

impl fmt::Display for PsiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PsiKind::Sign => write!(f, "sign"),
            PsiKind::Huber { c } => write!(f, "huber:{c}"),
            PsiKind::SmoothedSign { h } => write!(f, "ssign:{h}"),
        }
    }
}

/// lambda_1 and lambda_2 for one psi under one marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaPair {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// A location estimator selection: the sample mean or an M-estimator.
/// String form: `mean` or `m:<psi>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    Mean,
    M(PsiKind),
}

impl EstimatorSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(EstimatorSpec::Mean);
        }
        if let Some(rest) = s.strip_prefix("m:") {
            return Ok(EstimatorSpec::M(PsiKind::parse(rest)?));
        }
        Err(Error::parameter(
            "estimator",
            format!("unknown estimator `{s}`; expected mean | m:<psi>"),
        ))
    }

    pub fn estimate(&self, y: &[f64]) -> Result<f64> {
        match self {
            EstimatorSpec::Mean => sample_mean(y),
            EstimatorSpec::M(psi) => m_estimate(y, *psi, DEFAULT_M_TOL),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Mean => write!(f, "mean"),
            EstimatorSpec::M(psi) => write!(f, "m:{psi}"),
        }
    }
}

impl Serialize for EstimatorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        EstimatorSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Arithmetic mean. For Y = sigma X + mu it satisfies
/// mean(y) - mu = sigma * mean(x) exactly.
pub fn sample_mean(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(numerics::mean(y))
}

/// M-estimate of location: midpoint of the interval minimizing
/// |sum_j psi(Y_j - x)|, located to bisection width `tol`.
pub fn m_estimate(y: &[f64], psi: PsiKind, tol: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(tol > 0.0) {
        return Err(Error::parameter("tol", "must be positive"));
    }
    let score = |x: f64| -> f64 { y.iter().map(|&v| psi.eval(v - x)).sum() };
    let med = numerics::median(y);

    // The score is nonincreasing. Its zero set (or zero crossing) is
    // bounded by where "score <= 0" starts and where "score < 0" starts.
    let lower = boundary(&score, med, tol, |s| s <= 0.0)?;
    let upper = boundary(&score, med, tol, |s| s < 0.0)?;
    Ok(0.5 * (lower + upper))
}

/// First x where `hit(score(x))` turns true, assuming monotonicity.
fn boundary(
    score: &dyn Fn(f64) -> f64,
    center: f64,
    tol: f64,
    hit: impl Fn(f64) -> bool,
) -> Result<f64> {
    const MAX_EXPANSIONS: u32 = 64;
    let mut lo = center - 1.0;
    let mut hi = center + 1.0;
    let mut step = 1.0;
    let mut tries = 0;
    while hit(score(lo)) {
        lo -= step;
        step *= 2.0;
        tries += 1;
        if tries > MAX_EXPANSIONS {
            return Err(Error::NoRoot(format!(
                "score keeps the same sign down to x = {lo}; \
                 psi may be degenerate on this sample"
            )));
        }
    }
    step = 1.0;
    tries = 0;
    while !hit(score(hi)) {
        hi += step;
        step *= 2.0;
        tries += 1;
        if tries > MAX_EXPANSIONS {
            return Err(Error::NoRoot(format!(
                "score keeps the same sign up to x = {hi}; \
                 psi may be degenerate on this sample"
            )));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if hit(score(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// lambda_k = int psi(y) f^(k)(y) dy for k in {1, 2}, by adaptive
/// quadrature over [-8 sd, 8 sd] at absolute tolerance 1e-10.
pub fn lambda_k(psi: PsiKind, marginal: &MarginalModel, k: usize) -> Result<f64> {
    if !(1..=2).contains(&k) {
        return Err(Error::parameter("k", "must be 1 or 2"));
    }
    let s = marginal.var_x.sqrt();
    numerics::integrate(
        &|y| psi.eval(y) * marginal.pdf_deriv(k, y),
        -8.0 * s,
        8.0 * s,
        1e-10,
        &psi.breakpoints(),
    )
}

/// Both lambdas at once.
pub fn lambda_pair(psi: PsiKind, marginal: &MarginalModel) -> Result<LambdaPair> {
    Ok(LambdaPair {
        lambda1: lambda_k(psi, marginal, 1)?,
        lambda2: lambda_k(psi, marginal, 2)?,
    })
}

/// E psi(Y_1 - mu) = int psi(sigma x) f(x) dx; zero for every catalog
/// member under the symmetric Gaussian marginal.
pub fn expectation_psi(psi: PsiKind, marginal: &MarginalModel) -> Result<f64> {
    let s = marginal.var_x.sqrt();
    let sigma = marginal.sigma;
    let mut breaks: Vec<f64> = psi.breakpoints().into_iter().map(|b| b / sigma).collect();
    breaks.push(0.0);
    numerics::integrate(
        &|x| psi.eval(sigma * x) * marginal.pdf(x),
        -8.0 * s,
        8.0 * s,
        1e-10,
        &breaks,
    )
}

/// Sample variance of sqrt(n) (M_n - mean) across independent paths.
/// Estimates the sigma_psi^2 appearing in the sqrt(n) regime, which is why
/// beta > 3/4 is required.
pub fn estimate_sigma_psi_sq(
    config: &ProcessConfig,
    psi: PsiKind,
    n: usize,
    reps: usize,
) -> Result<MonteCarloEstimate> {
    if config.beta <= 0.75 {
        return Err(Error::RegimeMismatch(format!(
            "sigma_psi^2 targets the sqrt(n) regime and needs beta > 3/4; got {}",
            config.beta
        )));
    }
    if reps < 200 {
        return Err(Error::parameter("reps", "must be at least 200"));
    }
    let generator = PathGenerator::new(config, n)?;
    let sqrt_n = (n as f64).sqrt();
    let diffs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let path = generator.generate(derive_replication_seed(config.seed, n, rep));
            let mean = numerics::mean(&path.y);
            let m = m_estimate(&path.y, psi, DEFAULT_M_TOL).expect("monotone catalog psi");
            sqrt_n * (m - mean)
        })
        .collect();
    Ok(MonteCarloEstimate {
        value: numerics::variance(&diffs),
        std_error: numerics::variance_std_error(&diffs),
        reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{gen_coefficients, marginal_model, CoefficientSet, Innovation};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn std_marginal() -> MarginalModel {
        let coeffs = CoefficientSet::from_coeffs(vec![1.0], 0.7).unwrap();
        marginal_model(&coeffs, 0.0, 1.0)
    }

    #[test]
    fn psi_parse_roundtrip() {
        for s in ["sign", "huber:1.345", "ssign:0.1"] {
            let p = PsiKind::parse(s).unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!(PsiKind::parse("tukey").is_err());
        assert!(PsiKind::parse("huber:-1").is_err());
        assert!(PsiKind::parse("huber:x").is_err());
    }

    #[test]
    fn psi_values() {
        assert_eq!(PsiKind::Sign.eval(0.0), 0.0);
        assert_eq!(PsiKind::Sign.eval(3.0), 1.0);
        assert_eq!(PsiKind::Sign.eval(-0.1), -1.0);
        let h = PsiKind::huber(1.345).unwrap();
        assert_relative_eq!(h.eval(0.5), 0.5);
        assert_relative_eq!(h.eval(5.0), 1.345);
        assert_relative_eq!(h.eval(-5.0), -1.345);
    }

    #[test]
    fn psi_centered_under_symmetric_marginal() {
        let m = std_marginal();
        for psi in [
            PsiKind::Sign,
            PsiKind::huber(1.345).unwrap(),
            PsiKind::smoothed_sign(0.1).unwrap(),
        ] {
            assert!(expectation_psi(psi, &m).unwrap().abs() <= 1e-8);
        }
    }

    #[test]
    fn mean_basics() {
        assert_relative_eq!(sample_mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_relative_eq!(sample_mean(&[4.2; 9]).unwrap(), 4.2);
        assert!(sample_mean(&[]).is_err());
    }

    #[test]
    fn mean_location_identity() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let (mu, sigma) = (1.7, 2.5);
        let y: Vec<f64> = x.iter().map(|&v| sigma * v + mu).collect();
        let lhs = sample_mean(&y).unwrap() - mu;
        let rhs = sigma * sample_mean(&x).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn m_estimate_sign_is_median() {
        let m = m_estimate(&[-1.0, 0.0, 1.0], PsiKind::Sign, 1e-10).unwrap();
        assert!(m.abs() < 1e-9);
        let m = m_estimate(&[1.0, 2.0, 3.0, 4.0], PsiKind::Sign, 1e-10).unwrap();
        assert_relative_eq!(m, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn m_estimate_sign_median_equivalence_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..500 {
            let n = 3 + (trial % 30);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let m = m_estimate(&y, PsiKind::Sign, 1e-10).unwrap();
            let mut sorted = y.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            assert!((m - med).abs() < 1e-8, "n={n}: {m} vs {med}");
        }
    }

    #[test]
    fn m_estimate_translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y: Vec<f64> = (0..97).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for psi in [
            PsiKind::Sign,
            PsiKind::huber(1.345).unwrap(),
            PsiKind::smoothed_sign(0.1).unwrap(),
        ] {
            let base = m_estimate(&y, psi, 1e-10).unwrap();
            let shifted: Vec<f64> = y.iter().map(|v| v + 11.25).collect();
            let m = m_estimate(&shifted, psi, 1e-10).unwrap();
            assert!((m - base - 11.25).abs() < 1e-8, "{psi}");
        }
    }

    #[test]
    fn m_estimate_huber_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y: Vec<f64> = (0..10_000)
            .map(|_| 3.0 + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let psi = PsiKind::huber(1.345).unwrap();
        let m = m_estimate(&y, psi, 1e-10).unwrap();
        assert!((m - 3.0).abs() < 5.0 * 1.05 / 100.0, "m = {m}");

        let med = numerics::median(&y);
        let score_abs =
            |x: f64| -> f64 { y.iter().map(|&v| psi.eval(v - x)).sum::<f64>().abs() };
        let step = 1e-4;
        let mut best_x = med - 0.5;
        let mut best = f64::INFINITY;
        let mut x = med - 0.5;
        while x <= med + 0.5 {
            let v = score_abs(x);
            if v < best {
                best = v;
                best_x = x;
            }
            x += step;
        }
        assert!((m - best_x).abs() < 2.0 * step, "{m} vs grid {best_x}");
    }

    #[test]
    fn lambda_sign_closed_form() {
        // int sign(y) f'(y) dy = -2 f(0)
        let m = std_marginal();
        let l1 = lambda_k(PsiKind::Sign, &m, 1).unwrap();
        assert_relative_eq!(l1, -0.797885, epsilon = 1e-6);
        assert_relative_eq!(l1, -2.0 * m.pdf(0.0), epsilon = 1e-9);
    }

    #[test]
    fn lambda2_vanishes_for_odd_psi() {
        let m = std_marginal();
        for psi in [
            PsiKind::Sign,
            PsiKind::huber(1.345).unwrap(),
            PsiKind::smoothed_sign(0.1).unwrap(),
        ] {
            assert!(lambda_k(psi, &m, 2).unwrap().abs() < 1e-9, "{psi}");
        }
    }

    #[test]
    fn lambda1_negative_for_catalog() {
        let coeffs = gen_coefficients(0.7, 512).unwrap();
        let m = marginal_model(&coeffs, 0.0, 1.0);
        for psi in [
            PsiKind::Sign,
            PsiKind::huber(1.345).unwrap(),
            PsiKind::smoothed_sign(0.1).unwrap(),
        ] {
            assert!(lambda_k(psi, &m, 1).unwrap() < 0.0, "{psi}");
        }
    }

    #[test]
    fn lambda1_matches_location_derivative() {
        // d/dtheta int psi(y) f(y - theta) dy at 0 equals -lambda_1
        let m = std_marginal();
        let psi = PsiKind::huber(1.345).unwrap();
        let l1 = lambda_k(psi, &m, 1).unwrap();
        let g = |theta: f64| -> f64 {
            numerics::integrate(
                &|y| psi.eval(y) * m.pdf(y - theta),
                -10.0,
                10.0,
                1e-12,
                &[-1.345, 1.345],
            )
            .unwrap()
        };
        let h = 1e-4;
        let fd = (g(h) - g(-h)) / (2.0 * h);
        assert!((l1 + fd).abs() < 1e-6, "lambda1 {l1}, -g'(0) {}", -fd);
    }

    #[test]
    fn lambda_k_rejects_bad_order() {
        let m = std_marginal();
        assert!(lambda_k(PsiKind::Sign, &m, 0).is_err());
        assert!(lambda_k(PsiKind::Sign, &m, 3).is_err());
    }

    fn cfg(beta: f64, trunc_k: usize, seed: u64) -> ProcessConfig {
        ProcessConfig {
            beta,
            trunc_k,
            innovation: Innovation::StandardGaussian,
            mu: 0.0,
            sigma: 1.0,
            seed,
        }
    }

    #[test]
    fn sigma_psi_requires_large_beta() {
        let c = cfg(0.7, 16, 0);
        assert!(matches!(
            estimate_sigma_psi_sq(&c, PsiKind::Sign, 64, 200),
            Err(Error::RegimeMismatch(_))
        ));
        let c = cfg(0.8, 16, 0);
        assert!(estimate_sigma_psi_sq(&c, PsiKind::Sign, 64, 100).is_err());
    }

    #[test]
    fn sigma_psi_linear_psi_degenerates_to_zero() {
        // a huge clipping constant makes psi linear on any realized sample,
        // so M coincides with the mean
        let c = cfg(0.8, 64, 3);
        let est = estimate_sigma_psi_sq(&c, PsiKind::huber(1e9).unwrap(), 256, 200).unwrap();
        assert!(est.value < 1e-10, "value {}", est.value);
    }

    #[test]
    fn sigma_psi_sign_positive_at_beta_08() {
        let c = cfg(0.8, 1 << 10, 9);
        let est = estimate_sigma_psi_sq(&c, PsiKind::Sign, 1 << 10, 400).unwrap();
        assert!(
            est.value > 5.0 * est.std_error,
            "value {} se {}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn sigma_psi_stable_across_n() {
        let c = cfg(0.85, 1 << 11, 13);
        let a = estimate_sigma_psi_sq(&c, PsiKind::Sign, 1 << 11, 300).unwrap();
        let b = estimate_sigma_psi_sq(&c, PsiKind::Sign, 1 << 12, 300).unwrap();
        let gap = (a.value - b.value).abs();
        let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
        assert!(gap < 3.0 * se, "{} vs {}, se {}", a.value, b.value, se);
    }
}
