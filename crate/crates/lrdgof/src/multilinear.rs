//! Multilinear forms Y_{n,r} for r = 0, 1, 2 and their exact finite-n
//! variances under unit-variance innovations.
//!
//! Y_{n,2} is evaluated through the per-observation identity
//! sum_{j1<j2} a_{j1} a_{j2} = ((sum a)^2 - sum a^2) / 2, which reduces it
//! to the path values X_i and the squared-coefficient filter output. The
//! exact variance of Y_{n,2} sums B(t1,t2)^2 over innovation pairs using
//! per-lag prefix sums of c_m c_{m+d}.

use crate::error::{Error, Result};
use crate::process::{
    derive_replication_seed, CoefficientSet, PathBundle, PathGenerator, ProcessConfig,
};
use rayon::prelude::*;
use serde::Serialize;

/// Y_{n,0} = n, Y_{n,1} = sum X_i and the second-order form Y_{n,2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultilinearSums {
    pub y0: usize,
    pub y1: f64,
    pub y2: f64,
}

/// Work bound for the exact Var(Y_{n,2}) evaluation, applied to n + K.
pub const DEFAULT_SIGMA2_BUDGET: usize = 1 << 13;

/// Computes (Y_{n,0}, Y_{n,1}, Y_{n,2}) from a realized path.
pub fn compute_sums(path: &PathBundle, coeffs: &CoefficientSet) -> Result<MultilinearSums> {
    if path.trunc_k != coeffs.trunc_k() {
        return Err(Error::Contract(format!(
            "path truncation K = {} does not match coefficient set K = {}",
            path.trunc_k,
            coeffs.trunc_k()
        )));
    }
    let y1: f64 = path.x.iter().sum();
    let mut y2 = 0.0;
    for i in 0..path.n {
        let e = path.eps[path.trunc_k + i];
        let q_hat = path.q[i] + e * e;
        y2 += path.x[i] * path.x[i] - q_hat;
    }
    Ok(MultilinearSums {
        y0: path.n,
        y1,
        y2: 0.5 * y2,
    })
}

/// Exact Var(Y_{n,1}) = n rho_0 + 2 sum_{k=1}^{n-1} (n - k) rho_k with
/// rho_k the truncated lag products of the coefficients.
pub fn exact_sigma1_sq(n: usize, coeffs: &CoefficientSet) -> Result<f64> {
    if n < 1 {
        return Err(Error::parameter("n", "must be at least 1"));
    }
    let max_lag = (n - 1).min(coeffs.trunc_k());
    let rho = coeffs.autocovariances(max_lag);
    let mut acc = n as f64 * rho[0];
    for k in 1..=max_lag {
        acc += 2.0 * (n - k) as f64 * rho[k];
    }
    Ok(acc)
}

/// Exact Var(Y_{n,2}) within the default work budget on n + K.
pub fn exact_sigma2_sq(n: usize, coeffs: &CoefficientSet) -> Result<f64> {
    exact_sigma2_sq_with_budget(n, coeffs, DEFAULT_SIGMA2_BUDGET)
}

/// Exact Var(Y_{n,2}) = sum over innovation pairs t1 < t2 of B(t1,t2)^2,
/// B(t1,t2) = sum over valid i of c_{i-t1} c_{i-t2}.
///
/// Work is O(K * (n + K)); callers above `budget` get a
/// [`Error::BudgetExceeded`] pointing at [`monte_carlo_sigma2`].
pub fn exact_sigma2_sq_with_budget(
    n: usize,
    coeffs: &CoefficientSet,
    budget: usize,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::parameter("n", "must be at least 2"));
    }
    let big_k = coeffs.trunc_k();
    if n + big_k > budget {
        return Err(Error::BudgetExceeded {
            required: n + big_k,
            budget,
        });
    }
    if big_k == 0 {
        return Ok(0.0);
    }
    let c = coeffs.coeffs();

    // One pass per lag d. With p[m] = sum_{m'<=m} c_{m'} c_{m'+d} the pair
    // weight for t2 = s is p[hi] - p[lo], both cutoffs linear in s, so each
    // contribution reduces to running sums of p and p^2 plus one explicit
    // scan for the offsets that mix p[n+j] with p[j].
    let partials: Vec<f64> = (1..=big_k)
        .into_par_iter()
        .map_init(
            || Vec::<f64>::new(),
            |buf, d| {
                let kd = big_k - d;
                buf.clear();
                buf.reserve(kd + 1);
                let mut acc = 0.0;
                for m in 0..=kd {
                    acc += c[m] * c[m + d];
                    buf.push(acc);
                }
                let g = buf[kd];
                let mut total = 0.0;
                if n > kd {
                    // all-interior windows plus both truncated flanks
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for &p in buf[..kd].iter() {
                        s1 += p;
                        s2 += p * p;
                    }
                    total += (n - kd) as f64 * g * g;
                    total += kd as f64 * g * g - 2.0 * g * s1 + s2; // left flank
                    total += s2; // right flank
                } else {
                    // n <= kd: windows of width <= n everywhere
                    for j in 0..n {
                        total += buf[j] * buf[j];
                    }
                    for j in 0..=kd - n {
                        let bv = buf[n + j] - buf[j];
                        total += bv * bv;
                    }
                    for j in (kd - n + 1)..kd {
                        let bv = g - buf[j];
                        total += bv * bv;
                    }
                }
                total
            },
        )
        .collect();

    // deterministic accumulation order regardless of thread count
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in partials {
        let t = v - comp;
        let s = sum + t;
        comp = (s - sum) - t;
        sum = s;
    }
    Ok(sum)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Sample variance of Y_{n,2} over independent replications; the fallback
/// normalizer when the exact evaluation is over budget.
pub fn monte_carlo_sigma2(
    config: &ProcessConfig,
    n: usize,
    reps: usize,
) -> Result<MonteCarloEstimate> {
    if reps < 100 {
        return Err(Error::parameter("reps", "must be at least 100"));
    }
    let generator = PathGenerator::new(config, n)?;
    let coeffs = generator.coeffs().clone();
    let y2s: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let path = generator.generate(derive_replication_seed(config.seed, n, rep));
            compute_sums(&path, &coeffs).expect("generator and coefficients agree").y2
        })
        .collect();
    let var = crate::numerics::variance(&y2s);
    Ok(MonteCarloEstimate {
        value: var,
        std_error: crate::numerics::variance_std_error(&y2s),
        reps,
    })
}

/// Single-threaded reference implementations used by tests and the
/// acceptance suite. Independent of the identity-based production paths.
pub mod oracles {
    use crate::process::{CoefficientSet, PathBundle};

    /// Triple-loop Y_{n,2} = sum_i sum_{0<=j1<j2<=K} c_{j1} c_{j2}
    /// e_{i-j1} e_{i-j2}.
    pub fn brute_y2(path: &PathBundle, coeffs: &CoefficientSet) -> f64 {
        let c = coeffs.coeffs();
        let k = coeffs.trunc_k();
        let mut total = 0.0;
        for i in 1..=path.n {
            for j1 in 0..k {
                for j2 in (j1 + 1)..=k {
                    total += c[j1] * c[j2] * path.eps_at(i, j1) * path.eps_at(i, j2);
                }
            }
        }
        total
    }

    /// Var(Y_{n,1}) through the innovation-weight route
    /// sum_t (sum_i c_{i-t})^2, an algebraic route independent of the
    /// autocovariance formula.
    pub fn brute_sigma1_sq(n: usize, coeffs: &CoefficientSet) -> f64 {
        let c = coeffs.coeffs();
        let k = coeffs.trunc_k() as i64;
        let mut total = 0.0;
        for t in (1 - k)..=(n as i64) {
            let mut a = 0.0;
            for i in 1..=n as i64 {
                let j = i - t;
                if (0..=k).contains(&j) {
                    a += c[j as usize];
                }
            }
            total += a * a;
        }
        total
    }

    /// Var(Y_{n,2}) by direct enumeration of B(t1, t2) over all pairs.
    pub fn brute_sigma2_sq(n: usize, coeffs: &CoefficientSet) -> f64 {
        let c = coeffs.coeffs();
        let k = coeffs.trunc_k() as i64;
        let mut total = 0.0;
        for t1 in (1 - k)..=(n as i64) {
            for t2 in (t1 + 1)..=(n as i64) {
                let mut b = 0.0;
                for i in 1..=n as i64 {
                    let j1 = i - t1;
                    let j2 = i - t2;
                    if (0..=k).contains(&j1) && (0..=k).contains(&j2) {
                        b += c[j1 as usize] * c[j2 as usize];
                    }
                }
                total += b * b;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{GenMode, Innovation};
    use approx::assert_relative_eq;

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
    fn sums_zero_innovations() {
        let c = cfg(0.7, 4, 0);
        let g = PathGenerator::with_mode(&c, 6, GenMode::Direct).unwrap();
        let path = g.from_innovations(vec![0.0; 10]).unwrap();
        let s = compute_sums(&path, g.coeffs()).unwrap();
        assert_eq!(s.y0, 6);
        assert_eq!(s.y1, 0.0);
        assert_eq!(s.y2, 0.0);
    }

    #[test]
    fn sums_single_pair_case() {
        // n = 1, K = 1, eps = (e0, e1) indexed t = 0, 1: y2 = c0 c1 e1 e0
        let c = cfg(0.7, 1, 0);
        let g = PathGenerator::with_mode(&c, 1, GenMode::Direct).unwrap();
        let e0 = 0.8;
        let e1 = -1.3;
        let path = g.from_innovations(vec![e0, e1]).unwrap();
        let s = compute_sums(&path, g.coeffs()).unwrap();
        let c1 = g.coeffs().coeffs()[1];
        assert_relative_eq!(s.y2, c1 * e0 * e1, epsilon = 1e-14);
        assert_relative_eq!(s.y1, e1 + c1 * e0, epsilon = 1e-14);
    }

    #[test]
    fn sums_match_brute_force_small() {
        let c = cfg(0.7, 8, 5);
        let g = PathGenerator::with_mode(&c, 8, GenMode::Direct).unwrap();
        for rep in 0..20 {
            let path = g.generate(derive_replication_seed(17, 8, rep));
            let s = compute_sums(&path, g.coeffs()).unwrap();
            let brute = oracles::brute_y2(&path, g.coeffs());
            assert_relative_eq!(s.y2, brute, max_relative = 1e-12, epsilon = 1e-12);
            let y1_direct: f64 = path.x.iter().sum();
            assert_relative_eq!(s.y1, y1_direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn sums_reject_mismatched_coefficients() {
        let c = cfg(0.7, 4, 0);
        let g = PathGenerator::with_mode(&c, 6, GenMode::Direct).unwrap();
        let path = g.generate(0);
        let other = crate::process::gen_coefficients(0.7, 5).unwrap();
        assert!(compute_sums(&path, &other).is_err());
    }

    #[test]
    fn sigma1_white_noise_is_n() {
        let coeffs = CoefficientSet::from_coeffs(vec![1.0], 0.7).unwrap();
        assert_relative_eq!(exact_sigma1_sq(17, &coeffs).unwrap(), 17.0);
    }

    #[test]
    fn sigma1_n1_is_rho0() {
        let coeffs = crate::process::gen_coefficients(0.7, 64).unwrap();
        assert_relative_eq!(
            exact_sigma1_sq(1, &coeffs).unwrap(),
            coeffs.var_x(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sigma1_matches_innovation_route() {
        for &(beta, k, n) in &[(0.7, 8usize, 12usize), (0.6, 16, 5), (0.9, 3, 20)] {
            let coeffs = crate::process::gen_coefficients(beta, k).unwrap();
            let exact = exact_sigma1_sq(n, &coeffs).unwrap();
            let brute = oracles::brute_sigma1_sq(n, &coeffs);
            assert_relative_eq!(exact, brute, max_relative = 1e-12);
        }
    }

    #[test]
    fn sigma1_matches_monte_carlo() {
        // beta = 0.7, K = 2^12, n = 2^10, 2000 replications
        let c = cfg(0.7, 1 << 12, 11);
        let coeffs = crate::process::gen_coefficients(0.7, 1 << 12).unwrap();
        let exact = exact_sigma1_sq(1 << 10, &coeffs).unwrap();
        let g = PathGenerator::new(&c, 1 << 10).unwrap();
        let y1s: Vec<f64> = (0..2000usize)
            .into_par_iter()
            .map(|rep| {
                let p = g.generate(derive_replication_seed(11, 1 << 10, rep));
                p.x.iter().sum::<f64>()
            })
            .collect();
        let sample_var = crate::numerics::variance(&y1s);
        let se = crate::numerics::variance_std_error(&y1s);
        assert!(
            (sample_var - exact).abs() < 3.0 * se,
            "sample {sample_var}, exact {exact}, se {se}"
        );
    }

    #[test]
    fn sigma2_white_noise_is_zero() {
        let coeffs = CoefficientSet::from_coeffs(vec![1.0], 0.7).unwrap();
        assert_eq!(exact_sigma2_sq(16, &coeffs).unwrap(), 0.0);
    }

    #[test]
    fn sigma2_matches_brute_force() {
        for &(beta, k, n) in &[
            (0.7, 4usize, 4usize),
            (0.7, 8, 6),
            (0.65, 6, 9),
            (0.9, 12, 3),
            (0.8, 3, 16),
        ] {
            let coeffs = crate::process::gen_coefficients(beta, k).unwrap();
            let exact = exact_sigma2_sq(n, &coeffs).unwrap();
            let brute = oracles::brute_sigma2_sq(n, &coeffs);
            assert_relative_eq!(exact, brute, max_relative = 1e-12);
        }
    }

    #[test]
    fn sigma2_budget_error() {
        let coeffs = crate::process::gen_coefficients(0.7, 1 << 13).unwrap();
        match exact_sigma2_sq(1 << 10, &coeffs) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, (1 << 13) + (1 << 10));
                assert_eq!(budget, DEFAULT_SIGMA2_BUDGET);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        assert!(exact_sigma2_sq_with_budget(1 << 10, &coeffs, 1 << 14).is_ok());
    }

    #[test]
    fn sigma2_matches_monte_carlo() {
        // beta = 0.7, K = 2^10, n = 2^8, 5000 replications
        let c = cfg(0.7, 1 << 10, 23);
        let coeffs = crate::process::gen_coefficients(0.7, 1 << 10).unwrap();
        let exact = exact_sigma2_sq_with_budget(1 << 8, &coeffs, 1 << 14).unwrap();
        let mc = monte_carlo_sigma2(&c, 1 << 8, 5000).unwrap();
        assert!(
            (mc.value - exact).abs() < 3.0 * mc.std_error,
            "mc {} +- {}, exact {exact}",
            mc.value,
            mc.std_error
        );
    }

    #[test]
    fn monte_carlo_rejects_small_reps() {
        let c = cfg(0.7, 16, 0);
        assert!(monte_carlo_sigma2(&c, 32, 50).is_err());
    }

    #[test]
    fn monte_carlo_se_scales_with_reps() {
        // short filter keeps Y_{n,2} nearly Gaussian so the fourth-moment
        // based standard error is itself stable
        let c = cfg(0.7, 4, 31);
        let a = monte_carlo_sigma2(&c, 128, 600).unwrap();
        let b = monte_carlo_sigma2(&c, 128, 1200).unwrap();
        let ratio = b.std_error / a.std_error;
        let target = 0.5f64.sqrt();
        assert!(
            (ratio - target).abs() / target < 0.2,
            "se ratio {ratio}, expected about {target}"
        );
    }
}
