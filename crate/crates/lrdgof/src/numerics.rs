//! Shared numerical utilities: normal-distribution helpers, adaptive
//! quadrature, small least-squares fits, sample statistics and FFT
//! convolution for long moving-average filters.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::{Arc, OnceLock};

fn std_normal() -> &'static Normal {
    static STD: OnceLock<Normal> = OnceLock::new();
    STD.get_or_init(|| Normal::new(0.0, 1.0).expect("standard normal"))
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

/// Standard normal quantile function.
pub fn std_normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// ---------------------------------------------------------------------------
// Adaptive quadrature
// ---------------------------------------------------------------------------

const QUAD_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`. `breakpoints` marks known kinks/jumps of the integrand; the
/// interval is split there before adaptation starts.
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    breakpoints: &[f64],
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::parameter("tol", "must be positive"));
    }
    if a >= b {
        return Err(Error::parameter("bounds", format!("need a < b, got [{a}, {b}]")));
    }
    let mut cuts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    inner.sort_by(|p, q| p.partial_cmp(q).unwrap());
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    let n_seg = cuts.len() - 1;
    let seg_tol = tol / n_seg as f64;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adaptive_simpson(f, w[0], w[1], seg_tol)?;
    }
    Ok(total)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    // Segment boundaries may sit on jumps of the integrand; take the
    // endpoint values one-sided from inside the segment.
    let nudge = (b - a) * 1e-12;
    let m = 0.5 * (a + b);
    let fa = f(a + nudge);
    let fm = f(m);
    let fb = f(b - nudge);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "max subdivision depth reached on [{a}, {b}]"
        )));
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

// ---------------------------------------------------------------------------
// Small least-squares helpers
// ---------------------------------------------------------------------------

/// Slope of the no-intercept least-squares fit `y ~ slope * x`, together
/// with the uncentered R^2 (squared cosine between x and y).
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    if sxx == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Ordinary least squares line `y ~ intercept + slope * x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// No-intercept least squares on two regressors: `y ~ c1 * r1 + c2 * r2`.
/// Returns (c1, c2) from the 2x2 normal equations.
pub fn fit_two_regressors(r1: &[f64], r2: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(r1.len(), y.len());
    assert_eq!(r2.len(), y.len());
    let mut a11 = 0.0;
    let mut a12 = 0.0;
    let mut a22 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for i in 0..y.len() {
        a11 += r1[i] * r1[i];
        a12 += r1[i] * r2[i];
        a22 += r2[i] * r2[i];
        b1 += r1[i] * y[i];
        b2 += r2[i] * y[i];
    }
    let det = a11 * a22 - a12 * a12;
    ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

// ---------------------------------------------------------------------------
// Sample statistics
// ---------------------------------------------------------------------------

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Central moments up to order four, returned as (mean, m2, m3, m4) with
/// the population 1/n convention.
pub fn central_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m, m2 / n, m3 / n, m4 / n)
}

/// Moment skewness m3 / m2^(3/2).
pub fn skewness(xs: &[f64]) -> f64 {
    let (_, m2, m3, _) = central_moments(xs);
    m3 / m2.powf(1.5)
}

/// Excess kurtosis m4 / m2^2 - 3.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let (_, m2, _, m4) = central_moments(xs);
    m4 / (m2 * m2) - 3.0
}

/// Standard error of the sample variance, from the fourth central moment.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (_, m2, _, m4) = central_moments(xs);
    (((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0)).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = h - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
pub fn two_sample_ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

// ---------------------------------------------------------------------------
// FFT convolution
// ---------------------------------------------------------------------------

/// Convolves one input stream against two kernels at once.
///
/// Built for moving-average path generation: the innovations are convolved
/// with the coefficients c_k and, in the same pass, their squares with
/// c_k^2. Both real transforms are packed into a single complex FFT (input
/// in the real lane, squared input in the imaginary lane) and both results
/// come back from a single inverse transform.
pub struct DualKernelConvolver {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spec_a: Vec<Complex<f64>>,
    spec_b: Vec<Complex<f64>>,
}

impl DualKernelConvolver {
    /// `sig_len` is the length of the signals that will be convolved. The
    /// FFT size is the next power of two at or above `sig_len` so that the
    /// cyclic wrap never reaches the requested output window.
    pub fn new(kernel_a: &[f64], kernel_b: &[f64], sig_len: usize) -> Self {
        assert_eq!(kernel_a.len(), kernel_b.len());
        assert!(kernel_a.len() <= sig_len);
        let len = sig_len.next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut buf_a: Vec<Complex<f64>> = kernel_a
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(len)
            .collect();
        let mut buf_b: Vec<Complex<f64>> = kernel_b
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(len)
            .collect();
        fwd.process(&mut buf_a);
        fwd.process(&mut buf_b);
        DualKernelConvolver {
            len,
            fwd,
            inv,
            spec_a: buf_a,
            spec_b: buf_b,
        }
    }

    /// Returns `(a * sig_a, b * sig_b)` restricted to output indices
    /// `out_lo .. out_lo + out_n` of the linear convolution.
    pub fn convolve(
        &self,
        sig_a: &[f64],
        sig_b: &[f64],
        out_lo: usize,
        out_n: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(sig_a.len(), sig_b.len());
        assert!(sig_a.len() <= self.len);
        assert!(out_lo + out_n <= sig_a.len());
        let len = self.len;
        let mut z: Vec<Complex<f64>> = (0..len)
            .map(|i| {
                if i < sig_a.len() {
                    Complex::new(sig_a[i], sig_b[i])
                } else {
                    Complex::new(0.0, 0.0)
                }
            })
            .collect();
        self.fwd.process(&mut z);

        // Unpack spectra of the two real signals, multiply with the kernel
        // spectra and repack product_a + i * product_b for one inverse pass.
        let mut p: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); len];
        for k in 0..len {
            let kc = if k == 0 { 0 } else { len - k };
            let zk = z[k];
            let zc = z[kc].conj();
            let ea = 0.5 * (zk + zc);
            let eb = Complex::new(0.0, -0.5) * (zk - zc);
            let pa = ea * self.spec_a[k];
            let pb = eb * self.spec_b[k];
            p[k] = pa + Complex::new(0.0, 1.0) * pb;
        }
        self.inv.process(&mut p);

        let scale = 1.0 / len as f64;
        let mut out_a = Vec::with_capacity(out_n);
        let mut out_b = Vec::with_capacity(out_n);
        for m in out_lo..out_lo + out_n {
            out_a.push(p[m].re * scale);
            out_b.push(p[m].im * scale);
        }
        (out_a, out_b)
    }
}

/// Lag products r_k = sum_j c_j c_{j+k} for k = 0..max_lag via one FFT.
pub fn autocorrelation_fft(c: &[f64], max_lag: usize) -> Vec<f64> {
    let n = c.len();
    let len = (n + max_lag + 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf: Vec<Complex<f64>> = c
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    fwd.process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let scale = 1.0 / len as f64;
    (0..=max_lag.min(n - 1))
        .map(|k| buf[k].re * scale)
        .chain(std::iter::repeat(0.0))
        .take(max_lag + 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_polynomial_exact() {
        let v = integrate(&|x| x * x, 0.0, 3.0, 1e-12, &[]).unwrap();
        assert_relative_eq!(v, 9.0, epsilon = 1e-10);
    }

    #[test]
    fn quadrature_with_jump_breakpoint() {
        let f = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
        let v = integrate(&f, -1.0, 2.0, 1e-10, &[0.0]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quadrature_gaussian_mass() {
        let v = integrate(&std_normal_pdf, -8.0, 8.0, 1e-10, &[]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn normal_cdf_quantile_roundtrip() {
        for &p in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            assert_relative_eq!(std_normal_cdf(std_normal_quantile(p)), p, epsilon = 1e-9);
        }
    }

    #[test]
    fn origin_fit_recovers_slope() {
        let x: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.7 * v).collect();
        let (slope, r2) = fit_through_origin(&x, &y);
        assert_relative_eq!(slope, 3.7, epsilon = 1e-12);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_regressor_fit_recovers_coefficients() {
        let r1: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let r2: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let y: Vec<f64> = r1
            .iter()
            .zip(&r2)
            .map(|(a, b)| 2.0 * a - 0.5 * b)
            .collect();
        let (c1, c2) = fit_two_regressors(&r1, &r2, &y);
        assert_relative_eq!(c1, 2.0, epsilon = 1e-10);
        assert_relative_eq!(c2, -0.5, epsilon = 1e-10);
    }

    #[test]
    fn ks_distance_disjoint_samples() {
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![10.0, 11.0];
        assert_relative_eq!(two_sample_ks_distance(&a, &b), 1.0);
    }

    #[test]
    fn ks_distance_identical_samples() {
        let a = vec![0.3, 1.2, 5.0, -2.0];
        assert_relative_eq!(two_sample_ks_distance(&a, &a), 0.0);
    }

    #[test]
    fn dual_convolver_matches_direct() {
        let ka = [1.0, 0.5, 0.25];
        let kb = [1.0, 0.25, 0.0625];
        let sig: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let sig2: Vec<f64> = sig.iter().map(|v| v * v).collect();
        let conv = DualKernelConvolver::new(&ka, &kb, sig.len());
        let (a, b) = conv.convolve(&sig, &sig2, 2, 10);
        for (m, (&av, &bv)) in a.iter().zip(&b).enumerate() {
            let mm = m + 2;
            let mut da = 0.0;
            let mut db = 0.0;
            for (k, (&ca, &cb)) in ka.iter().zip(&kb).enumerate() {
                if mm >= k && mm - k < sig.len() {
                    da += ca * sig[mm - k];
                    db += cb * sig2[mm - k];
                }
            }
            assert_relative_eq!(av, da, epsilon = 1e-10);
            assert_relative_eq!(bv, db, epsilon = 1e-10);
        }
    }

    #[test]
    fn autocorrelation_fft_matches_direct() {
        let c: Vec<f64> = (0..20).map(|k| ((k + 1) as f64).powf(-0.7)).collect();
        let r = autocorrelation_fft(&c, 25);
        for k in 0..=25usize {
            let direct: f64 = (0..c.len().saturating_sub(k))
                .map(|j| c[j] * c[j + k])
                .sum();
            assert_relative_eq!(r[k], direct, epsilon = 1e-12);
        }
    }
}
