//! Replication engine and statistical verdicts.
//!
//! An experiment runs `reps` independent paths at every size in `n_grid`,
//! computes the enabled statistics and same-path limit proxies on each
//! path, and then evaluates named distributional checks against their
//! configured thresholds. Everything is a pure function of the config:
//! replication seeds derive from (master_seed, n, rep), results are
//! collected in replication order, and no check consumes randomness
//! outside the seeded streams.

use crate::empirical::reduction_residual_sorted;
use crate::error::{Error, Result};
use crate::estimators::{lambda_pair, EstimatorSpec};
use crate::gof::{
    cvm_estimated_sorted, cvm_limit_constant, ks_estimated_sorted, ks_known, GofResult,
    Normalization,
};
use crate::multilinear::{self, compute_sums};
use crate::numerics;
use crate::process::{
    derive_replication_seed, marginal_model, MarginalModel, PathGenerator,
};
use crate::scalings::{second_order_rank, Regime, ScalingSet, SecondOrderRank};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Quantile levels of the five fixed evaluation points used by the
/// sqrt(n)-regime checks; the middle one sits at x = mu.
pub const SQRT_POINT_QUANTILES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Which per-replication statistics to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    KsKnown,
    KsEstimated,
    Cvm,
    Profile,
    ReductionP1,
    ReductionP2,
    SqrtPoints,
}

/// How sigma_{n,2} is obtained for the normalizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sigma2Mode {
    #[default]
    Exact,
    MonteCarlo,
    Auto,
}

fn default_grid_m() -> usize {
    64
}
fn default_sigma2_budget() -> usize {
    1 << 17
}
fn default_sigma2_mc_reps() -> usize {
    500
}
fn default_halving() -> f64 {
    0.5
}
fn default_min_r2() -> f64 {
    0.9
}
fn default_min_corr() -> f64 {
    0.9
}
fn default_t_bound() -> f64 {
    3.0
}
fn default_skew_bound() -> f64 {
    0.35
}
fn default_kurt_bound() -> f64 {
    0.7
}
fn default_ks_bound() -> f64 {
    0.1
}
fn default_max_slope() -> f64 {
    -0.05
}
fn default_min_sigma_psi_se() -> f64 {
    5.0
}
fn default_min_inflation_se() -> f64 {
    3.0
}
fn default_moment_tol() -> f64 {
    0.15
}
fn default_p() -> usize {
    2
}

/// A named check with its thresholds. Thresholds live in the config, not
/// in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CheckSpec {
    /// Medians of sup|gamma-hat| (sigma_{n,1}^{-1} n scale) strictly
    /// decrease across n_grid and end below `halving` times the start.
    Negligibility {
        estimator: EstimatorSpec,
        #[serde(default = "default_halving")]
        halving: f64,
    },
    /// No-intercept regression of the a_n^{-1} gamma-hat trace on
    /// f^(1)((.-mu)/sigma): mean R^2 and slope-vs-v_n correlation.
    ProfileProportionality {
        estimator: EstimatorSpec,
        #[serde(default = "default_min_r2")]
        min_r2: f64,
        #[serde(default = "default_min_corr")]
        min_slope_corr: f64,
    },
    /// Two-component profile regression: the f(.) coefficient must be
    /// consistent with zero for rank > 2, significant for rank 2.
    MBranch {
        estimator: EstimatorSpec,
        rank: SecondOrderRank,
        #[serde(default = "default_t_bound")]
        t_bound: f64,
    },
    /// sqrt(n)-regime screening: moment bounds at the five fixed points at
    /// the largest n, plus distributional stability across two n values.
    GaussianRegime {
        estimator: EstimatorSpec,
        #[serde(default = "default_skew_bound")]
        skew_bound: f64,
        #[serde(default = "default_kurt_bound")]
        kurt_bound: f64,
        #[serde(default = "default_ks_bound")]
        ks_bound: f64,
    },
    /// Positive sigma_psi^2 and variance inflation at x = mu of the
    /// M-estimated process against the mean-estimated one.
    MVarianceInflation {
        estimator: EstimatorSpec,
        #[serde(default = "default_min_sigma_psi_se")]
        min_sigma_psi_se: f64,
        #[serde(default = "default_min_inflation_se")]
        min_inflation_se: f64,
    },
    /// Log-log slope of the median scaled reduction residual.
    ReductionRate {
        #[serde(default = "default_p")]
        p: usize,
        #[serde(default = "default_max_slope")]
        max_slope: f64,
    },
    /// Medians of |sigma_{n,1}^{-1} n (M_n - mean)| strictly decrease
    /// across n_grid.
    MEquivalence { estimator: EstimatorSpec },
    /// Normalized known-parameter KS statistics match |Z| sup f in
    /// two-sample KS distance; z1 matches a standard normal sample.
    KsLimitShape {
        #[serde(default = "default_ks_bound")]
        ks_bound: f64,
    },
    /// Correlation between normalized CvM statistics and the same-path
    /// limit expression (1/sigma) v_n^2 int (f^(1))^2 f.
    CvmProxy {
        estimator: EstimatorSpec,
        #[serde(default = "default_min_corr")]
        min_corr: f64,
    },
    /// Mean and variance of z1 across replications at the largest n.
    Z1Moments {
        #[serde(default = "default_moment_tol")]
        mean_tol: f64,
        #[serde(default = "default_moment_tol")]
        var_tol: f64,
    },
}

impl CheckSpec {
    fn estimator(&self) -> Option<EstimatorSpec> {
        match self {
            CheckSpec::Negligibility { estimator, .. }
            | CheckSpec::ProfileProportionality { estimator, .. }
            | CheckSpec::MBranch { estimator, .. }
            | CheckSpec::GaussianRegime { estimator, .. }
            | CheckSpec::MVarianceInflation { estimator, .. }
            | CheckSpec::MEquivalence { estimator }
            | CheckSpec::CvmProxy { estimator, .. } => Some(*estimator),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            CheckSpec::Negligibility { .. } => "negligibility",
            CheckSpec::ProfileProportionality { .. } => "profile_proportionality",
            CheckSpec::MBranch { .. } => "m_branch",
            CheckSpec::GaussianRegime { .. } => "gaussian_regime",
            CheckSpec::MVarianceInflation { .. } => "m_variance_inflation",
            CheckSpec::ReductionRate { .. } => "reduction_rate",
            CheckSpec::MEquivalence { .. } => "m_equivalence",
            CheckSpec::KsLimitShape { .. } => "ks_limit_shape",
            CheckSpec::CvmProxy { .. } => "cvm_proxy",
            CheckSpec::Z1Moments { .. } => "z1_moments",
        }
    }

    fn required_statistics(&self) -> Vec<StatisticKind> {
        match self {
            CheckSpec::Negligibility { .. } => vec![StatisticKind::KsEstimated],
            CheckSpec::ProfileProportionality { .. } => vec![StatisticKind::Profile],
            CheckSpec::MBranch { .. } => vec![StatisticKind::Profile],
            CheckSpec::GaussianRegime { .. } => {
                vec![StatisticKind::SqrtPoints, StatisticKind::KsEstimated]
            }
            CheckSpec::MVarianceInflation { .. } => vec![StatisticKind::SqrtPoints],
            CheckSpec::ReductionRate { p, .. } => vec![if *p == 1 {
                StatisticKind::ReductionP1
            } else {
                StatisticKind::ReductionP2
            }],
            CheckSpec::MEquivalence { .. } => vec![StatisticKind::KsEstimated],
            CheckSpec::KsLimitShape { .. } => vec![StatisticKind::KsKnown],
            CheckSpec::CvmProxy { .. } => vec![StatisticKind::Cvm],
            CheckSpec::Z1Moments { .. } => vec![],
        }
    }
}

/// Full experiment description; every emitted byte is a pure function of
/// this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub process: crate::process::ProcessConfig,
    pub master_seed: u64,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub statistics: Vec<StatisticKind>,
    #[serde(default = "default_grid_m")]
    pub grid_m: usize,
    #[serde(default)]
    pub sigma2_mode: Sigma2Mode,
    #[serde(default = "default_sigma2_budget")]
    pub sigma2_budget: usize,
    #[serde(default = "default_sigma2_mc_reps")]
    pub sigma2_mc_reps: usize,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

pub const MIN_REPS: usize = 50;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.reps < MIN_REPS {
            return Err(Error::parameter(
                "reps",
                format!("must be at least {MIN_REPS}; got {}", self.reps),
            ));
        }
        if self.n_grid.is_empty() {
            return Err(Error::parameter("n_grid", "must be nonempty"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::parameter("n_grid", "must be strictly ascending"));
        }
        if self.n_grid[0] < 8 {
            return Err(Error::parameter("n_grid", "sizes below 8 are not useful"));
        }
        if self.estimators.is_empty()
            && self
                .statistics
                .iter()
                .any(|s| !matches!(s, StatisticKind::KsKnown | StatisticKind::ReductionP1 | StatisticKind::ReductionP2))
        {
            return Err(Error::parameter(
                "estimators",
                "estimated statistics enabled but no estimators given",
            ));
        }
        if self.statistics.is_empty() {
            return Err(Error::parameter(
                "statistics",
                "no statistics enabled; the experiment would produce empty records",
            ));
        }
        if self.grid_m < 2 {
            return Err(Error::parameter("grid_m", "must be at least 2"));
        }
        for check in &self.checks {
            if let Some(est) = check.estimator() {
                if !self.estimators.contains(&est) {
                    return Err(Error::parameter(
                        "checks",
                        format!(
                            "check `{}` references estimator `{est}` which is not enabled",
                            check.name()
                        ),
                    ));
                }
            }
            for stat in check.required_statistics() {
                if !self.statistics.contains(&stat) {
                    return Err(Error::parameter(
                        "checks",
                        format!("check `{}` requires statistic {stat:?}", check.name()),
                    ));
                }
            }
            match check {
                CheckSpec::Negligibility { .. } | CheckSpec::ReductionRate { .. }
                    if self.n_grid.len() < 3 =>
                {
                    return Err(Error::parameter(
                        "n_grid",
                        format!("check `{}` needs at least 3 sizes", check.name()),
                    ));
                }
                CheckSpec::MEquivalence { estimator } => {
                    if self.n_grid.len() < 2 {
                        return Err(Error::parameter(
                            "n_grid",
                            "m_equivalence check needs at least 2 sizes",
                        ));
                    }
                    if matches!(estimator, EstimatorSpec::Mean) {
                        return Err(Error::parameter(
                            "checks",
                            "m_equivalence needs an M-estimator",
                        ));
                    }
                }
                CheckSpec::GaussianRegime { .. } => {
                    if Regime::of(self.process.beta) != Regime::BetaAbove34 {
                        return Err(Error::RegimeMismatch(format!(
                            "gaussian_regime check needs beta > 3/4; got {}",
                            self.process.beta
                        )));
                    }
                    if self.n_grid.len() < 2 {
                        return Err(Error::parameter(
                            "n_grid",
                            "gaussian_regime check needs at least 2 sizes",
                        ));
                    }
                }
                CheckSpec::MVarianceInflation { estimator, .. } => {
                    if Regime::of(self.process.beta) != Regime::BetaAbove34 {
                        return Err(Error::RegimeMismatch(format!(
                            "m_variance_inflation check needs beta > 3/4; got {}",
                            self.process.beta
                        )));
                    }
                    if !self.estimators.contains(&EstimatorSpec::Mean) {
                        return Err(Error::parameter(
                            "estimators",
                            "m_variance_inflation compares against the mean estimator",
                        ));
                    }
                    if matches!(estimator, EstimatorSpec::Mean) {
                        return Err(Error::parameter(
                            "checks",
                            "m_variance_inflation needs an M-estimator",
                        ));
                    }
                }
                CheckSpec::MBranch { estimator, .. } => {
                    if matches!(estimator, EstimatorSpec::Mean) {
                        return Err(Error::parameter(
                            "checks",
                            "m_branch needs an M-estimator",
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn has_statistic(&self, s: StatisticKind) -> bool {
        self.statistics.contains(&s)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-estimator results on one path.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorRepRecord {
    pub spec: EstimatorSpec,
    pub theta_hat: f64,
    pub ks: Option<GofResult>,
    pub cvm: Option<GofResult>,
    pub profile: Option<ProfileFit>,
    /// a_n^{-1} gamma-hat on the quantile grid.
    pub trace: Option<Vec<f64>>,
    /// sqrt(n)(H_n - H(.; theta)) at the five fixed quantile points.
    pub sqrt_points: Option<Vec<f64>>,
    /// a_n^{-1} sigma_{n,1}^{-1} n (mean - M), M-estimators only.
    pub v1: Option<f64>,
    /// |sigma_{n,1}^{-1} n (M - mean)|, M-estimators only.
    pub m_equiv: Option<f64>,
}

/// Single- and two-regressor profile fits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileFit {
    pub slope: f64,
    pub r2: f64,
    pub coef_fprime: f64,
    pub coef_f: f64,
}

/// Everything recorded for one replication at one n.
#[derive(Debug, Clone, Serialize)]
pub struct RepRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub y1: f64,
    pub y2: f64,
    /// z1 = sigma_{n,1}^{-1} Y_{n,1}.
    pub z1: f64,
    /// Same-path combination v_n = sigma_{n,2}^{-1} Y_{n,2} - c_n z1^2 / 2.
    pub v_n: f64,
    pub ks_known: Option<GofResult>,
    pub reduction_p1: Option<f64>,
    pub reduction_p2: Option<f64>,
    pub estimators: Vec<EstimatorRepRecord>,
    /// Populated instead of statistics when this replication failed.
    pub error: Option<String>,
}

/// One check outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub estimator: Option<String>,
    pub pass: bool,
    pub measured: serde_json::Value,
    pub threshold: serde_json::Value,
    pub details: String,
}

/// Normalizations actually used at each grid size.
#[derive(Debug, Clone, Serialize)]
pub struct SizeScalings {
    pub n: usize,
    pub scalings: ScalingSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    pub scalings: Vec<SizeScalings>,
    pub records: Vec<RepRecord>,
    pub verdicts: Vec<Verdict>,
    pub overall_pass: bool,
}

struct SizeContext {
    n: usize,
    scalings: ScalingSet,
    marginal: MarginalModel,
    generator: PathGenerator,
    grid_points: Vec<f64>,
    reg_fprime: Vec<f64>,
    reg_f: Vec<f64>,
    sqrt_xs: Vec<f64>,
}

impl SizeContext {
    fn build(config: &ExperimentConfig, n: usize) -> Result<SizeContext> {
        let mut pc = config.process;
        pc.seed = config.master_seed;
        let generator = PathGenerator::new(&pc, n)?;
        let marginal = marginal_model(generator.coeffs(), pc.mu, pc.sigma);
        let coeffs = generator.coeffs();
        let s1_sq = multilinear::exact_sigma1_sq(n, coeffs)?;
        let mc_sigma2 = |pc: &crate::process::ProcessConfig| -> Result<f64> {
            let mut mc_cfg = *pc;
            mc_cfg.seed = derive_replication_seed(config.master_seed, n, usize::MAX - 1);
            Ok(multilinear::monte_carlo_sigma2(&mc_cfg, n, config.sigma2_mc_reps)?.value)
        };
        let s2_sq = match config.sigma2_mode {
            Sigma2Mode::Exact => {
                multilinear::exact_sigma2_sq_with_budget(n, coeffs, config.sigma2_budget)?
            }
            Sigma2Mode::MonteCarlo => mc_sigma2(&pc)?,
            Sigma2Mode::Auto => {
                match multilinear::exact_sigma2_sq_with_budget(n, coeffs, config.sigma2_budget)
                {
                    Ok(v) => v,
                    Err(Error::BudgetExceeded { .. }) => mc_sigma2(&pc)?,
                    Err(e) => return Err(e),
                }
            }
        };
        let scalings = ScalingSet::from_variances(pc.beta, n, s1_sq, s2_sq)?;
        let grid_points: Vec<f64> = (1..=config.grid_m)
            .map(|g| marginal.h_quantile(g as f64 / (config.grid_m + 1) as f64, pc.mu))
            .collect();
        let (reg_fprime, reg_f) = grid_points
            .iter()
            .map(|&x| {
                let z = marginal.z(x);
                (marginal.pdf_d1(z), marginal.pdf(z))
            })
            .unzip();
        let sqrt_xs = SQRT_POINT_QUANTILES
            .iter()
            .map(|&q| marginal.h_quantile(q, pc.mu))
            .collect();
        Ok(SizeContext {
            n,
            scalings,
            marginal,
            generator,
            grid_points,
            reg_fprime,
            reg_f,
            sqrt_xs,
        })
    }
}

fn failed_record(n: usize, rep: usize, seed: u64, message: String) -> RepRecord {
    RepRecord {
        n,
        rep,
        seed,
        y1: f64::NAN,
        y2: f64::NAN,
        z1: f64::NAN,
        v_n: f64::NAN,
        ks_known: None,
        reduction_p1: None,
        reduction_p2: None,
        estimators: Vec::new(),
        error: Some(message),
    }
}

fn run_rep(config: &ExperimentConfig, ctx: &SizeContext, rep: usize) -> RepRecord {
    let n = ctx.n;
    let seed = derive_replication_seed(config.master_seed, n, rep);
    match run_rep_inner(config, ctx, rep, seed) {
        Ok(r) => r,
        Err(e) => failed_record(n, rep, seed, e.to_string()),
    }
}

fn run_rep_inner(
    config: &ExperimentConfig,
    ctx: &SizeContext,
    rep: usize,
    seed: u64,
) -> Result<RepRecord> {
    let n = ctx.n;
    let nf = n as f64;
    let s = &ctx.scalings;
    let path = ctx.generator.generate(seed);
    let sums = compute_sums(&path, ctx.generator.coeffs())?;
    let z1 = sums.y1 / s.sigma_n1;
    let v_n = sums.y2 / s.sigma_n2 - 0.5 * s.c_n * z1 * z1;

    let mut sx = path.x.clone();
    sx.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // y is a positive affine image of x when sigma > 0, so reuse the sort
    let sy: Vec<f64> = if ctx.marginal.sigma > 0.0 {
        sx.iter()
            .map(|&v| ctx.marginal.sigma * v + ctx.marginal.mu)
            .collect()
    } else {
        let mut v = path.y.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };

    let ks_known_res = if config.has_statistic(StatisticKind::KsKnown) {
        Some(ks_known(&path, &ctx.marginal, s)?)
    } else {
        None
    };
    let reduction_p1 = if config.has_statistic(StatisticKind::ReductionP1) {
        Some(reduction_residual_sorted(&sx, &ctx.marginal, &sums, s, 1)?.sup_scaled)
    } else {
        None
    };
    let reduction_p2 = if config.has_statistic(StatisticKind::ReductionP2) {
        Some(reduction_residual_sorted(&sx, &ctx.marginal, &sums, s, 2)?.sup_scaled)
    } else {
        None
    };

    let mean_y = numerics::mean(&path.y);
    let count_le = |t: f64| sy.partition_point(|&v| v <= t) as f64;

    let mut est_records = Vec::with_capacity(config.estimators.len());
    for &spec in &config.estimators {
        let theta = match spec {
            EstimatorSpec::Mean => mean_y,
            _ => spec.estimate(&path.y)?,
        };
        let ks = if config.has_statistic(StatisticKind::KsEstimated) {
            let norm = match s.regime {
                Regime::BetaBelow34 => Normalization::SigmaN2N,
                Regime::BetaAbove34 => Normalization::SqrtN,
            };
            Some(ks_estimated_sorted(&sy, &ctx.marginal, spec, theta, s, norm)?)
        } else {
            None
        };
        let cvm = if config.has_statistic(StatisticKind::Cvm) {
            Some(cvm_estimated_sorted(&sy, &ctx.marginal, spec, theta, s)?)
        } else {
            None
        };
        let (profile, trace) = if config.has_statistic(StatisticKind::Profile) {
            let trace: Vec<f64> = ctx
                .grid_points
                .iter()
                .map(|&x| (count_le(x) / nf - ctx.marginal.h_cdf(x, theta)) * nf / s.sigma_n2)
                .collect();
            let (slope, r2) = numerics::fit_through_origin(&ctx.reg_fprime, &trace);
            let (c1, c2) = numerics::fit_two_regressors(&ctx.reg_fprime, &ctx.reg_f, &trace);
            (
                Some(ProfileFit {
                    slope,
                    r2,
                    coef_fprime: c1,
                    coef_f: c2,
                }),
                Some(trace),
            )
        } else {
            (None, None)
        };
        let sqrt_points = if config.has_statistic(StatisticKind::SqrtPoints) {
            Some(
                ctx.sqrt_xs
                    .iter()
                    .map(|&x| nf.sqrt() * (count_le(x) / nf - ctx.marginal.h_cdf(x, theta)))
                    .collect(),
            )
        } else {
            None
        };
        let (v1, m_equiv) = match spec {
            EstimatorSpec::Mean => (None, None),
            EstimatorSpec::M(_) => {
                let scaled = nf / s.sigma_n1 * (mean_y - theta);
                (Some(scaled / s.a_n), Some(scaled.abs()))
            }
        };
        est_records.push(EstimatorRepRecord {
            spec,
            theta_hat: theta,
            ks,
            cvm,
            profile,
            trace,
            sqrt_points,
            v1,
            m_equiv,
        });
    }

    Ok(RepRecord {
        n,
        rep,
        seed,
        y1: sums.y1,
        y2: sums.y2,
        z1,
        v_n,
        ks_known: ks_known_res,
        reduction_p1,
        reduction_p2,
        estimators: est_records,
        error: None,
    })
}

/// Runs the experiment. `jobs` bounds the worker threads (`None` uses the
/// global pool); outputs are independent of the thread count.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult> {
    config.validate()?;
    match jobs {
        Some(j) if j > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment_inner(config))
        }
        _ => run_experiment_inner(config),
    }
}

fn run_experiment_inner(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut records = Vec::with_capacity(config.n_grid.len() * config.reps);
    let mut size_scalings = Vec::new();
    for &n in &config.n_grid {
        let ctx = SizeContext::build(config, n)?;
        size_scalings.push(SizeScalings {
            n,
            scalings: ctx.scalings,
        });
        let mut batch: Vec<RepRecord> = (0..config.reps)
            .into_par_iter()
            .map(|rep| run_rep(config, &ctx, rep))
            .collect();
        records.append(&mut batch);
    }
    let verdicts = evaluate_checks(config, &records)?;
    let overall_pass = verdicts.iter().all(|v| v.pass);
    Ok(ExperimentResult {
        config: config.clone(),
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scalings: size_scalings,
        records,
        verdicts,
        overall_pass,
    })
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

fn est_index(config: &ExperimentConfig, spec: EstimatorSpec) -> usize {
    config
        .estimators
        .iter()
        .position(|e| *e == spec)
        .expect("validated estimator")
}

fn ok_records<'a>(records: &'a [RepRecord], n: usize) -> Vec<&'a RepRecord> {
    records
        .iter()
        .filter(|r| r.n == n && r.error.is_none())
        .collect()
}

fn collect_est(
    records: &[RepRecord],
    n: usize,
    idx: usize,
    f: impl Fn(&EstimatorRepRecord) -> Option<f64>,
) -> Vec<f64> {
    ok_records(records, n)
        .into_iter()
        .filter_map(|r| r.estimators.get(idx).and_then(&f))
        .collect()
}

fn config_marginal(config: &ExperimentConfig) -> Result<MarginalModel> {
    let coeffs =
        crate::process::gen_coefficients(config.process.beta, config.process.trunc_k)?;
    Ok(marginal_model(&coeffs, config.process.mu, config.process.sigma))
}

fn evaluate_checks(config: &ExperimentConfig, records: &[RepRecord]) -> Result<Vec<Verdict>> {
    let n_last = *config.n_grid.last().unwrap();
    let mut verdicts = Vec::new();
    for check in &config.checks {
        let v = match check {
            CheckSpec::Negligibility { estimator, halving } => {
                let idx = est_index(config, *estimator);
                let medians: Vec<f64> = config
                    .n_grid
                    .iter()
                    .map(|&n| {
                        numerics::median(&collect_est(records, n, idx, |e| {
                            e.ks.as_ref().map(|k| k.normalized_sigma_n1)
                        }))
                    })
                    .collect();
                let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
                let halved = *medians.last().unwrap() < halving * medians[0];
                Verdict {
                    name: check.name().into(),
                    estimator: Some(estimator.to_string()),
                    pass: decreasing && halved,
                    measured: serde_json::json!({
                        "medians": medians,
                        "final_over_initial": medians.last().unwrap() / medians[0],
                    }),
                    threshold: serde_json::json!({
                        "strictly_decreasing": true, "halving": halving
                    }),
                    details: "median sup|gamma_hat| at the sigma_{n,1}^{-1} n scale across n_grid"
                        .into(),
                }
            }
            CheckSpec::ProfileProportionality {
                estimator,
                min_r2,
                min_slope_corr,
            } => {
                let idx = est_index(config, *estimator);
                let mut r2s = Vec::new();
                let mut slopes = Vec::new();
                let mut vns = Vec::new();
                for r in ok_records(records, n_last) {
                    if let Some(p) = r.estimators.get(idx).and_then(|e| e.profile) {
                        r2s.push(p.r2);
                        slopes.push(p.slope);
                        vns.push(r.v_n);
                    }
                }
                let mean_r2 = numerics::mean(&r2s);
                let corr = numerics::correlation(&slopes, &vns);
                Verdict {
                    name: check.name().into(),
                    estimator: Some(estimator.to_string()),
                    pass: mean_r2 >= *min_r2 && corr >= *min_slope_corr,
                    measured: serde_json::json!({"mean_r2": mean_r2, "slope_vn_corr": corr}),
                    threshold: serde_json::json!({
                        "min_r2": min_r2, "min_slope_corr": min_slope_corr
                    }),
                    details: format!("profile regression at n = {n_last}"),
                }
            }
            CheckSpec::MBranch {
                estimator,
                rank,
                t_bound,
            } => {
                let psi = match estimator {
                    EstimatorSpec::M(psi) => *psi,
                    EstimatorSpec::Mean => unreachable!("validated"),
                };
                let lambdas = lambda_pair(psi, &config_marginal(config)?)?;
                let actual = second_order_rank(config.process.beta, lambdas.lambda2, 1e-8)?;
                if actual != *rank {
                    return Err(Error::Contract(format!(
                        "m_branch claims {rank:?} but lambda_2 = {} classifies as {actual:?}",
                        lambdas.lambda2
                    )));
                }
                let idx = est_index(config, *estimator);
                let coefs = collect_est(records, n_last, idx, |e| e.profile.map(|p| p.coef_f));
                let mean_c = numerics::mean(&coefs);
                let se = (numerics::variance(&coefs) / coefs.len() as f64).sqrt();
                let t = mean_c / se;
                let pass = match rank {
                    SecondOrderRank::RankGt2 => t.abs() < *t_bound,
                    SecondOrderRank::Rank2 => t.abs() >= *t_bound,
                };
                Verdict {
                    name: check.name().into(),
                    estimator: Some(estimator.to_string()),
                    pass,
                    measured: serde_json::json!({
                        "f_coefficient_mean": mean_c,
                        "f_coefficient_t": t,
                        "lambda1": lambdas.lambda1,
                        "lambda2": lambdas.lambda2,
                    }),
                    threshold: serde_json::json!({"rank": rank, "t_bound": t_bound}),
                    details: format!(
                        "pooled f-component of the two-component profile fit at n = {n_last}"
                    ),
                }
            }
            CheckSpec::GaussianRegime {
                estimator,
                skew_bound,
                kurt_bound,
                ks_bound,
            } => gaussian_regime_verdict(
                config, records, check, *estimator, *skew_bound, *kurt_bound, *ks_bound,
            ),
            CheckSpec::MVarianceInflation {
                estimator,
                min_sigma_psi_se,
                min_inflation_se,
            } => m_inflation_verdict(
                config,
                records,
                check,
                *estimator,
                *min_sigma_psi_se,
                *min_inflation_se,
            ),
            CheckSpec::ReductionRate { p, max_slope } => {
                let medians: Vec<f64> = config
                    .n_grid
                    .iter()
                    .map(|&n| {
                        let vals: Vec<f64> = ok_records(records, n)
                            .into_iter()
                            .filter_map(|r| {
                                if *p == 1 {
                                    r.reduction_p1
                                } else {
                                    r.reduction_p2
                                }
                            })
                            .collect();
                        numerics::median(&vals)
                    })
                    .collect();
                let lns: Vec<f64> = config.n_grid.iter().map(|&n| (n as f64).ln()).collect();
                let lms: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
                let (_, slope) = numerics::fit_line(&lns, &lms);
                Verdict {
                    name: check.name().into(),
                    estimator: None,
                    pass: slope <= *max_slope,
                    measured: serde_json::json!({"medians": medians, "log_slope": slope}),
                    threshold: serde_json::json!({"max_slope": max_slope, "p": p}),
                    details: "log median scaled sup|S_{n,p}| regressed on log n".into(),
                }
            }
            CheckSpec::MEquivalence { estimator } => {
                let idx = est_index(config, *estimator);
                let medians: Vec<f64> = config
                    .n_grid
                    .iter()
                    .map(|&n| numerics::median(&collect_est(records, n, idx, |e| e.m_equiv)))
                    .collect();
                let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
                Verdict {
                    name: check.name().into(),
                    estimator: Some(estimator.to_string()),
                    pass: decreasing,
                    measured: serde_json::json!({"medians": medians}),
                    threshold: serde_json::json!({"strictly_decreasing": true}),
                    details: "median |sigma_{n,1}^{-1} n (M - mean)| across n_grid".into(),
                }
            }
            CheckSpec::KsLimitShape { ks_bound } => {
                let recs = ok_records(records, n_last);
                let stats: Vec<f64> = recs
                    .iter()
                    .filter_map(|r| r.ks_known.as_ref().map(|k| k.normalized))
                    .collect();
                let z1s: Vec<f64> = recs.iter().map(|r| r.z1).collect();
                let sup_f = config_marginal(config)?.sup_pdf();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_replication_seed(
                    config.master_seed,
                    n_last,
                    usize::MAX,
                ));
                let mut ref_ks = Vec::with_capacity(stats.len());
                let mut ref_z = Vec::with_capacity(stats.len());
                for _ in 0..stats.len() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    ref_ks.push(z.abs() * sup_f);
                    ref_z.push(StandardNormal.sample(&mut rng));
                }
                let d_stat = numerics::two_sample_ks_distance(&stats, &ref_ks);
                let d_z1 = numerics::two_sample_ks_distance(&z1s, &ref_z);
                Verdict {
                    name: check.name().into(),
                    estimator: None,
                    pass: d_stat < *ks_bound && d_z1 < *ks_bound,
                    measured: serde_json::json!({
                        "ks_distance_statistic": d_stat,
                        "ks_distance_z1": d_z1,
                        "sup_f": sup_f,
                    }),
                    threshold: serde_json::json!({"ks_bound": ks_bound}),
                    details: format!(
                        "normalized KS statistics vs |Z| sup f and z1 vs N(0,1) at n = {n_last}"
                    ),
                }
            }
            CheckSpec::CvmProxy {
                estimator,
                min_corr,
            } => {
                let idx = est_index(config, *estimator);
                let limit = cvm_limit_constant(&config_marginal(config)?)?;
                let mut cvms = Vec::new();
                let mut proxies = Vec::new();
                for r in ok_records(records, n_last) {
                    if let Some(c) = r.estimators.get(idx).and_then(|e| e.cvm.as_ref()) {
                        cvms.push(c.normalized);
                        proxies.push(limit.sigma_factor * r.v_n * r.v_n * limit.integral);
                    }
                }
                let corr = numerics::correlation(&cvms, &proxies);
                Verdict {
                    name: check.name().into(),
                    estimator: Some(estimator.to_string()),
                    pass: corr >= *min_corr,
                    measured: serde_json::json!({
                        "corr": corr, "limit_integral": limit.integral
                    }),
                    threshold: serde_json::json!({"min_corr": min_corr}),
                    details: format!(
                        "normalized CvM vs (1/sigma) v_n^2 int (f')^2 f at n = {n_last}"
                    ),
                }
            }
            CheckSpec::Z1Moments { mean_tol, var_tol } => {
                let z1s: Vec<f64> = ok_records(records, n_last)
                    .into_iter()
                    .map(|r| r.z1)
                    .collect();
                let mean = numerics::mean(&z1s);
                let var = numerics::variance(&z1s);
                Verdict {
                    name: check.name().into(),
                    estimator: None,
                    pass: mean.abs() <= *mean_tol && (var - 1.0).abs() <= *var_tol,
                    measured: serde_json::json!({"mean": mean, "variance": var}),
                    threshold: serde_json::json!({"mean_tol": mean_tol, "var_tol": var_tol}),
                    details: format!("z1 moments at n = {n_last}"),
                }
            }
        };
        verdicts.push(v);
    }
    Ok(verdicts)
}

fn gaussian_regime_verdict(
    config: &ExperimentConfig,
    records: &[RepRecord],
    check: &CheckSpec,
    estimator: EstimatorSpec,
    skew_bound: f64,
    kurt_bound: f64,
    ks_bound: f64,
) -> Verdict {
    let idx = est_index(config, estimator);
    let n_last = *config.n_grid.last().unwrap();
    let n_prev = config.n_grid[config.n_grid.len() - 2];
    let point_samples = |n: usize, point: usize| -> Vec<f64> {
        collect_est(records, n, idx, |e| {
            e.sqrt_points.as_ref().map(|p| p[point])
        })
    };
    let mut skews = Vec::new();
    let mut kurts = Vec::new();
    let mut ks_dists = Vec::new();
    for point in 0..SQRT_POINT_QUANTILES.len() {
        let last = point_samples(n_last, point);
        let prev = point_samples(n_prev, point);
        skews.push(numerics::skewness(&last));
        kurts.push(numerics::excess_kurtosis(&last));
        ks_dists.push(numerics::two_sample_ks_distance(&last, &prev));
    }
    // stability of the sqrt(n)-normalized KS statistic across sizes
    let stat_last = collect_est(records, n_last, idx, |e| {
        e.ks.as_ref().map(|k| k.normalized)
    });
    let stat_prev = collect_est(records, n_prev, idx, |e| {
        e.ks.as_ref().map(|k| k.normalized)
    });
    let stat_ks = numerics::two_sample_ks_distance(&stat_last, &stat_prev);

    let moments_ok = skews.iter().all(|s| s.abs() < skew_bound)
        && kurts.iter().all(|k| k.abs() < kurt_bound);
    let stable = ks_dists.iter().all(|d| *d < ks_bound) && stat_ks < ks_bound;
    Verdict {
        name: check.name().into(),
        estimator: Some(estimator.to_string()),
        pass: moments_ok && stable,
        measured: serde_json::json!({
            "skewness": skews,
            "excess_kurtosis": kurts,
            "pointwise_ks_distances": ks_dists,
            "statistic_ks_distance": stat_ks,
        }),
        threshold: serde_json::json!({
            "skew_bound": skew_bound, "kurt_bound": kurt_bound, "ks_bound": ks_bound
        }),
        details: format!(
            "sqrt(n)-scale marginals at {} points, n = {n_prev} vs {n_last}",
            SQRT_POINT_QUANTILES.len()
        ),
    }
}

fn m_inflation_verdict(
    config: &ExperimentConfig,
    records: &[RepRecord],
    check: &CheckSpec,
    estimator: EstimatorSpec,
    min_sigma_psi_se: f64,
    min_inflation_se: f64,
) -> Verdict {
    let n_last = *config.n_grid.last().unwrap();
    let m_idx = est_index(config, estimator);
    let mean_idx = est_index(config, EstimatorSpec::Mean);
    let recs = ok_records(records, n_last);
    let sqrt_n = (n_last as f64).sqrt();

    // sigma_psi^2 from the same replications: Var of sqrt(n)(M - mean)
    let diffs: Vec<f64> = recs
        .iter()
        .map(|r| sqrt_n * (r.estimators[m_idx].theta_hat - r.estimators[mean_idx].theta_hat))
        .collect();
    let sigma_psi_sq = numerics::variance(&diffs);
    let sigma_psi_se = numerics::variance_std_error(&diffs);

    // paired variance difference of the process values at x = mu
    let center = SQRT_POINT_QUANTILES.len() / 2;
    let a: Vec<f64> = recs
        .iter()
        .filter_map(|r| r.estimators[mean_idx].sqrt_points.as_ref().map(|p| p[center]))
        .collect();
    let b: Vec<f64> = recs
        .iter()
        .filter_map(|r| r.estimators[m_idx].sqrt_points.as_ref().map(|p| p[center]))
        .collect();
    let ma = numerics::mean(&a);
    let mb = numerics::mean(&b);
    let d: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (y - mb) * (y - mb) - (x - ma) * (x - ma))
        .collect();
    let d_mean = numerics::mean(&d);
    let d_se = (numerics::variance(&d) / d.len() as f64).sqrt();

    let pass =
        sigma_psi_sq > min_sigma_psi_se * sigma_psi_se && d_mean > min_inflation_se * d_se;
    Verdict {
        name: check.name().into(),
        estimator: Some(estimator.to_string()),
        pass,
        measured: serde_json::json!({
            "sigma_psi_sq": sigma_psi_sq,
            "sigma_psi_se": sigma_psi_se,
            "inflation_at_mu": d_mean,
            "inflation_se": d_se,
        }),
        threshold: serde_json::json!({
            "min_sigma_psi_se": min_sigma_psi_se,
            "min_inflation_se": min_inflation_se,
        }),
        details: format!(
            "Var sqrt(n)(M - mean) and paired variance difference at x = mu, n = {n_last}"
        ),
    }
}
