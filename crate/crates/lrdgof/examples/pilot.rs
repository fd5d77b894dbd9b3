use lrdgof::estimators::{EstimatorSpec, PsiKind};
use lrdgof::harness::*;
use lrdgof::numerics;
use lrdgof::process::{Innovation, ProcessConfig};
use std::time::Instant;

fn pc(beta: f64) -> ProcessConfig {
    ProcessConfig { beta, trunc_k: 1 << 16, innovation: Innovation::StandardGaussian, mu: 0.0, sigma: 1.0, seed: 0 }
}

fn main() {
    let t0 = Instant::now();

    // (1) true-distance estimate for eq(4) shape at n=2^13, beta=0.7
    let cfg = ExperimentConfig {
        process: pc(0.7), master_seed: 42, n_grid: vec![1 << 13], reps: 2000,
        estimators: vec![], statistics: vec![StatisticKind::KsKnown],
        grid_m: 64, sigma2_mode: Sigma2Mode::Exact, sigma2_budget: 1 << 17, sigma2_mc_reps: 500,
        checks: vec![CheckSpec::KsLimitShape { ks_bound: 0.1 }],
    };
    let res = run_experiment(&cfg, None).unwrap();
    println!("eq4 @2000 reps: {}", res.verdicts[0].measured);
    let stats: Vec<f64> = res.records.iter().filter_map(|r| r.ks_known.as_ref().map(|k| k.normalized)).collect();
    println!("stat median {:.4} vs ref median {:.4}", numerics::median(&stats), 0.2274682958866153 * 0.6744897501960817);
    println!("(1) took {:?}", t0.elapsed());

    // (2) center-point kurtosis precision at beta=0.85
    let cfg7 = ExperimentConfig {
        process: pc(0.85), master_seed: 2002, n_grid: vec![1 << 12, 1 << 14], reps: 1500,
        estimators: vec![EstimatorSpec::Mean],
        statistics: vec![StatisticKind::SqrtPoints],
        grid_m: 64, sigma2_mode: Sigma2Mode::Exact, sigma2_budget: 1 << 17, sigma2_mc_reps: 500,
        checks: vec![],
    };
    let res7 = run_experiment(&cfg7, None).unwrap();
    for &n in &cfg7.n_grid {
        for pt in 0..5usize {
            let v: Vec<f64> = res7.records.iter().filter(|r| r.n == n && r.error.is_none())
                .filter_map(|r| r.estimators[0].sqrt_points.as_ref().map(|p| p[pt])).collect();
            print!("n={n} pt{pt}: sk={:.3} ku={:.3}  ", numerics::skewness(&v), numerics::excess_kurtosis(&v));
        }
        println!();
    }
    println!("(2) took {:?}", t0.elapsed());

    // (3) beta=0.85 halving over 2^10..2^14 (module invariant), huber, 200 reps
    let cfg85 = ExperimentConfig {
        process: pc(0.85), master_seed: 2002, n_grid: vec![1 << 10, 1 << 14], reps: 200,
        estimators: vec![EstimatorSpec::Mean, EstimatorSpec::M(PsiKind::Huber { c: 1.345 })],
        statistics: vec![StatisticKind::KsEstimated],
        grid_m: 64, sigma2_mode: Sigma2Mode::Exact, sigma2_budget: 1 << 17, sigma2_mc_reps: 500,
        checks: vec![],
    };
    let res85 = run_experiment(&cfg85, None).unwrap();
    for (idx, est) in cfg85.estimators.iter().enumerate() {
        let meds: Vec<f64> = cfg85.n_grid.iter().map(|&n| {
            let v: Vec<f64> = res85.records.iter().filter(|r| r.n == n && r.error.is_none())
                .filter_map(|r| r.estimators[idx].ks.as_ref().map(|k| k.normalized_sigma_n1)).collect();
            numerics::median(&v)
        }).collect();
        println!("beta=0.85 [{est}] medians {:?} ratio {:.3}", meds, meds[1] / meds[0]);
    }
    println!("(3) took {:?}", t0.elapsed());

    // (4) final-scale beta=0.65 run, reps=200, seed 1001
    let cfg65 = ExperimentConfig {
        process: pc(0.65), master_seed: 1001, n_grid: vec![1 << 10, 1 << 12, 1 << 14], reps: 200,
        estimators: vec![EstimatorSpec::Mean, EstimatorSpec::M(PsiKind::Sign)],
        statistics: vec![StatisticKind::KsKnown, StatisticKind::KsEstimated, StatisticKind::Cvm,
                         StatisticKind::Profile, StatisticKind::ReductionP2],
        grid_m: 64, sigma2_mode: Sigma2Mode::Exact, sigma2_budget: 1 << 17, sigma2_mc_reps: 500,
        checks: vec![
            CheckSpec::Negligibility { estimator: EstimatorSpec::Mean, halving: 0.5 },
            CheckSpec::Negligibility { estimator: EstimatorSpec::M(PsiKind::Sign), halving: 0.5 },
            CheckSpec::ProfileProportionality { estimator: EstimatorSpec::Mean, min_r2: 0.9, min_slope_corr: 0.9 },
            CheckSpec::MBranch { estimator: EstimatorSpec::M(PsiKind::Sign), rank: lrdgof::scalings::SecondOrderRank::RankGt2, t_bound: 3.0 },
            CheckSpec::ReductionRate { p: 2, max_slope: -0.05 },
            CheckSpec::CvmProxy { estimator: EstimatorSpec::Mean, min_corr: 0.9 },
        ],
    };
    let res65 = run_experiment(&cfg65, None).unwrap();
    for v in &res65.verdicts {
        println!("{} [{}] pass={} measured={}", v.name, v.estimator.clone().unwrap_or_default(), v.pass, v.measured);
    }
    // negligibility gap example: median ks_est_s1 < 0.5 * median ks_known at n=2^14
    let ks_known_med = {
        let v: Vec<f64> = res65.records.iter().filter(|r| r.n == 1 << 14)
            .filter_map(|r| r.ks_known.as_ref().map(|k| k.normalized)).collect();
        numerics::median(&v)
    };
    let ks_est_med = {
        let v: Vec<f64> = res65.records.iter().filter(|r| r.n == 1 << 14)
            .filter_map(|r| r.estimators[0].ks.as_ref().map(|k| k.normalized_sigma_n1)).collect();
        numerics::median(&v)
    };
    println!("negligibility gap: est {ks_est_med:.4} vs known {ks_known_med:.4} -> {}", ks_est_med < 0.5 * ks_known_med);
    println!("total {:?}", t0.elapsed());
}
