//! Result and plot-data emission: a wide per-replication CSV, a verdicts
//! JSON document, tidy median-vs-n tables and mean profile traces, plus
//! quantile summaries. CSV holds the bulk numbers, JSON the structured
//! summaries; floats are written with Rust's shortest round-trip
//! formatting so files re-read bit-exactly.

use crate::error::Result;
use crate::harness::{
    EstimatorRepRecord, ExperimentConfig, ExperimentResult, RepRecord, SQRT_POINT_QUANTILES,
};
use crate::numerics;
use serde::Serialize;
use std::io::Write;

fn sanitize(label: &str) -> String {
    label.replace(':', "_")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column labels of the per-estimator block.
const EST_COLUMNS: [&str; 12] = [
    "theta",
    "ks_raw",
    "ks_norm",
    "ks_norm_s1",
    "cvm_raw",
    "cvm_norm",
    "slope",
    "r2",
    "coef_fprime",
    "coef_f",
    "v1",
    "m_equiv",
];

fn est_values(e: &EstimatorRepRecord) -> Vec<Option<f64>> {
    vec![
        Some(e.theta_hat),
        e.ks.as_ref().map(|k| k.raw),
        e.ks.as_ref().map(|k| k.normalized),
        e.ks.as_ref().map(|k| k.normalized_sigma_n1),
        e.cvm.as_ref().map(|c| c.raw),
        e.cvm.as_ref().map(|c| c.normalized),
        e.profile.map(|p| p.slope),
        e.profile.map(|p| p.r2),
        e.profile.map(|p| p.coef_fprime),
        e.profile.map(|p| p.coef_f),
        e.v1,
        e.m_equiv,
    ]
}

/// One row per replication x n, estimator blocks named by their label.
pub fn write_results_csv(result: &ExperimentResult, w: &mut dyn Write) -> Result<()> {
    let mut header: Vec<String> = [
        "n",
        "rep",
        "seed",
        "y1",
        "y2",
        "z1",
        "v_n",
        "ks_known_raw",
        "ks_known_norm",
        "reduction_p1",
        "reduction_p2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for est in &result.config.estimators {
        let p = sanitize(&est.to_string());
        for col in EST_COLUMNS {
            header.push(format!("{p}_{col}"));
        }
        for q in SQRT_POINT_QUANTILES {
            header.push(format!("{p}_w{}", (q * 100.0).round() as usize));
        }
    }
    header.push("error".into());
    writeln!(w, "{}", header.join(","))?;

    for r in &result.records {
        let mut row: Vec<String> = vec![
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            fmt_opt(finite(r.y1)),
            fmt_opt(finite(r.y2)),
            fmt_opt(finite(r.z1)),
            fmt_opt(finite(r.v_n)),
            fmt_opt(r.ks_known.as_ref().map(|k| k.raw)),
            fmt_opt(r.ks_known.as_ref().map(|k| k.normalized)),
            fmt_opt(r.reduction_p1),
            fmt_opt(r.reduction_p2),
        ];
        for idx in 0..result.config.estimators.len() {
            match r.estimators.get(idx) {
                Some(e) => {
                    row.extend(est_values(e).into_iter().map(fmt_opt));
                    match &e.sqrt_points {
                        Some(pts) => row.extend(pts.iter().map(|v| v.to_string())),
                        None => row.extend(
                            std::iter::repeat(String::new())
                                .take(SQRT_POINT_QUANTILES.len()),
                        ),
                    }
                }
                None => row.extend(
                    std::iter::repeat(String::new())
                        .take(EST_COLUMNS.len() + SQRT_POINT_QUANTILES.len()),
                ),
            }
        }
        row.push(r.error.clone().unwrap_or_default());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct VerdictsDoc<'a> {
    version: &'a str,
    config_hash: &'a str,
    overall_pass: bool,
    scalings: &'a [crate::harness::SizeScalings],
    verdicts: &'a [crate::harness::Verdict],
}

/// Verdicts plus provenance, pretty-printed JSON.
pub fn write_verdicts_json(result: &ExperimentResult, w: &mut dyn Write) -> Result<()> {
    let doc = VerdictsDoc {
        version: &result.version,
        config_hash: &result.config_hash,
        overall_pass: result.overall_pass,
        scalings: &result.scalings,
        verdicts: &result.verdicts,
    };
    serde_json::to_writer_pretty(&mut *w, &doc)?;
    writeln!(w)?;
    Ok(())
}

fn grouped<'a>(
    records: &'a [RepRecord],
    config: &ExperimentConfig,
) -> Vec<(usize, Vec<&'a RepRecord>)> {
    config
        .n_grid
        .iter()
        .map(|&n| {
            (
                n,
                records
                    .iter()
                    .filter(|r| r.n == n && r.error.is_none())
                    .collect(),
            )
        })
        .collect()
}

/// Tidy median-vs-n table: metric,estimator,n,value.
pub fn write_median_vs_n_csv(result: &ExperimentResult, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "metric,estimator,n,value")?;
    let mut emit = |metric: &str, estimator: &str, n: usize, vals: &[f64]| -> Result<()> {
        if !vals.is_empty() {
            writeln!(w, "{metric},{estimator},{n},{}", numerics::median(vals))?;
        }
        Ok(())
    };
    for (n, recs) in grouped(&result.records, &result.config) {
        let ks_known: Vec<f64> = recs
            .iter()
            .filter_map(|r| r.ks_known.as_ref().map(|k| k.normalized))
            .collect();
        emit("ks_known_norm", "none", n, &ks_known)?;
        let red1: Vec<f64> = recs.iter().filter_map(|r| r.reduction_p1).collect();
        emit("reduction_p1", "none", n, &red1)?;
        let red2: Vec<f64> = recs.iter().filter_map(|r| r.reduction_p2).collect();
        emit("reduction_p2", "none", n, &red2)?;
        for (idx, est) in result.config.estimators.iter().enumerate() {
            let label = est.to_string();
            let pick = |f: &dyn Fn(&EstimatorRepRecord) -> Option<f64>| -> Vec<f64> {
                recs.iter()
                    .filter_map(|r| r.estimators.get(idx).and_then(|e| f(e)))
                    .collect()
            };
            emit(
                "sup_gamma_hat_s1",
                &label,
                n,
                &pick(&|e| e.ks.as_ref().map(|k| k.normalized_sigma_n1)),
            )?;
            emit(
                "ks_estimated_norm",
                &label,
                n,
                &pick(&|e| e.ks.as_ref().map(|k| k.normalized)),
            )?;
            emit(
                "cvm_norm",
                &label,
                n,
                &pick(&|e| e.cvm.as_ref().map(|c| c.normalized)),
            )?;
            emit("m_equiv", &label, n, &pick(&|e| e.m_equiv))?;
        }
    }
    Ok(())
}

/// Mean profile trace at the largest n: grid point, standardized point,
/// the f' and f regressors, and one mean-trace column per estimator.
pub fn write_profile_csv(result: &ExperimentResult, w: &mut dyn Write) -> Result<()> {
    let config = &result.config;
    let n_last = *config.n_grid.last().unwrap();
    let recs: Vec<&RepRecord> = result
        .records
        .iter()
        .filter(|r| r.n == n_last && r.error.is_none())
        .collect();
    let m = config.grid_m;
    let mut pc = config.process;
    pc.seed = 0;
    let coeffs = crate::process::gen_coefficients(pc.beta, pc.trunc_k)?;
    let marginal = crate::process::marginal_model(&coeffs, pc.mu, pc.sigma);

    let mut header = vec!["x".to_string(), "z".into(), "f1".into(), "f".into()];
    for est in &config.estimators {
        header.push(format!("mean_trace_{}", sanitize(&est.to_string())));
    }
    writeln!(w, "{}", header.join(","))?;
    for g in 0..m {
        let x = marginal.h_quantile((g + 1) as f64 / (m + 1) as f64, pc.mu);
        let z = marginal.z(x);
        let mut row = vec![
            x.to_string(),
            z.to_string(),
            marginal.pdf_d1(z).to_string(),
            marginal.pdf(z).to_string(),
        ];
        for idx in 0..config.estimators.len() {
            let mut acc = 0.0;
            let mut count = 0usize;
            for r in &recs {
                if let Some(tr) = r.estimators.get(idx).and_then(|e| e.trace.as_ref()) {
                    acc += tr[g];
                    count += 1;
                }
            }
            row.push(if count > 0 {
                (acc / count as f64).to_string()
            } else {
                String::new()
            });
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Five-point quantile summary of a sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuantileSummary {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl QuantileSummary {
    pub fn of(values: &[f64]) -> QuantileSummary {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        QuantileSummary {
            p5: numerics::quantile_sorted(&v, 0.05),
            p25: numerics::quantile_sorted(&v, 0.25),
            p50: numerics::quantile_sorted(&v, 0.50),
            p75: numerics::quantile_sorted(&v, 0.75),
            p95: numerics::quantile_sorted(&v, 0.95),
        }
    }
}

/// A results CSV read back into memory: header plus numeric-or-empty cells.
pub struct ResultsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl ResultsTable {
    pub fn parse(text: &str) -> Result<ResultsTable> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| crate::error::Error::Contract("empty results CSV".into()))?
            .split(',')
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let row: Vec<Option<f64>> = line
                .split(',')
                .map(|cell| cell.parse::<f64>().ok())
                .collect();
            rows.push(row);
        }
        Ok(ResultsTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Non-empty values of `name` restricted to rows with the given n.
    pub fn values_at(&self, name: &str, n: usize) -> Vec<f64> {
        let Some(col) = self.column(name) else {
            return Vec::new();
        };
        let Some(ncol) = self.column("n") else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| r.get(ncol).copied().flatten() == Some(n as f64))
            .filter_map(|r| r.get(col).copied().flatten())
            .collect()
    }

    pub fn n_values(&self) -> Vec<usize> {
        let Some(ncol) = self.column("n") else {
            return Vec::new();
        };
        let mut ns: Vec<usize> = self
            .rows
            .iter()
            .filter_map(|r| r.get(ncol).copied().flatten())
            .map(|v| v as usize)
            .collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorSpec;
    use crate::harness::{run_experiment, Sigma2Mode, StatisticKind};
    use crate::process::{Innovation, ProcessConfig};

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            process: ProcessConfig {
                beta: 0.7,
                trunc_k: 64,
                innovation: Innovation::StandardGaussian,
                mu: 0.0,
                sigma: 1.0,
                seed: 0,
            },
            master_seed: 7,
            n_grid: vec![64],
            reps: 50,
            estimators: vec![EstimatorSpec::Mean],
            statistics: vec![StatisticKind::KsKnown, StatisticKind::KsEstimated],
            grid_m: 16,
            sigma2_mode: Sigma2Mode::Exact,
            sigma2_budget: 1 << 13,
            sigma2_mc_reps: 500,
            checks: vec![],
        }
    }

    #[test]
    fn results_csv_roundtrips() {
        let res = run_experiment(&tiny_config(), Some(1)).unwrap();
        let mut buf = Vec::new();
        write_results_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let table = ResultsTable::parse(&text).unwrap();
        assert_eq!(table.rows.len(), 50);
        let kss = table.values_at("ks_known_norm", 64);
        assert_eq!(kss.len(), 50);
        // bit-exact roundtrip of a float column
        let orig: Vec<f64> = res
            .records
            .iter()
            .map(|r| r.ks_known.as_ref().unwrap().normalized)
            .collect();
        assert_eq!(kss, orig);
    }

    #[test]
    fn quantile_summary_monotone() {
        let vals: Vec<f64> = (0..101).map(|i| (i as f64 * 7.3) % 13.0).collect();
        let q = QuantileSummary::of(&vals);
        assert!(q.p5 <= q.p25 && q.p25 <= q.p50 && q.p50 <= q.p75 && q.p75 <= q.p95);
    }
}
