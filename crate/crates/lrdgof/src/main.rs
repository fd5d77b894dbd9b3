//! Command-line front end: simulate paths, print normalizations, run
//! goodness-of-fit batches, reduction diagnostics and full experiments,
//! and summarize result files.
//!
//! Exit codes: 0 success (and all checks passed), 1 experiment ran but a
//! check failed, 2 flag/validation/schema error, 3 I/O error.

use clap::{Parser, Subcommand};
use lrdgof::error::Error;
use lrdgof::estimators::EstimatorSpec;
use lrdgof::gof::Normalization;
use lrdgof::harness::{run_experiment, ExperimentConfig, Sigma2Mode, StatisticKind};
use lrdgof::process::{generate_path, Innovation, ProcessConfig};
use lrdgof::report::{self, QuantileSummary, ResultsTable};
use lrdgof::scalings::{build_scaling_set, Sigma2Source};
use lrdgof::schema::parse_experiment_config;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const OUT_DIR_ENV: &str = "LRDGOF_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "lrdgof",
    version,
    about = "LRD linear-process simulation and estimated-parameter goodness-of-fit lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one path and write i,x,y rows to a CSV file.
    Simulate {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1 << 16)]
        trunc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the exact normalization set for (beta, n, trunc) as JSON.
    Scalings {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1 << 16)]
        trunc: usize,
    },
    /// Run one goodness-of-fit statistic over replications.
    Gof {
        /// ks | cvm
        #[arg(long)]
        stat: String,
        /// none | mean | m:<psi>
        #[arg(long, default_value = "none")]
        estimator: String,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1 << 16)]
        trunc: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduction-principle diagnostic: scaled sup|S_{n,p}| medians vs n.
    ReductionCheck {
        #[arg(long)]
        beta: f64,
        /// Comma-separated sizes, e.g. 1024,4096,16384
        #[arg(long)]
        ns: String,
        #[arg(long, default_value_t = 1 << 16)]
        trunc: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config-driven experiment and write results + verdicts.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results are identical for any value.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize a results CSV written by `experiment`.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter { name, message } => CliError::Usage(format!("--{name}: {message}")),
            Error::Schema { pointer, message } => {
                CliError::Usage(format!("config schema violation at `{pointer}`: {message}"))
            }
            Error::Io(e) => CliError::Io(e.to_string()),
            Error::Json(e) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn io_err<T>(r: std::io::Result<T>, what: &str) -> Result<T, CliError> {
    r.map_err(|e| CliError::Io(format!("{what}: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("I/O error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn hash_of(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            io_err(fs::create_dir_all(parent), "creating output directory")?;
        }
    }
    io_err(
        fs::write(path, contents),
        &format!("writing {}", path.display()),
    )
}

fn process_config(
    beta: f64,
    trunc: usize,
    mu: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProcessConfig, CliError> {
    let cfg = ProcessConfig {
        beta,
        trunc_k: trunc,
        innovation: Innovation::StandardGaussian,
        mu,
        sigma,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Cmd::Simulate {
            beta,
            n,
            trunc,
            seed,
            mu,
            sigma,
            out,
        } => {
            if n == 0 {
                return Err(CliError::Usage("--n: must be at least 1".into()));
            }
            let cfg = process_config(beta, trunc, mu, sigma, seed)?;
            let path = generate_path(&cfg, n)?;
            let mut buf = String::from("i,x,y\n");
            for i in 0..n {
                buf.push_str(&format!("{},{},{}\n", i + 1, path.x[i], path.y[i]));
            }
            write_file(&out, buf.as_bytes())?;
            Ok(0)
        }
        Cmd::Scalings { beta, n, trunc } => {
            if beta == 0.75 {
                return Err(CliError::Usage(
                    "--beta: the limit theory splits at beta = 3/4 and is undefined on the \
                     boundary; choose beta < 3/4 or beta > 3/4"
                        .into(),
                ));
            }
            let cfg = process_config(beta, trunc, 0.0, 1.0, 0)?;
            if n < 3 {
                return Err(CliError::Usage("--n: must be at least 3".into()));
            }
            let set = build_scaling_set(&cfg, n, Sigma2Source::Exact { budget: n + trunc })?;
            let params = json!({"command": "scalings", "beta": beta, "n": n, "trunc": trunc});
            let mut doc = serde_json::to_value(set).map_err(Error::from)?;
            doc["tool_version"] = json!(env!("CARGO_PKG_VERSION"));
            doc["config_hash"] = json!(hash_of(&params));
            let mut stdout = std::io::stdout().lock();
            io_err(
                writeln!(
                    stdout,
                    "{}",
                    serde_json::to_string_pretty(&doc).map_err(Error::from)?
                ),
                "stdout",
            )?;
            Ok(0)
        }
        Cmd::Gof {
            stat,
            estimator,
            beta,
            n,
            trunc,
            reps,
            seed,
            mu,
            sigma,
            out,
        } => run_gof(&stat, &estimator, beta, n, trunc, reps, seed, mu, sigma, out),
        Cmd::ReductionCheck {
            beta,
            ns,
            trunc,
            reps,
            seed,
            p,
            out,
        } => run_reduction_check(beta, &ns, trunc, reps, seed, p, out),
        Cmd::Experiment { config, out, jobs } => {
            let text = io_err(
                fs::read_to_string(&config),
                &format!("reading {}", config.display()),
            )?;
            let cfg = parse_experiment_config(&text)?;
            let result = run_experiment(&cfg, jobs)?;
            let dir = out_dir(out);
            let mut csv = Vec::new();
            report::write_results_csv(&result, &mut csv)?;
            write_file(&dir.join("results.csv"), &csv)?;
            let mut verdicts = Vec::new();
            report::write_verdicts_json(&result, &mut verdicts)?;
            write_file(&dir.join("verdicts.json"), &verdicts)?;
            let mut medians = Vec::new();
            report::write_median_vs_n_csv(&result, &mut medians)?;
            write_file(&dir.join("plot_median_vs_n.csv"), &medians)?;
            if cfg.has_statistic(StatisticKind::Profile) {
                let mut profile = Vec::new();
                report::write_profile_csv(&result, &mut profile)?;
                write_file(&dir.join("plot_profile.csv"), &profile)?;
            }
            for v in &result.verdicts {
                let status = if v.pass { "pass" } else { "FAIL" };
                let est = v
                    .estimator
                    .as_ref()
                    .map(|e| format!(" [{e}]"))
                    .unwrap_or_default();
                println!("{status} {}{est}: measured {}", v.name, v.measured);
            }
            Ok(if result.overall_pass { 0 } else { 1 })
        }
        Cmd::Report { results, out } => {
            let text = io_err(
                fs::read_to_string(&results),
                &format!("reading {}", results.display()),
            )?;
            let table = ResultsTable::parse(&text)?;
            let dir = out_dir(out);
            let ns = table.n_values();
            let mut summary = serde_json::Map::new();
            let mut medians_csv = String::from("metric,n,value\n");
            for col in table
                .header
                .iter()
                .filter(|c| !matches!(c.as_str(), "n" | "rep" | "seed" | "error"))
            {
                let mut per_n = serde_json::Map::new();
                for &n in &ns {
                    let vals = table.values_at(col, n);
                    if vals.is_empty() {
                        continue;
                    }
                    let q = QuantileSummary::of(&vals);
                    per_n.insert(n.to_string(), serde_json::to_value(q).map_err(Error::from)?);
                    medians_csv.push_str(&format!("{col},{n},{}\n", q.p50));
                }
                if !per_n.is_empty() {
                    summary.insert(col.clone(), serde_json::Value::Object(per_n));
                }
            }
            let doc = json!({
                "tool_version": env!("CARGO_PKG_VERSION"),
                "config_hash": format!("{:x}", Sha256::digest(text.as_bytes())),
                "columns": summary,
            });
            write_file(
                &dir.join("summary.json"),
                serde_json::to_string_pretty(&doc)
                    .map_err(Error::from)?
                    .as_bytes(),
            )?;
            write_file(&dir.join("median_vs_n.csv"), medians_csv.as_bytes())?;
            Ok(0)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_gof(
    stat: &str,
    estimator: &str,
    beta: f64,
    n: usize,
    trunc: usize,
    reps: usize,
    seed: u64,
    mu: f64,
    sigma: f64,
    out: Option<PathBuf>,
) -> Result<u8, CliError> {
    let process = process_config(beta, trunc, mu, sigma, seed)?;
    let (statistic, est): (StatisticKind, Option<EstimatorSpec>) = match (stat, estimator) {
        ("ks", "none") => (StatisticKind::KsKnown, None),
        ("ks", e) => (StatisticKind::KsEstimated, Some(EstimatorSpec::parse(e)?)),
        ("cvm", "none") => {
            return Err(CliError::Usage(
                "--estimator: the Cramer-von Mises statistic is defined with an estimated \
                 location; choose mean or m:<psi>"
                    .into(),
            ))
        }
        ("cvm", e) => (StatisticKind::Cvm, Some(EstimatorSpec::parse(e)?)),
        (s, _) => {
            return Err(CliError::Usage(format!(
                "--stat: unknown statistic `{s}`; expected ks | cvm"
            )))
        }
    };
    let config = ExperimentConfig {
        process,
        master_seed: seed,
        n_grid: vec![n],
        reps,
        estimators: est.into_iter().collect(),
        statistics: vec![statistic],
        grid_m: 64,
        sigma2_mode: Sigma2Mode::Exact,
        sigma2_budget: n + trunc,
        sigma2_mc_reps: 500,
        checks: vec![],
    };
    let result = run_experiment(&config, None)?;

    let mut rows = String::from("rep,seed,raw,normalized,normalization\n");
    let mut normalized = Vec::with_capacity(reps);
    let mut norm_label = String::new();
    for r in &result.records {
        let gof = match statistic {
            StatisticKind::KsKnown => r.ks_known.as_ref(),
            StatisticKind::KsEstimated => r.estimators.first().and_then(|e| e.ks.as_ref()),
            StatisticKind::Cvm => r.estimators.first().and_then(|e| e.cvm.as_ref()),
            _ => unreachable!(),
        };
        if let Some(g) = gof {
            norm_label = norm_name(g.normalization).to_string();
            rows.push_str(&format!(
                "{},{},{},{},{}\n",
                r.rep, r.seed, g.raw, g.normalized, norm_label
            ));
            normalized.push(g.normalized);
        }
    }
    let dir = out_dir(out);
    write_file(&dir.join("gof_results.csv"), rows.as_bytes())?;
    let params = json!({
        "command": "gof", "stat": stat, "estimator": estimator, "beta": beta,
        "n": n, "trunc": trunc, "reps": reps, "seed": seed, "mu": mu, "sigma": sigma,
    });
    let doc = json!({
        "stat": stat,
        "estimator": estimator,
        "normalization": norm_label,
        "beta": beta,
        "n": n,
        "trunc_k": trunc,
        "reps": reps,
        "master_seed": seed,
        "quantiles": QuantileSummary::of(&normalized),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash_of(&params),
    });
    write_file(
        &dir.join("gof_summary.json"),
        serde_json::to_string_pretty(&doc)
            .map_err(Error::from)?
            .as_bytes(),
    )?;
    Ok(0)
}

fn norm_name(n: Normalization) -> &'static str {
    match n {
        Normalization::SigmaN1N => "sigma_n1_n",
        Normalization::SigmaN2N => "sigma_n2_n",
        Normalization::SqrtN => "sqrt_n",
    }
}

fn run_reduction_check(
    beta: f64,
    ns: &str,
    trunc: usize,
    reps: usize,
    seed: u64,
    p: usize,
    out: Option<PathBuf>,
) -> Result<u8, CliError> {
    let sizes: Vec<usize> = ns
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--ns: `{s}` is not a size")))
        })
        .collect::<Result<_, _>>()?;
    if !(1..=2).contains(&p) {
        return Err(CliError::Usage("--p: must be 1 or 2".into()));
    }
    let process = process_config(beta, trunc, 0.0, 1.0, seed)?;
    let statistic = if p == 1 {
        StatisticKind::ReductionP1
    } else {
        StatisticKind::ReductionP2
    };
    let config = ExperimentConfig {
        process,
        master_seed: seed,
        n_grid: sizes.clone(),
        reps,
        estimators: vec![],
        statistics: vec![statistic],
        grid_m: 64,
        sigma2_mode: Sigma2Mode::Exact,
        sigma2_budget: sizes.iter().max().unwrap_or(&0) + trunc,
        sigma2_mc_reps: 500,
        checks: vec![],
    };
    let result = run_experiment(&config, None)?;
    let medians: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = result
                .records
                .iter()
                .filter(|r| r.n == n && r.error.is_none())
                .filter_map(|r| if p == 1 { r.reduction_p1 } else { r.reduction_p2 })
                .collect();
            lrdgof::numerics::median(&vals)
        })
        .collect();
    let lns: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let lms: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let slope = if sizes.len() >= 2 {
        lrdgof::numerics::fit_line(&lns, &lms).1
    } else {
        f64::NAN
    };
    let dir = out_dir(out);
    let mut csv = String::from("n,median_scaled_sup\n");
    for (n, m) in sizes.iter().zip(&medians) {
        csv.push_str(&format!("{n},{m}\n"));
    }
    write_file(&dir.join("reduction_medians.csv"), csv.as_bytes())?;
    let params = json!({
        "command": "reduction-check", "beta": beta, "ns": sizes, "trunc": trunc,
        "reps": reps, "seed": seed, "p": p,
    });
    let doc = json!({
        "p": p,
        "beta": beta,
        "trunc_k": trunc,
        "reps": reps,
        "ns": sizes,
        "medians": medians,
        "log_slope": slope,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash_of(&params),
    });
    write_file(
        &dir.join("reduction.json"),
        serde_json::to_string_pretty(&doc)
            .map_err(Error::from)?
            .as_bytes(),
    )?;
    println!("log-log slope: {slope}");
    Ok(0)
}
