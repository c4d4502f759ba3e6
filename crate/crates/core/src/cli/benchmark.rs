use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use super::{usage, CliError, RunManifest};
use crate::baselines::{mle_fit, MleOptions};
use crate::error::Error;
use crate::estimator::{estimate, StveConfig};
use crate::simulator::{loglog_slope, replicate, ErrorSummary, NoiseFamily, SimulationConfig};

const ESTIMATORS: [&str; 3] = ["stve", "mle", "truth"];

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// TOML file with any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "T-grid", value_delimiter = ',')]
    pub t_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub eta2: Option<f64>,
    #[arg(long = "n")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise: Option<NoiseFamily>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated subset of stve, mle, truth.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Benchmark settings as read from a config file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkFile {
    pub reps: Option<usize>,
    pub t_grid: Option<Vec<usize>>,
    pub sigma2: Option<f64>,
    pub eta2: Option<f64>,
    pub n: Option<usize>,
    pub noise: Option<NoiseFamily>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub estimators: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Resolved {
    reps: usize,
    t_grid: Vec<usize>,
    sigma2: f64,
    eta2: f64,
    n: usize,
    noise: NoiseFamily,
    seed: u64,
    alpha: f64,
    estimators: Vec<String>,
}

fn resolve(args: &BenchmarkArgs) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(e.into()))?;
            toml::from_str::<BenchmarkFile>(&text).map_err(|e| {
                CliError::Input(Error::Parse {
                    path: path.display().to_string(),
                    line: 0,
                    message: e.message().to_string(),
                })
            })?
        }
        None => BenchmarkFile::default(),
    };
    let r = Resolved {
        reps: args.reps.or(file.reps).unwrap_or(150),
        t_grid: args.t_grid.clone().or(file.t_grid).unwrap_or_else(|| vec![125, 250, 500, 1000]),
        sigma2: args.sigma2.or(file.sigma2).unwrap_or(0.5),
        eta2: args.eta2.or(file.eta2).unwrap_or(2.0),
        n: args.dim.or(file.n).unwrap_or(5),
        noise: args.noise.or(file.noise).unwrap_or_default(),
        seed: args.seed.or(file.seed).unwrap_or(0),
        alpha: args.alpha.or(file.alpha).unwrap_or(0.25),
        estimators: args
            .estimators
            .clone()
            .or(file.estimators)
            .unwrap_or_else(|| vec!["stve".into(), "mle".into()]),
    };
    if r.t_grid.len() < 3 {
        return Err(usage("the T grid needs at least 3 values"));
    }
    if r.reps < 2 {
        return Err(usage("--reps must be at least 2"));
    }
    if let Some(bad) = r.estimators.iter().find(|e| !ESTIMATORS.contains(&e.as_str())) {
        return Err(usage(format!("unknown estimator '{bad}' (expected stve, mle or truth)")));
    }
    StveConfig { alpha: r.alpha, ..StveConfig::default() }.validate().map_err(|e| usage(e.to_string()))?;
    for &t in &r.t_grid {
        SimulationConfig::gaussian(t, r.n, r.sigma2, r.eta2, r.seed)
            .with_family(r.noise)
            .validate()
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(r)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("STVE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("STVE_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Library(Error::Io(std::io::Error::other(e))))
}

fn run_estimator(name: &str, cfg: &SimulationConfig, r: &Resolved) -> crate::Result<ErrorSummary> {
    let stve_cfg = StveConfig { alpha: r.alpha, ..StveConfig::default() };
    let (sigma2, eta2) = (r.sigma2, r.eta2);
    match name {
        "stve" => replicate(cfg, r.reps, |ds| estimate(ds, &stve_cfg).map(|e| (e.sigma2, e.eta2))),
        "mle" => replicate(cfg, r.reps, |ds| mle_fit(ds, (1.0, 1.0), &MleOptions::default()).map(|m| (m.sigma2, m.eta2))),
        _ => replicate(cfg, r.reps, |_| Ok((sigma2, eta2))),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(super) fn run(args: &BenchmarkArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    let r = resolve(args)?;
    let pool = thread_pool()?;
    let config_json = serde_json::to_value(&r).map_err(super::estimate::json_err)?;
    let mut manifest = RunManifest::new("benchmark", config_json, Some(r.seed), None);

    let file = std::fs::File::create(&args.out)?;
    let mut file = std::io::BufWriter::new(file);
    writeln!(file, "# {}", manifest.comment())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "kind",
        "T",
        "estimator",
        "reps",
        "failures",
        "mean_err_sigma2",
        "stderr_sigma2",
        "mean_err_eta2",
        "stderr_eta2",
        "flag",
    ])
    .map_err(Error::from)?;

    for name in &r.estimators {
        let mut rows = Vec::with_capacity(r.t_grid.len());
        for &t in &r.t_grid {
            let cfg = SimulationConfig::gaussian(t, r.n, r.sigma2, r.eta2, r.seed).with_family(r.noise);
            let s = pool.install(|| run_estimator(name, &cfg, &r))?;
            if s.failures > 0 {
                writeln!(err, "warning: {name} failed on {} of {} replications at T = {t}", s.failures, s.replications)?;
            }
            w.write_record([
                "point".to_string(),
                t.to_string(),
                name.clone(),
                s.replications.to_string(),
                s.failures.to_string(),
                s.mean_abs_err_sigma2.to_string(),
                s.stderr_sigma2.to_string(),
                s.mean_abs_err_eta2.to_string(),
                s.stderr_eta2.to_string(),
                String::new(),
            ])
            .map_err(Error::from)?;
            writeln!(
                out,
                "{name:>6} T={t:<6} |sigma2 err| {:.5} +- {:.5}   |eta2 err| {:.5} +- {:.5}",
                s.mean_abs_err_sigma2, s.stderr_sigma2, s.mean_abs_err_eta2, s.stderr_eta2
            )?;
            rows.push(s);
        }
        let es: Vec<f64> = rows.iter().map(|s| s.mean_abs_err_sigma2).collect();
        let ee: Vec<f64> = rows.iter().map(|s| s.mean_abs_err_eta2).collect();
        let slope_s = loglog_slope(&r.t_grid, &es);
        let slope_e = loglog_slope(&r.t_grid, &ee);
        let flag = if slope_s.is_none() || slope_e.is_none() { "slope_undefined" } else { "" };
        w.write_record([
            "slope".to_string(),
            String::new(),
            name.clone(),
            r.reps.to_string(),
            String::new(),
            fmt_opt(slope_s),
            String::new(),
            fmt_opt(slope_e),
            String::new(),
            flag.to_string(),
        ])
        .map_err(Error::from)?;
        let show = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "undefined".into());
        writeln!(out, "{name:>6} log-log slope: sigma2 {}  eta2 {}", show(slope_s), show(slope_e))?;
    }
    w.flush()?;
    drop(w);
    manifest.finish(start.elapsed());
    manifest.write_beside(&args.out)?;
    Ok(())
}
