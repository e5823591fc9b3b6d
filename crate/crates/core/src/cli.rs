//! Command-line front end: `simulate`, `fit`, `experiment` and `validate`.
//!
//! Settings resolve as flag > config file > built-in default. Every command
//! that writes output also writes `manifest.json` next to it, recording the
//! exact arguments, the hash of the config bytes and the seed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::closedform::{self, MulticlassCovariance, RegularizerSpec, SigmaSource};
use crate::error::{Error, Result};
use crate::estimate::EstimateResult;
use crate::gproc::{simulate_covariates, CovariateProcessSpec};
use crate::hazard::{simulate_exits, Alpha, Link, ModelSpec};
use crate::linalg;
use crate::mle::{self, estimate_model, InitPoint, SolverOptions};
use crate::panel::{self, load_panel, write_panel, Outcome, Panel, Rows};
use crate::xlab::{self, alpha_for_rate, assign_classes, parse_json, ExperimentConfig, SolverConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "rarehazard", version, about = "Rare-event default models: simulation, estimation, experiments")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a panel from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a panel CSV.
    Fit {
        /// Panel CSV; its sidecar descriptor is picked up when present.
        panel: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// `estimate`, or a JSON file holding the covariance matrix.
        #[arg(long)]
        sigma: Option<String>,
        /// Optional fit settings (link, solver, regularizer, ...).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Recorded in the manifest; fitting is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a simulation study.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the full-size defaults for sizes and replications.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Check a panel CSV or a config without running anything.
    Validate {
        #[arg(long, required_unless_present = "config")]
        panel: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        paper_scale: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Mle,
    Both,
    Regularized,
    Censoring,
    Multiclass,
    Highdim,
}

/// Simulation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub firms: usize,
    pub periods: usize,
    /// Defaults to i.i.d. N(0, 1) covariates of the model's dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<CovariateProcessSpec>,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_shares: Option<Vec<f64>>,
    /// Overrides the model intercept(s) so the mean annual default rate
    /// matches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_annual_rate: Option<f64>,
}

impl SimulateConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn covariates(&self) -> CovariateProcessSpec {
        self.covariates
            .clone()
            .unwrap_or_else(|| CovariateProcessSpec::standard(0, self.model.dim()))
    }

    /// Check the config and apply the target rate.
    pub fn resolve(&self) -> Result<SimulateConfig> {
        let mut c = self.clone();
        if c.firms == 0 || c.periods == 0 {
            return Err(Error::config("firms", "firms and periods must be positive"));
        }
        let cov = c.covariates();
        cov.validate().map_err(|e| Error::config("covariates", e.to_string()))?;
        c.model.validate().map_err(|e| Error::config("model", e.to_string()))?;
        if c.model.link != Link::Highdim && c.model.dim() != cov.dim() {
            return Err(Error::config(
                "model.beta",
                format!("has {} entries, covariates have {}", c.model.dim(), cov.dim()),
            ));
        }
        if let Some(shares) = &c.class_shares {
            if shares.is_empty() || shares.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::config("class_shares", "shares must be positive"));
            }
        }
        if let Some(rate) = c.target_annual_rate {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(Error::config("target_annual_rate", "must lie in (0, 1)"));
            }
            let a = alpha_for_rate(&c.model, &cov, rate)?;
            c.model.alpha = match &c.model.alpha {
                Alpha::Scalar(_) => Alpha::Scalar(a),
                Alpha::PerClass(v) => Alpha::PerClass(vec![a; v.len()]),
            };
        }
        Ok(c)
    }
}

/// Optional settings for `fit`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Link of the likelihood fit; intensity by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<Link>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    /// Known covariance; the `--sigma` flag wins over it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerSpec>,
    /// Number of leading common-factor columns for the multiclass fit;
    /// defaults to the descriptor's value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_dim: Option<usize>,
    /// `d` of the high-dimensional link; defaults to the covariate count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_scale: Option<usize>,
}

/// Record of one run, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub arguments: Vec<String>,
    pub config_path: Option<String>,
    /// SHA-256 of the config file bytes.
    pub config_sha256: Option<String>,
    pub out_dir: String,
    pub seed: Option<u64>,
    pub version: String,
    pub jobs: Option<usize>,
    /// Unix time in seconds.
    pub started_at: f64,
    pub finished_at: f64,
    pub wall_seconds: f64,
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn read_config(path: &Path) -> Result<(String, String)> {
    let bytes = fs::read(path).map_err(|e| Error::config("config", format!("cannot read {}: {}", path.display(), e)))?;
    let hash = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| Error::config("config", "not valid UTF-8"))?;
    Ok((text, hash))
}

/// A missing input file is a usage error, not an internal one.
fn read_panel(path: &Path) -> Result<Panel> {
    if !path.is_file() {
        return Err(Error::config("panel", format!("no such file: {}", path.display())));
    }
    load_panel(path)
}

fn print_out(text: &str) {
    use std::io::Write;
    // a closed pipe on stdout is not an error worth reporting
    let _ = writeln!(std::io::stdout(), "{}", text);
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

/// Run a parsed command inside a pool of `--jobs` workers.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    match cli.jobs {
        Some(0) => Err(Error::config("jobs", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("jobs", e.to_string()))?;
            pool.install(|| dispatch(cli, argv))
        }
        None => dispatch(cli, argv),
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    let started_at = unix_now();
    let clock = Instant::now();
    let manifest = |sub: &str, config: Option<(&Path, String)>, out: &Path, seed: Option<u64>| RunManifest {
        subcommand: sub.into(),
        arguments: argv.to_vec(),
        config_path: config.as_ref().map(|(p, _)| p.display().to_string()),
        config_sha256: config.map(|(_, h)| h),
        out_dir: out.display().to_string(),
        seed,
        version: VERSION.into(),
        jobs: cli.jobs,
        started_at,
        finished_at: unix_now(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    match &cli.command {
        Command::Simulate { config, out, seed } => {
            let (text, hash) = read_config(config)?;
            let cfg = SimulateConfig::from_json(&text)?;
            let seed = seed.or(cfg.seed).unwrap_or(0);
            let panel = cmd_simulate(&cfg, seed)?;
            fs::create_dir_all(out)?;
            write_panel(&panel, &out.join("panel.csv"))?;
            let s = panel::summarize(&panel);
            log::info!(
                "simulated {} firm-periods, {} defaults, {} censored",
                s.firm_periods,
                s.default_count,
                s.censor_count
            );
            write_json(&out.join("manifest.json"), &manifest("simulate", Some((config, hash)), out, Some(seed)))
        }
        Command::Fit {
            panel,
            method,
            sigma,
            config,
            out,
            seed,
        } => {
            let (fc, cfg_meta) = match config {
                Some(p) => {
                    let (text, hash) = read_config(p)?;
                    (parse_json::<FitConfig>(&text)?, Some((p.as_path(), hash)))
                }
                None => (FitConfig::default(), None),
            };
            let data = read_panel(panel)?;
            let sigma = resolve_sigma(sigma.as_deref(), &fc)?;
            let results = cmd_fit(&data, *method, &sigma, &fc)?;
            fs::create_dir_all(out)?;
            write_json(&out.join("estimates.json"), &FitOutput { method: *method, results })?;
            write_json(&out.join("manifest.json"), &manifest("fit", cfg_meta, out, *seed))
        }
        Command::Experiment {
            config,
            out,
            seed,
            paper_scale,
        } => {
            let (text, hash) = read_config(config)?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(s) = seed {
                cfg.seed = Some(*s);
            }
            let report = xlab::run_experiment(&cfg, *paper_scale)?;
            report.write(out)?;
            if !report.failures.is_empty() {
                log::warn!("{} replications failed", report.failures.len());
            }
            let seed = report.config.get("seed").and_then(|v| v.as_u64());
            write_json(&out.join("manifest.json"), &manifest("experiment", Some((config, hash)), out, seed))
        }
        Command::Validate {
            panel,
            config,
            paper_scale,
        } => {
            if let Some(p) = panel {
                let data = read_panel(p)?;
                print_out(&serde_json::to_string_pretty(&panel::summarize(&data))?);
            }
            if let Some(c) = config {
                let (text, _) = read_config(c)?;
                print_out(&validate_config(&text, *paper_scale)?);
            }
            Ok(())
        }
    }
}

/// Resolve a config of either kind and return it as pretty JSON. Experiment
/// configs carry a `scenario` field.
pub fn validate_config(text: &str, paper_scale: bool) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    if value.get("scenario").is_some() {
        let cfg = ExperimentConfig::from_json(text)?.resolve(paper_scale)?;
        Ok(serde_json::to_string_pretty(&cfg)?)
    } else {
        let cfg = SimulateConfig::from_json(text)?.resolve()?;
        Ok(serde_json::to_string_pretty(&cfg)?)
    }
}

/// Simulate the panel described by `cfg`.
pub fn cmd_simulate(cfg: &SimulateConfig, seed: u64) -> Result<Panel> {
    let cfg = cfg.resolve()?;
    let cov = cfg.covariates();
    let classes = cfg.class_shares.as_ref().map(|s| assign_classes(cfg.firms, s));
    let block = simulate_covariates(&cov, cfg.firms, cfg.periods, None, seed)?;
    let (panel, diag) = simulate_exits(&block, &cfg.model, classes.as_deref(), seed)?;
    if diag.infinite_hazard > 0 {
        log::warn!("{} firm-periods hit the exponent cap", diag.infinite_hazard);
    }
    Ok(panel)
}

#[derive(Debug, Clone, Serialize)]
struct FitOutput {
    method: Method,
    results: Vec<EstimateResult>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SigmaFile {
    Bare(Vec<Vec<f64>>),
    Wrapped { sigma: Vec<Vec<f64>> },
}

/// `--sigma` flag, then the config's matrix, then estimation.
pub fn resolve_sigma(flag: Option<&str>, fc: &FitConfig) -> Result<SigmaSource> {
    let rows = match flag {
        Some("estimate") => return Ok(SigmaSource::default()),
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Error::config("sigma", format!("cannot read {}: {}", path, e)))?;
            match parse_json::<SigmaFile>(&text)? {
                SigmaFile::Bare(m) | SigmaFile::Wrapped { sigma: m } => m,
            }
        }
        None => match &fc.sigma {
            Some(m) => m.clone(),
            None => return Ok(SigmaSource::default()),
        },
    };
    let m = linalg::matrix_from_rows(&rows).map_err(|e| Error::config("sigma", e.to_string()))?;
    linalg::require_pd(&m).map_err(|e| Error::config("sigma", e.to_string()))?;
    Ok(SigmaSource::Known(m))
}

fn solver_options(fc: &FitConfig, sigma: &SigmaSource) -> SolverOptions {
    let sc = fc.solver.clone().unwrap_or_default();
    let mut o = SolverOptions {
        solver: sc.solver,
        init: InitPoint::Proposed,
        sigma: sigma.clone(),
        ..SolverOptions::default()
    };
    if let Some(n) = sc.max_iter {
        o.max_iter = n;
    }
    if let Some(g) = sc.grad_tol {
        o.grad_tol = g;
    }
    if let Some(s) = sc.stop {
        o.stop = s;
    }
    o
}

/// Store the log-likelihood of a closed-form estimate in its diagnostics.
fn with_likelihood(mut est: EstimateResult, rows: &Rows, link: Link, dim_scale: Option<usize>) -> Result<EstimateResult> {
    est.diagnostics.log_likelihood = mle::log_likelihood(rows, &estimate_model(&est, link, dim_scale))?;
    Ok(est)
}

/// Fit `panel` with the estimators `method` selects.
pub fn cmd_fit(panel: &Panel, method: Method, sigma: &SigmaSource, fc: &FitConfig) -> Result<Vec<EstimateResult>> {
    let rows = panel.rows();
    let link = fc.link.unwrap_or(Link::Intensity);
    let opts = solver_options(fc, sigma);
    match method {
        Method::Proposed => Ok(vec![with_likelihood(closedform::proposed(rows, sigma)?, rows, link, None)?]),
        Method::Mle => Ok(vec![mle::mle_fit(rows, link, &opts)?]),
        Method::Both => {
            let p = with_likelihood(closedform::proposed(rows, sigma)?, rows, link, None)?;
            let m = mle::mle_fit(rows, link, &opts)?;
            Ok(vec![p, m])
        }
        Method::Regularized => {
            let spec = fc
                .regularizer
                .clone()
                .unwrap_or(RegularizerSpec::Ridge { lambda: 1.0, z: None });
            let pen = spec.to_penalty(rows.dim()).map_err(|e| Error::config("regularizer", e.to_string()))?;
            let stats = closedform::moment_statistics(rows);
            let s = sigma.resolve(rows)?;
            let fit = closedform::regularized_closed_form(&stats.what()?, &s.sigma, &pen)?;
            let alpha = closedform::closed_form_alpha(rows, &fit.beta)?;
            let p = EstimateResult {
                method: "regularized_proposed".into(),
                beta: fit.beta.as_slice().to_vec(),
                alpha: Alpha::from_vec(alpha),
                vartheta: None,
                alpha2: None,
                diagnostics: crate::estimate::FitDiagnostics {
                    iterations: fit.iterations,
                    converged: fit.converged,
                    ..Default::default()
                },
            };
            let p = with_likelihood(p, rows, link, None)?;
            let mut m = mle::mle_fit(rows, link, &SolverOptions { penalty: pen, ..opts })?;
            m.method = "regularized_mle".into();
            Ok(vec![p, m])
        }
        Method::Censoring => {
            if rows.count(Outcome::Censor) == 0 {
                return Err(Error::NoCensorObserved);
            }
            let s = sigma.resolve(rows)?;
            let p = closedform::closed_form_censoring(rows, &s)?.into_result();
            let p = with_likelihood(p, rows, Link::Bihazard, None)?;
            let m = mle::mle_fit(rows, Link::Bihazard, &opts)?;
            Ok(vec![p, m])
        }
        Method::Multiclass => {
            let shared = fc.shared_dim.unwrap_or(panel.common_dim());
            if shared > rows.dim() {
                return Err(Error::config("shared_dim", "exceeds the covariate count"));
            }
            let cov = match sigma {
                SigmaSource::Known(m) => MulticlassCovariance::Known(m.clone()),
                SigmaSource::Estimate(_) => MulticlassCovariance::ClassWise,
            };
            let est = closedform::closed_form_multiclass_shared_theta(rows, shared, &cov)?;
            // report θ̂ followed by each class's η̂
            let mut beta = est.theta.as_slice().to_vec();
            for e in &est.eta {
                beta.extend_from_slice(e.as_slice());
            }
            let p = EstimateResult {
                method: "multiclass_proposed".into(),
                beta,
                alpha: Alpha::from_vec(est.alpha.clone()),
                vartheta: None,
                alpha2: None,
                diagnostics: crate::estimate::FitDiagnostics {
                    converged: true,
                    ..Default::default()
                },
            };
            let m = mle::mle_fit(rows, link, &opts)?;
            Ok(vec![p, m])
        }
        Method::Highdim => {
            let d = fc.dim_scale.unwrap_or(rows.dim());
            if d == 0 {
                return Err(Error::config("dim_scale", "must be positive"));
            }
            let (beta, alpha) = closedform::closed_form_highdim(rows, d, None)?;
            let p = EstimateResult {
                method: "highdim_proposed".into(),
                beta: beta.as_slice().to_vec(),
                alpha: Alpha::Scalar(alpha),
                vartheta: None,
                alpha2: None,
                diagnostics: crate::estimate::FitDiagnostics {
                    converged: true,
                    ..Default::default()
                },
            };
            let p = with_likelihood(p, rows, Link::Highdim, Some(d))?;
            let m = mle::mle_fit(
                rows,
                Link::Highdim,
                &SolverOptions {
                    dim_scale: Some(d),
                    ..opts
                },
            )?;
            Ok(vec![p, m])
        }
    }
}

/// Read a covariance matrix file as accepted by `--sigma`.
pub fn load_sigma(path: &Path) -> Result<DMatrix<f64>> {
    match resolve_sigma(Some(&path.display().to_string()), &FitConfig::default())? {
        SigmaSource::Known(m) => Ok(m),
        SigmaSource::Estimate(_) => Err(Error::config("sigma", "expected a matrix file")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = r#"{"firms": 300, "periods": 30,
        "model": {"link": "intensity", "beta": [0.5, -0.3], "alpha": 3.5}}"#;

    #[test]
    fn missing_link_names_the_field() {
        let e = SimulateConfig::from_json(r#"{"firms": 1, "periods": 2, "model": {"beta": [1.0], "alpha": 2.0}}"#)
            .unwrap_err();
        match e {
            Error::Config { path, .. } => assert_eq!(path, "model.link"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_firm_config_gives_one_firm() {
        let cfg = SimulateConfig::from_json(
            r#"{"firms": 1, "periods": 5, "model": {"link": "intensity", "beta": [0.1], "alpha": 5.0}}"#,
        )
        .unwrap();
        let p = cmd_simulate(&cfg, 3).unwrap();
        assert_eq!(p.firm_count(), 1);
    }

    #[test]
    fn flag_seed_beats_config_seed() {
        let mut cfg = SimulateConfig::from_json(SIM).unwrap();
        cfg.seed = Some(5);
        let a = cmd_simulate(&cfg, 5).unwrap();
        let b = cmd_simulate(&cfg, 6).unwrap();
        assert_ne!(a.rows().data(), b.rows().data());
    }

    #[test]
    fn both_methods_order_by_likelihood() {
        let cfg = SimulateConfig::from_json(SIM).unwrap();
        let p = cmd_simulate(&cfg, 1).unwrap();
        let r = cmd_fit(&p, Method::Both, &SigmaSource::default(), &FitConfig::default()).unwrap();
        assert!(r[1].diagnostics.log_likelihood >= r[0].diagnostics.log_likelihood);
    }

    #[test]
    fn censoring_without_censor_flags() {
        let cfg = SimulateConfig::from_json(SIM).unwrap();
        let p = cmd_simulate(&cfg, 1).unwrap();
        let e = cmd_fit(&p, Method::Censoring, &SigmaSource::default(), &FitConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NoCensorObserved));
        assert!(e.is_data_error());
    }

    #[test]
    fn sigma_flag_beats_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(&path, "[[2.0, 0.0], [0.0, 3.0]]").unwrap();
        let fc = FitConfig {
            sigma: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            ..Default::default()
        };
        match resolve_sigma(Some(path.to_str().unwrap()), &fc).unwrap() {
            SigmaSource::Known(m) => assert_eq!(m[(1, 1)], 3.0),
            _ => panic!(),
        }
        match resolve_sigma(None, &fc).unwrap() {
            SigmaSource::Known(m) => assert_eq!(m[(1, 1)], 1.0),
            _ => panic!(),
        }
        assert!(matches!(resolve_sigma(Some("estimate"), &fc).unwrap(), SigmaSource::Estimate(_)));
        fs::write(&path, r#"{"sigma": [[1.0, 2.0], [2.0, 1.0]]}"#).unwrap();
        assert!(matches!(resolve_sigma(Some(path.to_str().unwrap()), &fc), Err(Error::Config { .. })));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
