//! Experiment configuration, scenario defaults and intercept calibration.

use serde::{Deserialize, Serialize};

use crate::closedform::RegularizerSpec;
use crate::error::{Error, Result};
use crate::gproc::{CovariateProcessSpec, Dynamics, NamedTransform};
use crate::hazard::{intensity_prob, logit_prob, Alpha, Link, ModelSpec};
use crate::mle::{SolverKind, StopRule};

/// Coefficients of the twelve-covariate design used by most tables: two AR(0.3)
/// common factors followed by ten i.i.d. N(0,1) firm covariates.
pub const TABLE_BETA: [f64; 12] = [-0.2, 0.5, 0.5, 0.2, -1.0, 0.3, -0.2, 0.5, 0.5, 0.2, -0.5, 0.3];

/// Intercept giving roughly 1% defaults per year under the table design.
pub const TABLE_ALPHA: f64 = 8.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Rmse,
    Drift,
    Multiclass,
    Decile,
    Loglik,
    Corruption,
    Misspec,
    Sweep,
    Regularization,
    Seed,
    Highdim,
    Rolling,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Rmse => "rmse",
            ScenarioKind::Drift => "drift",
            ScenarioKind::Multiclass => "multiclass",
            ScenarioKind::Decile => "decile",
            ScenarioKind::Loglik => "loglik",
            ScenarioKind::Corruption => "corruption",
            ScenarioKind::Misspec => "misspec",
            ScenarioKind::Sweep => "sweep",
            ScenarioKind::Regularization => "regularization",
            ScenarioKind::Seed => "seed",
            ScenarioKind::Highdim => "highdim",
            ScenarioKind::Rolling => "rolling",
        }
    }
}

/// Estimators compared by a scenario. `Logit` is the maximum likelihood fit
/// under the logit link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Proposed,
    Mle,
    Logit,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Proposed => "proposed",
            EstimatorKind::Mle => "mle",
            EstimatorKind::Logit => "logit",
        }
    }
}

/// Covariance paired with the closed form: estimated from the panel, or the
/// stationary covariance of the generating process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    #[default]
    Estimate,
    Known,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizePoint {
    pub firms: usize,
    pub periods: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
}

/// How a deleted covariate row is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionMode {
    /// Replace the row by the firm's previous row, keeping its exit flag.
    #[default]
    CarryForward,
    /// Remove the row together with its exit flag.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Noise variance `c²` per coordinate.
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    /// Mean of the noise in case 5.
    #[serde(default = "default_noise_mean")]
    pub shifted_mean: f64,
    /// Subset of cases 1-5 to run.
    #[serde(default = "default_cases")]
    pub cases: Vec<u8>,
    /// Share of firms kept clean in case 4.
    #[serde(default = "default_clean_share")]
    pub clean_share: f64,
    /// Run the two row-deletion experiments.
    #[serde(default = "default_true")]
    pub deletion: bool,
    /// Rows deleted in each deletion experiment. When absent a fraction
    /// `deletion_fraction` of the realized defaults is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deletion_count: Option<usize>,
    #[serde(default = "default_deletion_fraction")]
    pub deletion_fraction: f64,
    #[serde(default)]
    pub deletion_mode: DeletionMode,
}

fn default_noise_var() -> f64 {
    0.25
}
fn default_noise_mean() -> f64 {
    0.1
}
fn default_cases() -> Vec<u8> {
    vec![1, 2, 3, 4, 5]
}
fn default_clean_share() -> f64 {
    0.2
}
fn default_true() -> bool {
    true
}
fn default_deletion_fraction() -> f64 {
    // 1000 deleted rows against roughly 1460 defaults in the reference run
    0.685
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            noise_var: default_noise_var(),
            shifted_mean: default_noise_mean(),
            cases: default_cases(),
            clean_share: default_clean_share(),
            deletion: true,
            deletion_count: None,
            deletion_fraction: default_deletion_fraction(),
            deletion_mode: DeletionMode::CarryForward,
        }
    }
}

/// One omitted-covariate design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecVariant {
    pub name: String,
    /// Generating process; the scenario covariates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<CovariateProcessSpec>,
    /// Full coefficient vector, hidden coordinates included.
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Coordinates withheld from both estimators.
    pub hidden: Vec<usize>,
    /// Correlation of the first two common factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecConfig {
    pub variants: Vec<MisspecVariant>,
}

/// Training and test periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SplitRule {
    /// Train on the first `periods`, test on the next `test_periods`.
    Halves { test_periods: usize },
    /// Expanding training window, test windows of `window` periods starting at
    /// `start`; incomplete final windows are dropped.
    Rolling { start: usize, window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioCheck {
    pub beta: f64,
    pub gamma: f64,
    pub firms: usize,
    pub periods: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `m = γ^{-δ}`.
    pub delta: f64,
    /// `T = γ^{-ζ}`.
    pub zeta: f64,
    pub gammas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    /// Variances of the Gaussian perturbations around the true parameters.
    pub variances: Vec<f64>,
}

/// A scenario description. Every optional field is filled by
/// [`ExperimentConfig::resolve`]; the resolved value is echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    /// Sizes to sweep; overrides `firms`/`periods`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<SizePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<CovariateProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Annual default probability; when set, the intercept is solved so the
    /// average monthly hazard matches it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_annual_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    /// Class shares; firms are assigned to classes in index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_shares: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misspec: Option<MisspecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedConfig>,
    /// Named transform applied to covariates before the closed form in the
    /// decile test (for non-Gaussian covariates).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<NamedTransform>,
}

impl ExperimentConfig {
    /// A config with only the scenario set.
    pub fn new(scenario: ScenarioKind) -> Self {
        ExperimentConfig {
            scenario,
            seed: None,
            firms: None,
            periods: None,
            replications: None,
            grid: None,
            covariates: None,
            model: None,
            target_annual_rate: None,
            estimators: None,
            sigma: None,
            solver: None,
            class_shares: None,
            corruption: None,
            misspec: None,
            regularizer: None,
            split: None,
            sweep: None,
            dims: None,
            seeds: None,
            transform: None,
        }
    }

    /// Parse JSON, reporting the failing field path.
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    /// Fill every unset field with the scenario default. Explicit values win
    /// over `paper_scale` defaults.
    pub fn resolve(&self, paper_scale: bool) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        let s = c.scenario;
        let (firms, periods, reps) = default_size(s, paper_scale);
        c.seed.get_or_insert(0);
        c.replications.get_or_insert(reps);
        // sweep sizes follow from γ
        if c.grid.is_none() && s != ScenarioKind::Sweep {
            let explicit = c.firms.is_some() || c.periods.is_some();
            c.grid = Some(match default_grid(s, paper_scale) {
                Some(g) if !explicit => g,
                _ => vec![SizePoint {
                    firms: c.firms.unwrap_or(firms),
                    periods: c.periods.unwrap_or(periods),
                }],
            });
        }
        if let Some(first) = c.grid.as_ref().and_then(|g| g.first().copied()) {
            c.firms.get_or_insert(first.firms);
            c.periods.get_or_insert(first.periods);
        }
        c.covariates.get_or_insert_with(|| default_covariates(s));
        c.estimators.get_or_insert_with(|| default_estimators(s));
        c.sigma.get_or_insert(SigmaMode::Estimate);
        c.solver.get_or_insert_with(|| default_solver(s));
        if c.model.is_none() {
            c.model = Some(default_model(s, c.covariates.as_ref().unwrap().dim()));
        }
        if s == ScenarioKind::Multiclass && c.class_shares.is_none() {
            c.class_shares = Some(vec![0.5, 0.5]);
        }
        match s {
            ScenarioKind::Corruption => {
                let mut k = c.corruption.take().unwrap_or_default();
                if k.deletion_count.is_none() && paper_scale {
                    k.deletion_count = Some(1000);
                }
                c.corruption = Some(k);
            }
            ScenarioKind::Misspec => {
                c.misspec.get_or_insert_with(default_misspec);
            }
            ScenarioKind::Regularization => {
                c.regularizer.get_or_insert(RegularizerSpec::Ridge { lambda: 1.0, z: None });
            }
            ScenarioKind::Decile => {
                let t = c.periods.unwrap();
                c.split.get_or_insert(SplitRule::Halves { test_periods: t });
            }
            ScenarioKind::Rolling => {
                c.split.get_or_insert(SplitRule::Rolling { start: 60, window: 12 });
            }
            ScenarioKind::Sweep => {
                c.sweep.get_or_insert_with(|| default_sweep(paper_scale));
            }
            ScenarioKind::Highdim => {
                c.dims.get_or_insert_with(|| vec![8, 12, 18, 24]);
            }
            ScenarioKind::Seed => {
                c.seeds.get_or_insert_with(|| SeedConfig { variances: vec![1.0, 3.0] });
            }
            _ => {}
        }
        if let Some(rate) = c.target_annual_rate {
            let cov = c.covariates.as_ref().unwrap();
            let model = c.model.as_mut().unwrap();
            let a = alpha_for_rate(model, cov, rate)?;
            model.alpha = match &model.alpha {
                Alpha::Scalar(_) => Alpha::Scalar(a),
                Alpha::PerClass(v) => Alpha::PerClass(vec![a; v.len()]),
            };
        }
        c.validate()?;
        Ok(c)
    }

    /// Check a resolved config.
    pub fn validate(&self) -> Result<()> {
        let reps = self.replications.unwrap_or(1);
        if reps == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if let Some(g) = &self.grid {
            if g.is_empty() {
                return Err(Error::config("grid", "must not be empty"));
            }
            if let Some(i) = g.iter().position(|p| p.firms == 0 || p.periods == 0) {
                return Err(Error::config(format!("grid[{}]", i), "firms and periods must be positive"));
            }
        }
        if let Some(cov) = &self.covariates {
            cov.validate().map_err(|e| Error::config("covariates", e.to_string()))?;
            if let Some(model) = &self.model {
                if self.scenario != ScenarioKind::Highdim && model.dim() != cov.dim() {
                    return Err(Error::config(
                        "model.beta",
                        format!("has {} entries, covariates have {}", model.dim(), cov.dim()),
                    ));
                }
            }
        }
        if let Some(model) = &self.model {
            model.validate().map_err(|e| Error::config("model", e.to_string()))?;
        }
        if let Some(shares) = &self.class_shares {
            if shares.is_empty() || shares.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::config("class_shares", "shares must be positive"));
            }
            if let Some(Alpha::PerClass(a)) = self.model.as_ref().map(|m| &m.alpha) {
                if a.len() != shares.len() {
                    return Err(Error::config(
                        "class_shares",
                        format!("{} shares for {} class intercepts", shares.len(), a.len()),
                    ));
                }
            }
        }
        if let Some(r) = self.target_annual_rate {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config("target_annual_rate", "must lie in (0, 1)"));
            }
        }
        if let Some(k) = &self.corruption {
            if !(k.noise_var >= 0.0) {
                return Err(Error::config("corruption.noise_var", "must be non-negative"));
            }
            if let Some(c) = k.cases.iter().find(|c| !(1..=5).contains(*c)) {
                return Err(Error::config("corruption.cases", format!("unknown case {}", c)));
            }
            if !(k.clean_share > 0.0 && k.clean_share < 1.0) {
                return Err(Error::config("corruption.clean_share", "must lie in (0, 1)"));
            }
        }
        if let Some(ms) = &self.misspec {
            for (i, v) in ms.variants.iter().enumerate() {
                let cov = v.covariates.as_ref().or(self.covariates.as_ref());
                let d = cov.map_or(v.beta.len(), |c| c.dim());
                if v.beta.len() != d {
                    return Err(Error::config(format!("misspec.variants[{}].beta", i), "length differs from covariates"));
                }
                if v.hidden.is_empty() || v.hidden.iter().any(|&h| h >= d) || v.hidden.len() >= d {
                    return Err(Error::config(
                        format!("misspec.variants[{}].hidden", i),
                        "indices must be valid and leave at least one visible covariate",
                    ));
                }
                if let Some(rho) = v.rho {
                    if !(rho.abs() < 1.0) || cov.is_some_and(|c| c.common_dim < 2) {
                        return Err(Error::config(
                            format!("misspec.variants[{}].rho", i),
                            "needs |rho| < 1 and two common factors",
                        ));
                    }
                }
            }
        }
        if let Some(split) = &self.split {
            let t = self.periods.unwrap_or(0);
            match *split {
                SplitRule::Halves { test_periods } if test_periods == 0 => {
                    return Err(Error::config("split.test_periods", "must be positive"));
                }
                SplitRule::Rolling { start, window } if window == 0 || start == 0 || (t > 0 && start + window > t) => {
                    return Err(Error::config("split", "rolling windows must fit inside the panel"));
                }
                _ => {}
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.gammas.len() < 2 || sw.gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
                return Err(Error::config("sweep.gammas", "need at least two values in (0, 1)"));
            }
        }
        if let Some(d) = &self.dims {
            if d.is_empty() || d.contains(&0) {
                return Err(Error::config("dims", "must be non-empty and positive"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &[SizePoint] {
        self.grid.as_deref().unwrap_or(&[])
    }

    pub fn model(&self) -> &ModelSpec {
        self.model.as_ref().expect("resolved config")
    }

    pub fn covariates(&self) -> &CovariateProcessSpec {
        self.covariates.as_ref().expect("resolved config")
    }
}

/// Deserialize JSON into `T`, turning serde errors into [`Error::Config`]
/// with the dotted path of the offending field. A missing field is reported
/// at its own path, e.g. `model.link`.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let msg = e.inner().to_string();
        if let Some(rest) = msg.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                path = if path == "." || path.is_empty() {
                    field.to_string()
                } else {
                    format!("{}.{}", path, field)
                };
            }
        }
        Error::config(path, msg)
    })
}

fn default_size(s: ScenarioKind, full: bool) -> (usize, usize, usize) {
    use ScenarioKind::*;
    match (s, full) {
        (Decile, true) => (10_000, 100, 20),
        (Loglik | Corruption | Misspec | Seed, true) => (10_000, 200, 100),
        (Highdim | Regularization | Rmse | Drift | Multiclass, true) => (5000, 200, 100),
        (Rolling, true) => (10_000, 240, 1),
        (Sweep, _) => (0, 0, 30),
        (Rolling, false) => (2000, 120, 1),
        (Decile, false) => (2000, 50, 5),
        _ => (2000, 100, 20),
    }
}

fn default_grid(s: ScenarioKind, full: bool) -> Option<Vec<SizePoint>> {
    let p = |firms, periods| SizePoint { firms, periods };
    match (s, full) {
        (ScenarioKind::Rmse | ScenarioKind::Drift | ScenarioKind::Multiclass, true) => Some(vec![
            p(5000, 200),
            p(7000, 200),
            p(10_000, 200),
            p(13_000, 200),
            p(5000, 400),
            p(5000, 600),
            p(5000, 800),
        ]),
        (ScenarioKind::Regularization, true) => Some(vec![p(5000, 200), p(10_000, 200), p(13_000, 200)]),
        _ => None,
    }
}

fn default_covariates(s: ScenarioKind) -> CovariateProcessSpec {
    match s {
        ScenarioKind::Drift => {
            let mut c = CovariateProcessSpec::standard(2, 10);
            c.drift = Some(crate::gproc::Drift {
                amplitude: 1.0,
                frequency: 1.0,
            });
            c
        }
        // i.i.d. N(0, I), where the noise limit is exactly β/(1+c²)
        ScenarioKind::Corruption => CovariateProcessSpec::standard(0, 12),
        ScenarioKind::Misspec => CovariateProcessSpec {
            normalize: true,
            ..CovariateProcessSpec::standard(2, 1)
        },
        ScenarioKind::Sweep => CovariateProcessSpec::standard(1, 0),
        ScenarioKind::Highdim => CovariateProcessSpec::standard(0, 8),
        _ => CovariateProcessSpec::standard(2, 10),
    }
}

fn default_model(s: ScenarioKind, d: usize) -> ModelSpec {
    let table = || ModelSpec::intensity(TABLE_BETA.to_vec(), TABLE_ALPHA);
    match s {
        ScenarioKind::Multiclass => ModelSpec {
            alpha: Alpha::PerClass(vec![8.5, 8.0]),
            ..table()
        },
        // the 3%/yr intercept; more defaults sharpen the per-coordinate ratio
        ScenarioKind::Corruption => ModelSpec::intensity(TABLE_BETA.to_vec(), 7.2),
        ScenarioKind::Misspec => ModelSpec::intensity(vec![-0.2, 0.5, 0.5], 7.5),
        ScenarioKind::Sweep => ModelSpec::intensity(vec![0.5; d], 0.0),
        ScenarioKind::Highdim => ModelSpec {
            link: Link::Highdim,
            dim_scale: Some(d),
            ..ModelSpec::intensity(vec![1.0; d], 7.5)
        },
        _ if d == TABLE_BETA.len() => table(),
        _ => ModelSpec::intensity(vec![0.5; d], TABLE_ALPHA),
    }
}

fn default_estimators(s: ScenarioKind) -> Vec<EstimatorKind> {
    match s {
        ScenarioKind::Rolling => vec![EstimatorKind::Proposed, EstimatorKind::Mle, EstimatorKind::Logit],
        ScenarioKind::Sweep => vec![EstimatorKind::Proposed],
        _ => vec![EstimatorKind::Proposed, EstimatorKind::Mle],
    }
}

fn default_solver(s: ScenarioKind) -> SolverConfig {
    match s {
        ScenarioKind::Seed => SolverConfig {
            solver: SolverKind::Bfgs,
            max_iter: Some(2000),
            grad_tol: None,
            stop: Some(StopRule::LikelihoodDelta { tol: 1e-4 }),
        },
        _ => SolverConfig::default(),
    }
}

fn default_misspec() -> MisspecConfig {
    let common_pair = CovariateProcessSpec {
        normalize: true,
        dynamics: Dynamics::Ar1 { coeff: 0.3 },
        ..CovariateProcessSpec::standard(2, 0)
    };
    let with_firm = CovariateProcessSpec {
        normalize: true,
        ..CovariateProcessSpec::standard(2, 1)
    };
    MisspecConfig {
        variants: vec![
            MisspecVariant {
                name: "correlated".into(),
                covariates: Some(common_pair),
                beta: vec![-0.2, 0.5],
                alpha: Some(7.5),
                hidden: vec![1],
                rho: Some(0.5),
            },
            MisspecVariant {
                name: "small".into(),
                covariates: Some(with_firm.clone()),
                beta: vec![-0.2, 0.5, 0.5],
                alpha: Some(7.5),
                hidden: vec![1],
                rho: Some(0.0),
            },
            MisspecVariant {
                name: "large".into(),
                covariates: Some(with_firm),
                beta: vec![-0.2, 2.0, 0.5],
                alpha: Some(7.5),
                hidden: vec![1],
                rho: Some(0.0),
            },
        ],
    }
}

fn default_sweep(full: bool) -> SweepConfig {
    SweepConfig {
        delta: 2.0,
        zeta: 0.5,
        gammas: vec![1e-2, 1e-3, 1e-4, 1e-5],
        ratio: Some(RatioCheck {
            beta: 1.0,
            gamma: 1e-3,
            firms: 2000,
            periods: 500,
            replications: if full { 400 } else { 200 },
        }),
    }
}

/// Monthly hazard matching an annual default probability.
pub fn monthly_rate(annual: f64) -> f64 {
    1.0 - (1.0 - annual).powf(1.0 / 12.0)
}

/// Average default probability `E p(βᵀV − α)` for `βᵀV ~ N(0, s²)`, by
/// Simpson's rule on `[-10s, 10s]`.
pub fn mean_default_prob(link: Link, s: f64, alpha: f64) -> f64 {
    let p = |x: f64| match link {
        Link::Logit => logit_prob(x),
        _ => intensity_prob(x),
    };
    if s <= 0.0 {
        return p(-alpha);
    }
    let n = 2000;
    let h = 20.0 / n as f64;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..=n {
        let z = -10.0 + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * phi(z) * p(s * z - alpha);
    }
    acc * h / 3.0
}

/// Intercept that makes the stationary average hazard equal the monthly
/// equivalent of `annual`.
pub fn alpha_for_rate(model: &ModelSpec, cov: &CovariateProcessSpec, annual: f64) -> Result<f64> {
    if !(annual > 0.0 && annual < 1.0) {
        return Err(Error::config("target_annual_rate", "must lie in (0, 1)"));
    }
    let sigma = cov.stationary_cov()?;
    if sigma.nrows() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: model.dim(),
        });
    }
    let b = nalgebra::DVector::from_column_slice(&model.beta) * model.scale();
    let s = (b.dot(&(&sigma * &b))).max(0.0).sqrt();
    let target = monthly_rate(annual);
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_default_prob(model.link, s, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_scenario_is_a_config_error() {
        let err = ExperimentConfig::from_json(r#"{"scenario": "nope"}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "scenario"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_link_names_the_field() {
        let text = r#"{"scenario": "rmse", "model": {"beta": [1.0], "alpha": 5.0}}"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "model.link"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn explicit_sizes_beat_full_scale_defaults() {
        let mut c = ExperimentConfig::new(ScenarioKind::Rmse);
        c.firms = Some(300);
        let r = c.resolve(true).unwrap();
        assert_eq!(r.grid(), &[SizePoint { firms: 300, periods: 200 }]);
        let r = ExperimentConfig::new(ScenarioKind::Rmse).resolve(true).unwrap();
        assert_eq!(r.grid().len(), 7);
        assert_eq!(r.replications, Some(100));
    }

    #[test]
    fn resolve_is_idempotent() {
        for s in [
            ScenarioKind::Rmse,
            ScenarioKind::Corruption,
            ScenarioKind::Misspec,
            ScenarioKind::Sweep,
            ScenarioKind::Decile,
            ScenarioKind::Rolling,
        ] {
            let once = ExperimentConfig::new(s).resolve(false).unwrap();
            assert_eq!(once.resolve(false).unwrap(), once);
            let text = serde_json::to_string(&once).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), once);
        }
    }

    #[test]
    fn zero_replications_rejected() {
        let mut c = ExperimentConfig::new(ScenarioKind::Rmse);
        c.replications = Some(0);
        assert!(matches!(c.resolve(false), Err(Error::Config { .. })));
    }

    #[test]
    fn bad_hidden_index_rejected() {
        let mut c = ExperimentConfig::new(ScenarioKind::Misspec);
        let mut m = default_misspec();
        m.variants[0].hidden = vec![5];
        c.misspec = Some(m);
        assert!(matches!(c.resolve(false), Err(Error::Config { .. })));
    }

    #[test]
    fn table_alpha_matches_one_percent() {
        // the table pair (β, 8.5) is quoted as about 1% a year
        let model = ModelSpec::intensity(TABLE_BETA.to_vec(), TABLE_ALPHA);
        let a = alpha_for_rate(&model, &CovariateProcessSpec::standard(2, 10), 0.01).unwrap();
        assert!((a - TABLE_ALPHA).abs() < 0.25, "alpha {a}");
    }

    #[test]
    fn mean_prob_against_closed_form_moment() {
        // E exp(sZ - a) = exp(s²/2 - a) dominates for tiny rates
        let (s, a): (f64, f64) = (0.8, 12.0);
        let approx = (0.5 * s * s - a).exp();
        let p = mean_default_prob(Link::Intensity, s, a);
        assert!((p / approx - 1.0).abs() < 1e-4);
    }
}
