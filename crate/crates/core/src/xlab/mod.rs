//! Simulation studies: each scenario simulates panels from a known model,
//! fits the estimators and reports errors against the truth.
//!
//! Replications run one after another, each with a seed derived from the
//! master seed and its index; the parallelism lives inside simulation and
//! likelihood evaluation. Reports are therefore identical for any worker
//! count.

mod config;
mod corruption;
mod decile;
mod misspec;
mod report;
mod rmse;
mod rolling;
mod scenarios;
mod sweep;

pub use config::*;
pub use corruption::{add_noise, delete_rows, run_corruption_experiment};
pub use decile::{overlap_curve, run_decile_overlap_test};
pub use misspec::{misspecification_limit, run_misspecification_experiment};
pub use report::*;
pub use rmse::run_rmse_experiment;
pub use rolling::{decile_allocation, run_rolling_test};
pub use scenarios::{run_highdim_experiment, run_loglik_score_test, run_regularization_comparison, run_seed_speedup};
pub use sweep::{predicted_slope, run_rate_sweep, sweep_panel_moments, StreamedMoments};

use nalgebra::DVector;

use crate::closedform::{self, SigmaSource};
use crate::error::{Error, Result};
use crate::estimate::EstimateResult;
use crate::gproc::{simulate_covariates, CovariateProcessSpec};
use crate::hazard::{simulate_exits, Link, ModelSpec};
use crate::mle::{self, InitPoint, SolverOptions};
use crate::panel::{Panel, Rows};
use crate::rng::{derive, replication_seed};

/// Resolve `cfg` and run its scenario.
pub fn run_experiment(cfg: &ExperimentConfig, paper_scale: bool) -> Result<ExperimentReport> {
    let cfg = cfg.resolve(paper_scale)?;
    log::info!("running scenario {}", cfg.scenario.name());
    let mut report = match cfg.scenario {
        ScenarioKind::Rmse | ScenarioKind::Drift | ScenarioKind::Multiclass => rmse::run_rmse_experiment(&cfg)?,
        ScenarioKind::Decile => run_decile_overlap_test(&cfg)?,
        ScenarioKind::Loglik => scenarios::run_loglik_score_test(&cfg)?,
        ScenarioKind::Corruption => corruption::run_corruption_experiment(&cfg)?,
        ScenarioKind::Misspec => misspec::run_misspecification_experiment(&cfg)?,
        ScenarioKind::Sweep => run_rate_sweep(&cfg)?,
        ScenarioKind::Regularization => scenarios::run_regularization_comparison(&cfg)?,
        ScenarioKind::Seed => scenarios::run_seed_speedup(&cfg)?,
        ScenarioKind::Highdim => scenarios::run_highdim_experiment(&cfg)?,
        ScenarioKind::Rolling => run_rolling_test(&cfg)?,
    };
    report.config = serde_json::to_value(&cfg)?;
    Ok(report)
}


/// Label of a grid point.
pub fn group_label(p: SizePoint) -> String {
    format!("m={},T={}", p.firms, p.periods)
}

/// Class of each firm: firms are split in index order by `shares`.
pub fn assign_classes(m: usize, shares: &[f64]) -> Vec<u32> {
    let total: f64 = shares.iter().sum();
    let mut bounds = Vec::with_capacity(shares.len());
    let mut acc = 0.0;
    for s in shares {
        acc += s / total;
        bounds.push(acc);
    }
    (0..m)
        .map(|i| {
            let u = (i as f64 + 0.5) / m as f64;
            bounds.iter().position(|&b| u < b).unwrap_or(shares.len() - 1) as u32
        })
        .collect()
}

/// Simulate covariates and exits for one replication.
pub fn simulate_panel(
    cov: &CovariateProcessSpec,
    model: &ModelSpec,
    m: usize,
    t: usize,
    classes: Option<&[u32]>,
    seed: u64,
) -> Result<Panel> {
    let block = simulate_covariates(cov, m, t, None, seed)?;
    let (panel, diag) = simulate_exits(&block, model, classes, seed)?;
    if diag.infinite_hazard > 0 {
        log::warn!("{} firm-periods hit the exponent cap", diag.infinite_hazard);
    }
    Ok(panel)
}

/// Shared estimator settings of a scenario.
#[derive(Debug, Clone)]
pub struct Fitter {
    pub sigma: SigmaSource,
    pub solver: SolverOptions,
    pub dim_scale: Option<usize>,
}

impl Fitter {
    /// Settings from a resolved config. The likelihood fit starts from the
    /// closed form, so each ascent step can only improve on it.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let sigma = match cfg.sigma.unwrap_or_default() {
            SigmaMode::Estimate => SigmaSource::default(),
            SigmaMode::Known => SigmaSource::Known(cfg.covariates().stationary_cov()?),
        };
        let sc = cfg.solver.clone().unwrap_or_default();
        let mut solver = SolverOptions {
            solver: sc.solver,
            init: InitPoint::Proposed,
            sigma: sigma.clone(),
            dim_scale: cfg.model().dim_scale,
            ..SolverOptions::default()
        };
        if let Some(n) = sc.max_iter {
            solver.max_iter = n;
        }
        if let Some(g) = sc.grad_tol {
            solver.grad_tol = g;
        }
        if let Some(s) = sc.stop {
            solver.stop = s;
        }
        Ok(Fitter {
            sigma,
            solver,
            dim_scale: cfg.model().dim_scale,
        })
    }

    pub fn fit(&self, kind: EstimatorKind, rows: &Rows, link: Link) -> Result<EstimateResult> {
        match kind {
            EstimatorKind::Proposed => closedform::proposed(rows, &self.sigma),
            EstimatorKind::Mle => mle::mle_fit(rows, link, &self.solver),
            EstimatorKind::Logit => mle::mle_fit(rows, Link::Logit, &self.solver),
        }
    }

    /// Link under which an estimator's output is read.
    pub fn link_of(kind: EstimatorKind, model_link: Link) -> Link {
        match kind {
            EstimatorKind::Logit => Link::Logit,
            _ => model_link,
        }
    }
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Run `reps` replications of `body` sequentially. Errors mark the record as
/// failed and drop its values.
pub fn replicate<F>(group: &str, master: u64, reps: usize, mut body: F) -> Vec<ReplicationRecord>
where
    F: FnMut(u64, &mut ReplicationRecord) -> Result<()>,
{
    (0..reps)
        .map(|r| {
            let seed = replication_seed(master, r);
            let mut rec = ReplicationRecord::new(group, r, seed);
            if let Err(e) = body(seed, &mut rec) {
                log::warn!("{} replication {} failed: {}", group, r, e);
                rec.ok = false;
                rec.error = Some(e.to_string());
                rec.values.clear();
                rec.estimates.clear();
            }
            rec
        })
        .collect()
}

/// Master seed of grid point `g`.
pub fn group_seed(master: u64, g: usize) -> u64 {
    derive(master, g as u64)
}

/// `(Σ + λZ)⁻¹Σβ`, the limit of the ridge-regularized estimators.
pub fn ridge_limit(sigma: &nalgebra::DMatrix<f64>, z: &nalgebra::DMatrix<f64>, lambda: f64, beta: &[f64]) -> Result<DVector<f64>> {
    let b = DVector::from_column_slice(beta);
    crate::linalg::lu_solve(&(sigma + z * lambda), &(sigma * b))
}

fn require_defaults(rows: &Rows) -> Result<()> {
    if rows.count(crate::panel::Outcome::Default) == 0 {
        return Err(Error::NoDefaultsObserved);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_follow_shares() {
        let c = assign_classes(10, &[0.5, 0.5]);
        assert_eq!(c, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let c = assign_classes(4, &[1.0]);
        assert_eq!(c, vec![0; 4]);
    }

    #[test]
    fn failed_replications_are_recorded() {
        let recs = replicate("g", 1, 3, |_, rec| {
            rec.set("x", 1.0);
            if rec.index == 1 {
                Err(Error::NoDefaultsObserved)
            } else {
                Ok(())
            }
        });
        assert!(recs[0].ok && !recs[1].ok && recs[2].ok);
        assert!(recs[1].values.is_empty());
        assert_eq!(mean_from_records(&recs, "g", "x"), 1.0);
    }
}
