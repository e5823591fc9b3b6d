//! Log-likelihood score, regularization, seed speed-up and high-dimensional
//! studies.

use std::sync::Arc;

use super::*;
use crate::closedform::{moment_statistics, regularized_closed_form, Penalty, RidgePenalty};
use crate::hazard::Alpha;
use crate::mle::{estimate_model, log_likelihood};
use crate::panel::Outcome;
use crate::rng;

/// Log-likelihood of both estimates, per row and per default. The likelihood
/// fit starts at the closed form and only ascends, so `LL(MLE) ≥ LL(proposed)`
/// is checked as a hard invariant.
pub fn run_loglik_score_test(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    let model = cfg.model();
    let reps = cfg.replications.unwrap_or(1);
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut table = ReportTable::new(
        "loglik",
        &[
            "ll_row_proposed",
            "ll_row_mle",
            "ll_default_proposed",
            "ll_default_mle",
            "mean_relative_gap",
            "max_relative_gap",
            "dominance_rate",
        ],
    );
    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(cfg.covariates(), model, point.firms, point.periods, None, seed)?;
            let rows = panel.rows();
            require_defaults(rows)?;
            let n = rows.len() as f64;
            let d = rows.count(Outcome::Default) as f64;
            let prop = fitter.fit(EstimatorKind::Proposed, rows, model.link)?;
            let ml = fitter.fit(EstimatorKind::Mle, rows, model.link)?;
            let lp = log_likelihood(rows, &estimate_model(&prop, model.link, fitter.dim_scale))?;
            let lm = log_likelihood(rows, &estimate_model(&ml, model.link, fitter.dim_scale))?;
            rec.set("ll_row_proposed", lp / n);
            rec.set("ll_row_mle", lm / n);
            rec.set("ll_default_proposed", lp / d);
            rec.set("ll_default_mle", lm / d);
            rec.set("relative_gap", (lm - lp) / lm.abs());
            rec.set("dominates", if lm >= lp - 1e-9 * lm.abs() { 1.0 } else { 0.0 });
            Ok(())
        });
        let mean = |k: &str| mean_from_records(&records, &group, k);
        let max_gap = records
            .iter()
            .filter_map(|r| r.get("relative_gap"))
            .fold(f64::NEG_INFINITY, f64::max);
        let row = vec![
            mean("ll_row_proposed"),
            mean("ll_row_mle"),
            mean("ll_default_proposed"),
            mean("ll_default_mle"),
            mean("relative_gap"),
            max_gap,
            mean("dominates"),
        ];
        for (c, v) in table.columns.clone().iter().zip(&row) {
            report.set_aggregate(&group, c, *v);
        }
        if records.iter().any(|r| r.get("dominates") == Some(0.0)) {
            return Err(Error::InvariantViolation(format!(
                "{}: likelihood at the MLE fell below the closed form",
                group
            )));
        }
        table.push(group.clone(), row);
        report.absorb(records);
    }
    report.tables.push(table);
    Ok(report)
}

/// Ridge-regularized closed form (P) and likelihood (M) against `β/2` and the
/// exact limit `(Σ + λZ)⁻¹Σβ`.
pub fn run_regularization_comparison(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    let model = cfg.model();
    let d = model.dim();
    let reg = cfg.regularizer.clone().unwrap_or_default();
    let penalty = reg.to_penalty(d)?;
    let (z, lambda) = match &penalty {
        Penalty::Ridge { z, lambda } => (z.clone(), *lambda),
        Penalty::None => (nalgebra::DMatrix::identity(d, d), 0.0),
        _ => return Err(Error::config("regularizer", "comparison needs a ridge or no regularizer")),
    };
    let limit = ridge_limit(&cfg.covariates().stationary_cov()?, &z, lambda, &model.beta)?;
    let half: Vec<f64> = model.beta.iter().map(|b| b / (1.0 + lambda)).collect();
    let generic = Penalty::Custom {
        u: Arc::new(RidgePenalty { z: z.clone() }),
        lambda,
    };
    let mut solver = fitter.solver.clone();
    solver.penalty = penalty.clone();
    let reps = cfg.replications.unwrap_or(1);
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut table = ReportTable::new(
        "regularization",
        &[
            "firms",
            "periods",
            "rmse_m",
            "rmse_p",
            "rmse_m_limit",
            "rmse_p_limit",
            "p_worse_share",
            "max_closed_vs_generic",
        ],
    );
    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(cfg.covariates(), model, point.firms, point.periods, None, seed)?;
            let rows = panel.rows();
            require_defaults(rows)?;
            let sigma = fitter.sigma.resolve(rows)?;
            let what = moment_statistics(rows).what()?;
            let p = regularized_closed_form(&what, &sigma.sigma, &penalty)?;
            let p_generic = regularized_closed_form(&what, &sigma.sigma, &generic)?;
            let m = mle::mle_fit(rows, model.link, &solver)?;
            let pb = p.beta.as_slice();
            rec.set("sqerr_p", sq_dist(pb, &half));
            rec.set("sqerr_m", sq_dist(&m.beta, &half));
            rec.set("sqerr_p_limit", sq_dist(pb, limit.as_slice()));
            rec.set("sqerr_m_limit", sq_dist(&m.beta, limit.as_slice()));
            rec.set("p_worse", if sq_dist(pb, &half) >= sq_dist(&m.beta, &half) { 1.0 } else { 0.0 });
            rec.set("closed_vs_generic", (&p.beta - &p_generic.beta).amax());
            rec.estimates.insert("beta_p".into(), pb.to_vec());
            rec.estimates.insert("beta_m".into(), m.beta);
            Ok(())
        });
        let gap = records
            .iter()
            .filter_map(|r| r.get("closed_vs_generic"))
            .fold(0.0, f64::max);
        let row = vec![
            point.firms as f64,
            point.periods as f64,
            rmse_from_records(&records, &group, "sqerr_m"),
            rmse_from_records(&records, &group, "sqerr_p"),
            rmse_from_records(&records, &group, "sqerr_m_limit"),
            rmse_from_records(&records, &group, "sqerr_p_limit"),
            mean_from_records(&records, &group, "p_worse"),
            gap,
        ];
        for (c, v) in table.columns.clone().iter().zip(&row).skip(2) {
            report.set_aggregate(&group, c, *v);
        }
        table.push(group.clone(), row);
        report.absorb(records);
    }
    report.tables.push(table);
    Ok(report)
}

/// Likelihood iterations from the closed-form seed and from Gaussian
/// perturbations of the truth.
pub fn run_seed_speedup(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    let model = cfg.model();
    let variances = cfg.seeds.as_ref().map(|s| s.variances.clone()).unwrap_or_default();
    let reps = cfg.replications.unwrap_or(1);
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut columns = vec!["iterations_proposed".to_string()];
    for v in &variances {
        columns.push(format!("iterations_gauss_{}", v));
    }
    for v in &variances {
        columns.push(format!("ratio_gauss_{}", v));
    }
    columns.push("proposed_within_10pct".into());
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ReportTable::new("seed_iterations", &cols);
    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(cfg.covariates(), model, point.firms, point.periods, None, seed)?;
            let rows = panel.rows();
            require_defaults(rows)?;
            let k = rows.class_count();
            let base = fitter.solver.clone();
            let fit = mle::mle_fit(rows, model.link, &InitPoint::Proposed.with(&base))?;
            let ip = fit.diagnostics.iterations as f64;
            rec.set("iterations_proposed", ip);
            rec.set("ll_proposed", fit.diagnostics.log_likelihood);
            let mut best = f64::INFINITY;
            for (j, v) in variances.iter().enumerate() {
                let init = InitPoint::GaussianPerturbed {
                    center: Some((model.beta.clone(), model.alpha.to_vec(k))),
                    scale: v.sqrt(),
                    seed: rng::derive(seed, j as u64 + 1),
                };
                let fit = mle::mle_fit(rows, model.link, &init.with(&base))?;
                let it = fit.diagnostics.iterations as f64;
                best = best.min(it);
                rec.set(format!("iterations_gauss_{}", v), it);
                rec.set(format!("converged_gauss_{}", v), fit.diagnostics.converged as u8 as f64);
            }
            rec.set("proposed_within_10pct", if ip <= 1.1 * best { 1.0 } else { 0.0 });
            Ok(())
        });
        let ip = mean_from_records(&records, &group, "iterations_proposed");
        let mut row = vec![ip];
        let mut ratios = Vec::new();
        for v in &variances {
            let it = mean_from_records(&records, &group, &format!("iterations_gauss_{}", v));
            row.push(it);
            ratios.push(it / ip);
        }
        row.extend(ratios);
        row.push(mean_from_records(&records, &group, "proposed_within_10pct"));
        for (c, v) in columns.iter().zip(&row) {
            report.set_aggregate(&group, c, *v);
        }
        table.push(group.clone(), row);
        report.absorb(records);
    }
    report.tables.push(table);
    Ok(report)
}

impl InitPoint {
    fn with(self, base: &SolverOptions) -> SolverOptions {
        SolverOptions {
            init: self,
            ..base.clone()
        }
    }
}

/// `β = 1`, `p = exp(βᵀV/√d − α)` over a list of dimensions, i.i.d. N(0, I)
/// covariates.
pub fn run_highdim_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let base = Fitter::from_config(cfg)?;
    let estimators = cfg.estimators.clone().unwrap_or_default();
    let dims = cfg.dims.clone().unwrap_or_default();
    let alpha = cfg.model().alpha.get(0);
    let reps = cfg.replications.unwrap_or(1);
    let point = cfg.grid()[0];
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut columns = vec!["d".to_string()];
    for e in &estimators {
        columns.push(format!("rmse_beta_{}", e.name()));
        columns.push(format!("rmse_alpha_{}", e.name()));
    }
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ReportTable::new("highdim", &cols);
    let mut curves: Vec<Vec<f64>> = vec![Vec::new(); estimators.len()];
    for (g, &d) in dims.iter().enumerate() {
        let group = format!("d={}", d);
        let cov = CovariateProcessSpec::standard(0, d);
        let model = ModelSpec {
            link: Link::Highdim,
            beta: vec![1.0; d],
            alpha: Alpha::Scalar(alpha),
            vartheta: None,
            alpha2: None,
            dim_scale: Some(d),
        };
        let mut solver = base.solver.clone();
        solver.dim_scale = Some(d);
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(&cov, &model, point.firms, point.periods, None, seed)?;
            let rows = panel.rows();
            require_defaults(rows)?;
            for &e in &estimators {
                let (b, a) = match e {
                    EstimatorKind::Proposed => {
                        let (b, a) = closedform::closed_form_highdim(rows, d, None)?;
                        (b.as_slice().to_vec(), a)
                    }
                    _ => {
                        let fit = mle::mle_fit(rows, Link::Highdim, &solver)?;
                        (fit.beta, fit.alpha.get(0))
                    }
                };
                rec.set(format!("sqerr_beta_{}", e.name()), sq_dist(&b, &model.beta));
                rec.set(format!("sqerr_alpha_{}", e.name()), (a - alpha).powi(2));
            }
            Ok(())
        });
        let mut row = vec![d as f64];
        for (i, e) in estimators.iter().enumerate() {
            let rb = rmse_from_records(&records, &group, &format!("sqerr_beta_{}", e.name()));
            let ra = rmse_from_records(&records, &group, &format!("sqerr_alpha_{}", e.name()));
            report.set_aggregate(&group, &format!("rmse_beta_{}", e.name()), rb);
            report.set_aggregate(&group, &format!("rmse_alpha_{}", e.name()), ra);
            row.push(rb);
            row.push(ra);
            curves[i].push(rb);
        }
        table.push(group.clone(), row);
        report.absorb(records);
    }
    let logd: Vec<f64> = dims.iter().map(|&d| (d as f64).ln()).collect();
    for (e, curve) in estimators.iter().zip(&curves) {
        let monotone = curve.windows(2).all(|w| w[0] < w[1]);
        report.set_aggregate("all", &format!("monotone_{}", e.name()), monotone as u8 as f64);
        if dims.len() >= 2 {
            let logr: Vec<f64> = curve.iter().map(|r| r.ln()).collect();
            report.set_aggregate("all", &format!("dim_exponent_{}", e.name()), ols_slope(&logd, &logr));
        }
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(s: ScenarioKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(s);
        c.firms = Some(400);
        c.periods = Some(60);
        c.replications = Some(2);
        if s != ScenarioKind::Highdim {
            c.model = Some(ModelSpec::intensity(config::TABLE_BETA.to_vec(), 5.0));
        } else {
            c.model = Some(ModelSpec {
                alpha: Alpha::Scalar(4.5),
                ..ModelSpec::intensity(vec![1.0; 8], 0.0)
            });
            c.dims = Some(vec![4, 8]);
        }
        c.resolve(false).unwrap()
    }

    #[test]
    fn loglik_dominance_holds() {
        let r = run_loglik_score_test(&small(ScenarioKind::Loglik)).unwrap();
        let g = "m=400,T=60";
        assert_eq!(r.aggregate(g, "dominance_rate"), Some(1.0));
        assert!(r.aggregate(g, "mean_relative_gap").unwrap() >= 0.0);
    }

    #[test]
    fn ridge_closed_form_matches_generic_solver() {
        let r = run_regularization_comparison(&small(ScenarioKind::Regularization)).unwrap();
        let gap = r.aggregate("m=400,T=60", "max_closed_vs_generic").unwrap();
        assert!(gap <= 1e-8, "gap {gap}");
    }

    #[test]
    fn seed_run_reports_iterations() {
        let r = run_seed_speedup(&small(ScenarioKind::Seed)).unwrap();
        let it = r.aggregate("m=400,T=60", "iterations_proposed").unwrap();
        assert!(it >= 1.0);
        assert!(r.aggregate("m=400,T=60", "ratio_gauss_1").unwrap() > 0.0);
    }

    #[test]
    fn highdim_runs_both_estimators() {
        let r = run_highdim_experiment(&small(ScenarioKind::Highdim)).unwrap();
        for d in ["d=4", "d=8"] {
            assert!(r.aggregate(d, "rmse_beta_proposed").unwrap().is_finite());
            assert!(r.aggregate(d, "rmse_beta_mle").unwrap().is_finite());
        }
    }
}
