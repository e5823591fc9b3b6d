//! Omitted covariates. Both estimators are fitted on the visible coordinates
//! `K` only; their common limit is `β_K + Σ_KK⁻¹Σ_KH β_H` with the intercept
//! lowered by `½ β_Hᵀ(Σ_HH − Σ_HK Σ_KK⁻¹ Σ_KH)β_H`.

use nalgebra::{DMatrix, DVector};

use super::*;

/// Limit of the fitted visible coefficients and of `α − α̂`.
pub fn misspecification_limit(sigma: &DMatrix<f64>, beta: &[f64], hidden: &[usize]) -> Result<(DVector<f64>, f64)> {
    let d = beta.len();
    let vis: Vec<usize> = (0..d).filter(|j| !hidden.contains(j)).collect();
    let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| sigma[(r[i], c[j])]);
    let skk = sub(&vis, &vis);
    let skh = sub(&vis, hidden);
    let shh = sub(hidden, hidden);
    let bk = DVector::from_iterator(vis.len(), vis.iter().map(|&j| beta[j]));
    let bh = DVector::from_iterator(hidden.len(), hidden.iter().map(|&j| beta[j]));
    let proj = crate::linalg::lu_solve(&skk, &(&skh * &bh))?;
    let limit = bk + &proj;
    // β_Hᵀ Σ_HK Σ_KK⁻¹ Σ_KH β_H = (Σ_KH β_H)ᵀ proj
    let resid = bh.dot(&(&shh * &bh)) - (&skh * &bh).dot(&proj);
    Ok((limit, 0.5 * resid))
}

fn variant_covariates(v: &MisspecVariant, base: &CovariateProcessSpec) -> CovariateProcessSpec {
    let mut cov = v.covariates.clone().unwrap_or_else(|| base.clone());
    if let Some(rho) = v.rho {
        let d = cov.dim();
        let mut m = vec![vec![0.0; d]; d];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m[0][1] = rho;
        m[1][0] = rho;
        cov.innovation_cov = Some(m);
    }
    cov
}

pub fn run_misspecification_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let base = Fitter::from_config(cfg)?;
    let variants = cfg.misspec.as_ref().map(|m| m.variants.clone()).unwrap_or_default();
    let reps = cfg.replications.unwrap_or(1);
    let estimators = [EstimatorKind::Proposed, EstimatorKind::Mle];
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut table = ReportTable::new(
        "misspecification",
        &[
            "rmse_beta_proposed",
            "rmse_beta_mle",
            "rmse_alpha_proposed",
            "rmse_alpha_mle",
            "alpha_gap_limit",
            "alpha_gap_proposed",
            "alpha_gap_mle",
            "agreement",
        ],
    );
    for (vi, v) in variants.iter().enumerate() {
        let cov = variant_covariates(v, cfg.covariates());
        let alpha = v.alpha.unwrap_or_else(|| cfg.model().alpha.get(0));
        let model = ModelSpec::intensity(v.beta.clone(), alpha);
        let d = v.beta.len();
        let vis: Vec<usize> = (0..d).filter(|j| !v.hidden.contains(j)).collect();
        let sigma = cov.stationary_cov()?;
        let (limit, gap) = misspecification_limit(&sigma, &v.beta, &v.hidden)?;
        let beta_k: Vec<f64> = vis.iter().map(|&j| v.beta[j]).collect();
        let mut fitter = base.clone();
        if let SigmaSource::Known(_) = fitter.sigma {
            let skk = DMatrix::from_fn(vis.len(), vis.len(), |i, j| sigma[(vis[i], vis[j])]);
            fitter.sigma = SigmaSource::Known(skk);
            fitter.solver.sigma = fitter.sigma.clone();
        }
        for (g, &point) in cfg.grid().iter().enumerate() {
            let group = format!("{}:{}", v.name, group_label(point));
            let seed = group_seed(group_seed(cfg.seed.unwrap_or(0), vi), g);
            let records = replicate(&group, seed, reps, |seed, rec| {
                let panel = simulate_panel(&cov, &model, point.firms, point.periods, None, seed)?;
                let rows = panel.rows().select_columns(&vis);
                require_defaults(&rows)?;
                for e in estimators {
                    let est = fitter.fit(e, &rows, Link::Intensity)?;
                    let a = est.alpha.get(0);
                    rec.set(format!("sqerr_beta_{}", e.name()), sq_dist(&est.beta, &beta_k));
                    rec.set(format!("sqerr_alpha_{}", e.name()), (a - alpha).powi(2));
                    rec.set(format!("alpha_gap_{}", e.name()), alpha - a);
                    for (j, b) in est.beta.iter().enumerate() {
                        rec.set(format!("beta_{}_{}", e.name(), j), *b);
                    }
                }
                Ok(())
            });
            let bias = (&limit - DVector::from_column_slice(&beta_k)).norm();
            let mut means = Vec::new();
            for e in estimators {
                let mut m = Vec::new();
                for j in 0..vis.len() {
                    let key = format!("beta_{}_{}", e.name(), j);
                    let xs: Vec<f64> = records.iter().filter_map(|r| r.get(&key)).collect();
                    let (mean, se) = mean_se(&xs);
                    report.set_aggregate(&group, &format!("mean_{}", key), mean);
                    report.set_aggregate(&group, &format!("se_{}", key), se);
                    report.set_aggregate(&group, &format!("z_{}", key), (mean - limit[j]) / se);
                    m.push(mean);
                }
                means.push(m);
                let xs: Vec<f64> = records
                    .iter()
                    .filter_map(|r| r.get(&format!("alpha_gap_{}", e.name())))
                    .collect();
                let (mean, se) = mean_se(&xs);
                report.set_aggregate(&group, &format!("alpha_gap_{}", e.name()), mean);
                report.set_aggregate(&group, &format!("se_alpha_gap_{}", e.name()), se);
                report.set_aggregate(&group, &format!("z_alpha_gap_{}", e.name()), (mean - gap) / se);
                for block in ["beta", "alpha"] {
                    let k = format!("rmse_{}_{}", block, e.name());
                    let v = rmse_from_records(&records, &group, &format!("sqerr_{}_{}", block, e.name()));
                    report.set_aggregate(&group, &k, v);
                }
            }
            for (j, l) in limit.iter().enumerate() {
                report.set_aggregate(&group, &format!("limit_beta_{}", j), *l);
            }
            report.set_aggregate(&group, "alpha_gap_limit", gap);
            report.set_aggregate(&group, "bias_norm", bias);
            let diff = means[0]
                .iter()
                .zip(&means[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let agreement = if bias > 0.0 { diff / bias } else { f64::NAN };
            report.set_aggregate(&group, "agreement", agreement);
            let get = |k: &str| report.aggregate(&group, k).unwrap_or(f64::NAN);
            let row = vec![
                get("rmse_beta_proposed"),
                get("rmse_beta_mle"),
                get("rmse_alpha_proposed"),
                get("rmse_alpha_mle"),
                gap,
                get("alpha_gap_proposed"),
                get("alpha_gap_mle"),
                agreement,
            ];
            table.push(group.clone(), row);
            report.absorb(records);
        }
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_for_two_correlated_factors() {
        // β₁ + ρβ₂ and β₂²(1 − ρ²)/2
        let rho = 0.5;
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let (l, gap) = misspecification_limit(&sigma, &[-0.2, 0.5], &[1]).unwrap();
        assert!((l[0] - 0.05).abs() < 1e-15);
        assert!((gap - 0.09375).abs() < 1e-15);
    }

    #[test]
    fn no_hidden_effect_means_no_bias() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let (l, gap) = misspecification_limit(&sigma, &[0.7, 0.0], &[1]).unwrap();
        assert!((l[0] - 0.7).abs() < 1e-15);
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn variant_sets_correlation() {
        let v = MisspecVariant {
            name: "x".into(),
            covariates: Some(CovariateProcessSpec {
                normalize: true,
                ..CovariateProcessSpec::standard(2, 0)
            }),
            beta: vec![0.1, 0.2],
            alpha: None,
            hidden: vec![1],
            rho: Some(0.5),
        };
        let cov = variant_covariates(&v, &CovariateProcessSpec::standard(2, 0));
        let s = cov.stationary_cov().unwrap();
        assert!((s[(0, 1)] - 0.5).abs() < 1e-12);
        assert!((s[(1, 1)] - 1.0).abs() < 1e-12);
    }
}
