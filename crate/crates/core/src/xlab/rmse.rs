//! Parameter RMSE under correct specification, also used for the drift and
//! two-class designs.

use super::*;

pub fn run_rmse_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    rmse_with(cfg, |kind, rows, link| fitter.fit(kind, rows, link))
}

/// The RMSE loop with a pluggable estimator.
pub(crate) fn rmse_with<F>(cfg: &ExperimentConfig, fit: F) -> Result<ExperimentReport>
where
    F: Fn(EstimatorKind, &Rows, Link) -> Result<EstimateResult>,
{
    let model = cfg.model();
    let cov = cfg.covariates();
    let estimators = cfg.estimators.clone().unwrap_or_default();
    let reps = cfg.replications.unwrap_or(1);
    let master = cfg.seed.unwrap_or(0);
    let mut report = ExperimentReport::new(cfg.scenario.name());

    let mut columns = vec!["firms", "periods"];
    let names: Vec<(String, String)> = estimators
        .iter()
        .map(|e| (format!("rmse_beta_{}", e.name()), format!("rmse_alpha_{}", e.name())))
        .collect();
    for (b, _) in &names {
        columns.push(b);
    }
    for (_, a) in &names {
        columns.push(a);
    }
    columns.push("mean_defaults");
    columns.push("failures");
    let mut table = ReportTable::new("rmse", &columns);

    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let classes = cfg.class_shares.as_ref().map(|s| assign_classes(point.firms, s));
        let records = replicate(&group, group_seed(master, g), reps, |seed, rec| {
            let panel = simulate_panel(cov, model, point.firms, point.periods, classes.as_deref(), seed)?;
            let rows = panel.rows();
            require_defaults(rows)?;
            rec.set("defaults", rows.count(crate::panel::Outcome::Default) as f64);
            let k = rows.class_count();
            let true_alpha = model.alpha.to_vec(k);
            for &e in &estimators {
                let est = fit(e, rows, model.link)?;
                let a = est.alpha.to_vec(k);
                rec.set(format!("sqerr_beta_{}", e.name()), sq_dist(&est.beta, &model.beta));
                rec.set(format!("sqerr_alpha_{}", e.name()), sq_dist(&a, &true_alpha));
                rec.set(format!("iterations_{}", e.name()), est.diagnostics.iterations as f64);
                rec.estimates.insert(format!("beta_{}", e.name()), est.beta);
                rec.estimates.insert(format!("alpha_{}", e.name()), a);
            }
            Ok(())
        });
        let failed = records.iter().filter(|r| !r.ok).count();
        let mut row = vec![point.firms as f64, point.periods as f64];
        let mut alphas = Vec::new();
        for e in &estimators {
            let rb = rmse_from_records(&records, &group, &format!("sqerr_beta_{}", e.name()));
            let ra = rmse_from_records(&records, &group, &format!("sqerr_alpha_{}", e.name()));
            report.set_aggregate(&group, &format!("rmse_beta_{}", e.name()), rb);
            report.set_aggregate(&group, &format!("rmse_alpha_{}", e.name()), ra);
            let it = mean_from_records(&records, &group, &format!("iterations_{}", e.name()));
            report.set_aggregate(&group, &format!("mean_iterations_{}", e.name()), it);
            row.push(rb);
            alphas.push(ra);
        }
        row.extend(alphas);
        let defaults = mean_from_records(&records, &group, "defaults");
        report.set_aggregate(&group, "mean_defaults", defaults);
        report.set_aggregate(&group, "failures", failed as f64);
        row.push(defaults);
        row.push(failed as f64);
        table.push(group.clone(), row);
        report.absorb(records);
    }
    report.tables.push(table);
    Ok(report)
}
