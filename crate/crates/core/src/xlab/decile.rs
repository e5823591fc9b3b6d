//! Out-of-sample ranking test: train on the first `T` periods, then in each
//! test month compare the riskiest firms under the true and the estimated
//! default probabilities.

use super::*;
use crate::gproc::{gaussianize, GaussianizeMethod, TransformRecord};
use crate::hazard::default_prob;
use crate::mle::estimate_model;

/// Cumulative coverage of the true riskiest decile: entry `k-1` is the share
/// of the true top 10% found among the estimated top `k·10%`. Ties are broken
/// by firm id. Non-decreasing, with last entry 1.
pub fn overlap_curve(true_p: &[f64], est_p: &[f64], ids: &[u64]) -> Vec<f64> {
    let n = true_p.len();
    let rank = |p: &[f64]| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(ids[a].cmp(&ids[b])));
        idx
    };
    let by_true = rank(true_p);
    let by_est = rank(est_p);
    let top = |k: usize| (k * n).div_ceil(10);
    let mut in_true = vec![false; n];
    for &i in &by_true[..top(1)] {
        in_true[i] = true;
    }
    let n1 = top(1) as f64;
    let mut curve = Vec::with_capacity(10);
    let mut hits = 0usize;
    let mut seen = 0usize;
    for k in 1..=10 {
        while seen < top(k) {
            if in_true[by_est[seen]] {
                hits += 1;
            }
            seen += 1;
        }
        curve.push(hits as f64 / n1);
    }
    curve
}

/// Per-column named transform fitted on training rows.
fn fit_transforms(rows: &Rows, t: crate::gproc::NamedTransform) -> Result<Vec<TransformRecord>> {
    (0..rows.dim())
        .map(|j| {
            let col: Vec<f64> = (0..rows.len()).map(|r| rows.row(r)[j]).collect();
            let (_, rec) = gaussianize(&col, GaussianizeMethod::Named(t))?;
            rec.ok_or_else(|| Error::InvalidSpec("named transform produced no record".into()))
        })
        .collect()
}

fn apply_transforms(recs: &[TransformRecord], v: &[f64]) -> Result<Vec<f64>> {
    v.iter().zip(recs).map(|(x, r)| r.apply(*x)).collect()
}

pub fn run_decile_overlap_test(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    let model = cfg.model();
    let cov = cfg.covariates();
    let estimators = cfg.estimators.clone().unwrap_or_default();
    let test_periods = match cfg.split {
        Some(SplitRule::Halves { test_periods }) => test_periods,
        _ => return Err(Error::config("split", "decile test needs a halves split")),
    };
    let reps = cfg.replications.unwrap_or(1);
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut columns: Vec<String> = vec!["decile".into()];
    columns.extend(estimators.iter().map(|e| e.name().to_string()));
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ReportTable::new("decile_overlap", &cols);

    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let train = point.periods;
        let total = train + test_periods;
        let classes = cfg.class_shares.as_ref().map(|s| assign_classes(point.firms, s));
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(cov, model, point.firms, total, classes.as_deref(), seed)?;
            let train_panel = panel.window(0, train);
            let rows = train_panel.rows();
            require_defaults(rows)?;
            for &e in &estimators {
                let transform = match (e, cfg.transform) {
                    (EstimatorKind::Proposed, Some(t)) => Some(fit_transforms(rows, t)?),
                    _ => None,
                };
                let est = match &transform {
                    Some(recs) => {
                        let mut tr = rows.clone();
                        let mut err = None;
                        tr.map_rows(|_, v| match apply_transforms(recs, v) {
                            Ok(w) => v.copy_from_slice(&w),
                            Err(e) => err = Some(e),
                        });
                        if let Some(e) = err {
                            return Err(e);
                        }
                        fitter.fit(e, &tr, model.link)?
                    }
                    None => fitter.fit(e, rows, model.link)?,
                };
                let est_model = estimate_model(&est, Fitter::link_of(e, model.link), fitter.dim_scale);
                let mut acc = [0.0; 10];
                for t in train..total {
                    let mut tp = Vec::new();
                    let mut ep = Vec::new();
                    let mut ids = Vec::new();
                    for (f, firm) in panel.firms().iter().enumerate() {
                        if let Some(v) = panel.covariate(f, t) {
                            let k = firm.class as usize;
                            tp.push(default_prob(model, v, k)?);
                            let p = match &transform {
                                Some(recs) => default_prob(&est_model, &apply_transforms(recs, v)?, k)?,
                                None => default_prob(&est_model, v, k)?,
                            };
                            ep.push(p);
                            ids.push(firm.id);
                        }
                    }
                    if tp.is_empty() {
                        return Err(Error::NoSurvivorsInTestWindow(t));
                    }
                    for (a, c) in acc.iter_mut().zip(overlap_curve(&tp, &ep, &ids)) {
                        *a += c;
                    }
                }
                for (k, a) in acc.iter().enumerate() {
                    rec.set(format!("overlap_{}_{}", e.name(), k + 1), a / test_periods as f64);
                }
                rec.estimates.insert(format!("beta_{}", e.name()), est.beta);
            }
            Ok(())
        });
        for k in 1..=10 {
            let mut row = vec![k as f64];
            for e in &estimators {
                let key = format!("overlap_{}_{}", e.name(), k);
                let v = mean_from_records(&records, &group, &key);
                report.set_aggregate(&group, &key, v);
                row.push(v);
            }
            table.push(format!("{}:{}", group, k), row);
        }
        report.absorb(records);
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_rankings_cover_everything() {
        let p: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let ids: Vec<u64> = (0..37).collect();
        assert!(overlap_curve(&p, &p, &ids).iter().all(|&c| c == 1.0));
    }

    #[test]
    fn reversed_ranking_misses_first_decile() {
        let p: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let q: Vec<f64> = p.iter().map(|x| -x).collect();
        let ids: Vec<u64> = (0..10).collect();
        let c = overlap_curve(&p, &q, &ids);
        assert_eq!(c[0], 0.0);
        assert_eq!(c[9], 1.0);
    }

    proptest! {
        #[test]
        fn curve_is_a_coverage_curve(p in prop::collection::vec(0.0f64..1.0, 1..200), seed in 0u64..1000) {
            let q: Vec<f64> = p.iter().enumerate().map(|(i, x)| x + ((i as u64 ^ seed) % 7) as f64 * 0.05).collect();
            let ids: Vec<u64> = (0..p.len() as u64).collect();
            let c = overlap_curve(&p, &q, &ids);
            prop_assert_eq!(c.len(), 10);
            prop_assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(c[9], 1.0);
        }
    }

    #[test]
    fn small_run_produces_valid_curves() {
        let mut c = ExperimentConfig::new(ScenarioKind::Decile);
        c.firms = Some(400);
        c.periods = Some(40);
        c.replications = Some(1);
        c.model = Some(ModelSpec::intensity(config::TABLE_BETA.to_vec(), 5.0));
        let cfg = c.resolve(false).unwrap();
        let r = run_decile_overlap_test(&cfg).unwrap();
        let t = r.table("decile_overlap").unwrap();
        for e in ["proposed", "mle"] {
            let col = t.column(e).unwrap();
            assert!(col.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            assert!((col[9] - 1.0).abs() < 1e-12);
            assert!(col[0] > 0.5);
        }
    }
}
