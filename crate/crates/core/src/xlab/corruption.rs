//! Noisy and missing covariates.
//!
//! Defaults are drawn from the clean covariates; the estimators only see the
//! corrupted ones. Cases:
//! 1. every row noisy, true covariance known;
//! 2. rows carrying a default kept clean, the rest noisy;
//! 3. every row noisy, covariance estimated from the noisy rows;
//! 4. a share of firms clean, covariance estimated from them; the likelihood
//!    fit is also run on the clean firms alone;
//! 5. as case 1 with noise of non-zero mean.
//!
//! The deletion experiments remove the same number of rows either at random
//! among rows without a default, or at the row preceding a default.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::closedform::corrupted_closed_form;
use crate::gproc::CovarianceEstimate;
use crate::panel::Outcome;
use crate::rng::{substream, Purpose};

/// Add `N(mean, var)` noise to the rows where `mask` is true. Draws come from
/// each firm's noise stream and are consumed for every row, so the same
/// seed gives the same noise whatever the mask.
pub fn add_noise(rows: &Rows, mean: f64, var: f64, seed: u64, mask: impl Fn(usize) -> bool) -> Rows {
    let sd = var.sqrt();
    let mut out = rows.clone();
    let mut firm_of = vec![0usize; rows.len()];
    for f in 0..rows.firm_count() {
        for r in rows.firm_range(f) {
            firm_of[r] = f;
        }
    }
    let mut current = usize::MAX;
    let mut rng = substream(seed, Purpose::Noise, 0);
    out.map_rows(|r, v| {
        let f = firm_of[r];
        if f != current {
            rng = substream(seed, Purpose::Noise, f as u64);
            current = f;
        }
        let keep = mask(r);
        for x in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            if keep {
                *x += mean + sd * z;
            }
        }
    });
    out
}

/// Delete `rows_to_delete`: carry the firm's previous row forward into each
/// deleted row, or drop it.
pub fn delete_rows(rows: &Rows, rows_to_delete: &[usize], mode: DeletionMode) -> Rows {
    match mode {
        DeletionMode::Drop => {
            let mut keep = vec![true; rows.len()];
            for &r in rows_to_delete {
                keep[r] = false;
            }
            rows.filter(&keep)
        }
        DeletionMode::CarryForward => {
            let mut hit = vec![false; rows.len()];
            for &r in rows_to_delete {
                hit[r] = true;
            }
            let d = rows.dim();
            let src = rows.data().to_vec();
            let mut out = rows.clone();
            out.map_rows(|r, v| {
                if hit[r] {
                    v.copy_from_slice(&src[(r - 1) * d..r * d]);
                }
            });
            out
        }
    }
}

/// Candidate rows for deletion: rows with a predecessor in the same firm,
/// split by whether they carry a default.
fn deletion_candidates(rows: &Rows) -> (Vec<usize>, Vec<usize>) {
    let mut plain = Vec::new();
    let mut pre = Vec::new();
    for f in 0..rows.firm_count() {
        let range = rows.firm_range(f);
        for r in range.start + 1..range.end {
            if rows.outcome(r) == Outcome::Default {
                pre.push(r);
            } else {
                plain.push(r);
            }
        }
    }
    (plain, pre)
}

fn pick(from: &[usize], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = n.min(from.len());
    let mut v: Vec<usize> = sample(rng, from.len(), n).into_iter().map(|i| from[i]).collect();
    v.sort_unstable();
    v
}

pub fn run_corruption_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    let model = cfg.model();
    let cov = cfg.covariates();
    let k = cfg.corruption.clone().unwrap_or_default();
    let sigma_true = cov.stationary_cov()?;
    let known = CovarianceEstimate::known(sigma_true.clone());
    let d = model.dim();
    let c2 = k.noise_var;
    // likelihood limit under noise: (Σ + c²I)⁻¹Σβ
    let ml_limit = ridge_limit(&sigma_true, &nalgebra::DMatrix::identity(d, d), c2, &model.beta)?;
    let reps = cfg.replications.unwrap_or(1);
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut table = ReportTable::new("corruption", &["rmse_proposed", "rmse_mle", "max_bias_proposed", "max_bias_mle"]);
    let mut ratio_table = ReportTable::new("noise_bias_ratio", &["beta", "mean_mle", "ratio", "predicted", "mean_proposed"]);

    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(cov, model, point.firms, point.periods, None, seed)?;
            let rows = panel.rows();
            require_defaults(rows)?;
            let fit_ml = |r: &Rows| fitter.fit(EstimatorKind::Mle, r, model.link).map(|e| e.beta);
            let put = |rec: &mut ReplicationRecord, case: &str, prop: Vec<f64>, ml: Vec<f64>| {
                rec.set(format!("sqerr_{}_proposed", case), sq_dist(&prop, &model.beta));
                rec.set(format!("sqerr_{}_mle", case), sq_dist(&ml, &model.beta));
                rec.estimates.insert(format!("{}_proposed", case), prop);
                rec.estimates.insert(format!("{}_mle", case), ml);
            };
            let noisy_all = if k.cases.iter().any(|c| [1, 3].contains(c)) {
                Some(add_noise(rows, 0.0, c2, seed, |_| true))
            } else {
                None
            };
            for &case in &k.cases {
                let name = format!("case{}", case);
                match case {
                    1 => {
                        let noisy = noisy_all.as_ref().unwrap();
                        let p = corrupted_closed_form(noisy, &known)?;
                        put(rec, &name, p.as_slice().to_vec(), fit_ml(noisy)?);
                    }
                    2 => {
                        let noisy = add_noise(rows, 0.0, c2, seed, |r| rows.outcome(r) != Outcome::Default);
                        let p = corrupted_closed_form(&noisy, &known)?;
                        put(rec, &name, p.as_slice().to_vec(), fit_ml(&noisy)?);
                    }
                    3 => {
                        let noisy = noisy_all.as_ref().unwrap();
                        let est = SigmaSource::default().resolve(noisy)?;
                        let p = corrupted_closed_form(noisy, &est)?;
                        put(rec, &name, p.as_slice().to_vec(), fit_ml(noisy)?);
                    }
                    4 => {
                        let mut mrng = substream(seed, Purpose::Masking, 0);
                        let m = rows.firm_count();
                        let clean_n = ((m as f64) * k.clean_share).round().max(1.0) as usize;
                        let mut clean_firm = vec![false; m];
                        for f in sample(&mut mrng, m, clean_n.min(m)) {
                            clean_firm[f] = true;
                        }
                        let mut clean_row = vec![false; rows.len()];
                        for f in 0..m {
                            for r in rows.firm_range(f) {
                                clean_row[r] = clean_firm[f];
                            }
                        }
                        let noisy = add_noise(rows, 0.0, c2, seed, |r| !clean_row[r]);
                        let clean = rows.filter(&clean_row);
                        let est = SigmaSource::default().resolve(&clean)?;
                        let p = corrupted_closed_form(&noisy, &est)?;
                        put(rec, &name, p.as_slice().to_vec(), fit_ml(&noisy)?);
                        let ml_clean = fit_ml(&clean)?;
                        rec.set("sqerr_case4_mle_clean", sq_dist(&ml_clean, &model.beta));
                    }
                    5 => {
                        let noisy = add_noise(rows, k.shifted_mean, c2, seed, |_| true);
                        let p = corrupted_closed_form(&noisy, &known)?;
                        put(rec, &name, p.as_slice().to_vec(), fit_ml(&noisy)?);
                    }
                    _ => unreachable!("validated"),
                }
            }
            if k.deletion {
                let (plain, pre) = deletion_candidates(rows);
                let defaults = rows.count(Outcome::Default);
                let n = k
                    .deletion_count
                    .unwrap_or(((defaults as f64) * k.deletion_fraction).round() as usize)
                    .min(pre.len());
                rec.set("deleted_rows", n as f64);
                let mut mrng = substream(seed, Purpose::Masking, 1);
                let del_plain = pick(&plain, n, &mut mrng);
                let del_pre = pick(&pre, n, &mut mrng);
                for (case, del) in [("delete_plain", &del_plain), ("delete_predefault", &del_pre)] {
                    let r = delete_rows(rows, del, k.deletion_mode);
                    let p = fitter.fit(EstimatorKind::Proposed, &r, model.link)?.beta;
                    put(rec, case, p, fit_ml(&r)?);
                }
                let p = fitter.fit(EstimatorKind::Proposed, rows, model.link)?.beta;
                put(rec, "clean", p, fit_ml(rows)?);
            }
            Ok(())
        });

        let mut cases: Vec<String> = k.cases.iter().map(|c| format!("case{}", c)).collect();
        if k.deletion {
            cases.extend(["clean", "delete_plain", "delete_predefault"].map(String::from));
        }
        for case in &cases {
            let mut row = Vec::new();
            for e in ["proposed", "mle"] {
                let v = rmse_from_records(&records, &group, &format!("sqerr_{}_{}", case, e));
                report.set_aggregate(&group, &format!("rmse_{}_{}", case, e), v);
                row.push(v);
            }
            for e in ["proposed", "mle"] {
                let mean = mean_estimate(&records, &format!("{}_{}", case, e), d);
                let bias = mean.iter().zip(&model.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                report.set_aggregate(&group, &format!("max_bias_{}_{}", case, e), bias);
                row.push(bias);
            }
            table.push(format!("{}:{}", group, case), row);
        }
        if k.cases.contains(&4) {
            let v = rmse_from_records(&records, &group, "sqerr_case4_mle_clean");
            report.set_aggregate(&group, "rmse_case4_mle_clean", v);
        }
        if k.deletion {
            for e in ["proposed", "mle"] {
                let pre = report.aggregate(&group, &format!("rmse_delete_predefault_{}", e)).unwrap();
                let plain = report.aggregate(&group, &format!("rmse_delete_plain_{}", e)).unwrap();
                report.set_aggregate(&group, &format!("deletion_ratio_{}", e), pre / plain);
            }
        }
        if k.cases.contains(&1) {
            let ml = mean_estimate(&records, "case1_mle", d);
            let pr = mean_estimate(&records, "case1_proposed", d);
            let mut worst: f64 = 0.0;
            for j in 0..d {
                let b = model.beta[j];
                let predicted = ml_limit[j] / b;
                let ratio = ml[j] / b;
                if b != 0.0 {
                    worst = worst.max((ratio - predicted).abs());
                }
                ratio_table.push(format!("{}:{}", group, j), vec![b, ml[j], ratio, predicted, pr[j]]);
            }
            let num: f64 = ml.iter().zip(&model.beta).map(|(a, b)| a * b).sum();
            let den: f64 = model.beta.iter().map(|b| b * b).sum();
            report.set_aggregate(&group, "pooled_ratio_mle", num / den);
            report.set_aggregate(&group, "max_ratio_deviation_mle", worst);
            report.set_aggregate(&group, "predicted_ratio", 1.0 / (1.0 + c2));
        }
        report.absorb(records);
    }
    report.tables.push(table);
    if k.cases.contains(&1) {
        report.tables.push(ratio_table);
    }
    Ok(report)
}

fn mean_estimate(records: &[ReplicationRecord], key: &str, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    let mut n = 0.0;
    for r in records.iter().filter(|r| r.ok) {
        if let Some(v) = r.estimates.get(key) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            n += 1.0;
        }
    }
    acc.iter().map(|a| a / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_rows() -> Rows {
        let mut rows = Rows::empty(2);
        for f in 0..3 {
            for t in 0..4 {
                let o = if f == 1 && t == 3 { Outcome::Default } else { Outcome::None };
                rows.push(&[f as f64, t as f64], o, 0, t);
            }
            rows.end_firm();
        }
        rows
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let rows = toy_rows();
        let n = add_noise(&rows, 0.0, 0.0, 9, |_| true);
        assert_eq!(n.data(), rows.data());
    }

    #[test]
    fn noise_respects_mask_and_seed() {
        let rows = toy_rows();
        let a = add_noise(&rows, 0.0, 1.0, 3, |r| r != 0);
        let b = add_noise(&rows, 0.0, 1.0, 3, |_| true);
        assert_eq!(a.row(0), rows.row(0));
        assert_eq!(a.row(5), b.row(5));
    }

    #[test]
    fn carry_forward_and_drop() {
        let rows = toy_rows();
        let (plain, pre) = deletion_candidates(&rows);
        assert_eq!(pre, vec![7]);
        assert_eq!(plain.len(), 8);
        let cf = delete_rows(&rows, &pre, DeletionMode::CarryForward);
        assert_eq!(cf.row(7), rows.row(6));
        assert_eq!(cf.count(Outcome::Default), 1);
        let dr = delete_rows(&rows, &pre, DeletionMode::Drop);
        assert_eq!(dr.len(), 11);
        assert_eq!(dr.count(Outcome::Default), 0);
    }

    #[test]
    fn zero_noise_matches_clean_estimates() {
        let mut c = ExperimentConfig::new(ScenarioKind::Corruption);
        c.firms = Some(400);
        c.periods = Some(60);
        c.replications = Some(1);
        c.model = Some(ModelSpec::intensity(config::TABLE_BETA.to_vec(), 5.0));
        c.sigma = Some(SigmaMode::Known);
        c.corruption = Some(CorruptionConfig {
            noise_var: 0.0,
            cases: vec![1],
            ..CorruptionConfig::default()
        });
        let cfg = c.resolve(false).unwrap();
        let r = run_corruption_experiment(&cfg).unwrap();
        let rec = &r.records[0];
        assert_eq!(rec.estimates["case1_proposed"], rec.estimates["clean_proposed"]);
        let (a, b) = (&rec.estimates["case1_mle"], &rec.estimates["clean_mle"]);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
