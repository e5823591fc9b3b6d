//! Rolling-window ranking test for panels where the true model is unknown.
//!
//! At each window start `t`, models are fitted on periods `[0, t)`, firms alive
//! at `t` are ranked into deciles by estimated default probability, and the
//! defaults of the next `window` periods are counted per decile. Counts are
//! summed over windows; windows running past the panel are dropped.

use super::*;
use crate::hazard::default_prob;
use crate::mle::estimate_model;
use crate::panel::Outcome;

/// Default counts per decile (index 0 the riskiest) for one window.
pub fn decile_allocation(panel: &Panel, est: &ModelSpec, start: usize, window: usize) -> Result<[usize; 10]> {
    let mut scored = Vec::new();
    for (f, firm) in panel.firms().iter().enumerate() {
        if let Some(v) = panel.covariate(f, start) {
            let p = default_prob(est, v, firm.class as usize)?;
            let defaults = firm.outcome == Outcome::Default && firm.exit >= start && firm.exit < start + window;
            scored.push((p, firm.id, defaults));
        }
    }
    if scored.is_empty() {
        return Err(Error::NoSurvivorsInTestWindow(start));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let n = scored.len();
    let mut counts = [0usize; 10];
    for (rank, s) in scored.iter().enumerate() {
        if s.2 {
            counts[rank * 10 / n] += 1;
        }
    }
    Ok(counts)
}

/// Window starts `start, start + window, …` with complete test windows.
fn window_starts(start: usize, window: usize, periods: usize) -> Vec<usize> {
    (0..).map(|k| start + k * window).take_while(|t| t + window <= periods).collect()
}

/// Rank with each estimator on every window of one panel; returns per-method
/// decile counts.
pub fn rolling_counts(
    panel: &Panel,
    fitter: &Fitter,
    estimators: &[EstimatorKind],
    link: Link,
    start: usize,
    window: usize,
) -> Result<Vec<[usize; 10]>> {
    let starts = window_starts(start, window, panel.period_count());
    if starts.is_empty() {
        return Err(Error::config("split", "no complete test window"));
    }
    let mut out = vec![[0usize; 10]; estimators.len()];
    for t in starts {
        let train = panel.window(0, t);
        require_defaults(train.rows())?;
        for (i, &e) in estimators.iter().enumerate() {
            let est = fitter.fit(e, train.rows(), link)?;
            let model = estimate_model(&est, Fitter::link_of(e, link), fitter.dim_scale);
            let c = decile_allocation(panel, &model, t, window)?;
            for (a, b) in out[i].iter_mut().zip(c) {
                *a += b;
            }
        }
    }
    Ok(out)
}

pub fn run_rolling_test(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let fitter = Fitter::from_config(cfg)?;
    let model = cfg.model();
    let estimators = cfg.estimators.clone().unwrap_or_default();
    let (start, window) = match cfg.split {
        Some(SplitRule::Rolling { start, window }) => (start, window),
        _ => return Err(Error::config("split", "rolling test needs a rolling split")),
    };
    let mut report = ExperimentReport::new(cfg.scenario.name());
    let mut columns: Vec<String> = vec!["decile".into()];
    for e in &estimators {
        columns.push(format!("{}_count", e.name()));
        columns.push(format!("{}_cumulative_pct", e.name()));
    }
    let cols: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut table = ReportTable::new("rolling_deciles", &cols);

    for (g, &point) in cfg.grid().iter().enumerate() {
        let group = group_label(point);
        let classes = cfg.class_shares.as_ref().map(|s| assign_classes(point.firms, s));
        let reps = cfg.replications.unwrap_or(1);
        let records = replicate(&group, group_seed(cfg.seed.unwrap_or(0), g), reps, |seed, rec| {
            let panel = simulate_panel(cfg.covariates(), model, point.firms, point.periods, classes.as_deref(), seed)?;
            let counts = rolling_counts(&panel, &fitter, &estimators, model.link, start, window)?;
            for (e, c) in estimators.iter().zip(&counts) {
                for (k, n) in c.iter().enumerate() {
                    rec.set(format!("count_{}_{}", e.name(), k + 1), *n as f64);
                }
            }
            Ok(())
        });
        let mut sums = vec![[0.0f64; 10]; estimators.len()];
        for r in records.iter().filter(|r| r.ok) {
            for (i, e) in estimators.iter().enumerate() {
                for k in 0..10 {
                    sums[i][k] += r.get(&format!("count_{}_{}", e.name(), k + 1)).unwrap_or(0.0);
                }
            }
        }
        for k in 0..10 {
            let mut row = vec![(k + 1) as f64];
            for (i, e) in estimators.iter().enumerate() {
                let total: f64 = sums[i].iter().sum();
                let cum: f64 = sums[i][..=k].iter().sum();
                let pct = 100.0 * cum / total;
                report.set_aggregate(&group, &format!("cumulative_pct_{}_{}", e.name(), k + 1), pct);
                row.push(sums[i][k]);
                row.push(pct);
            }
            table.push(format!("{}:{}", group, k + 1), row);
        }
        report.absorb(records);
    }
    report.tables.push(table);
    Ok(report)
}
