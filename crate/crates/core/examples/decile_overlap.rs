//! How many of the truly riskiest firms each estimator puts in its own top
//! deciles on held-out months.

use rarehazard::xlab::{run_experiment, ExperimentConfig, ScenarioKind};

fn main() -> rarehazard::Result<()> {
    let mut cfg = ExperimentConfig::new(ScenarioKind::Decile);
    cfg.firms = Some(3000);
    cfg.periods = Some(60);
    cfg.replications = Some(2);
    let report = run_experiment(&cfg, false)?;
    let g = "m=3000,T=60";
    for k in 1..=3 {
        println!(
            "top {:3}%: proposed {:.3}, mle {:.3}",
            10 * k,
            report.aggregate(g, &format!("overlap_proposed_{}", k)).unwrap_or(f64::NAN),
            report.aggregate(g, &format!("overlap_mle_{}", k)).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
