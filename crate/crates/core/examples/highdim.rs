//! The `1/√d` scaled link: the estimation error grows with the dimension at a
//! fixed sample size.

use rarehazard::xlab::{run_experiment, ExperimentConfig, ScenarioKind};

fn main() -> rarehazard::Result<()> {
    let mut cfg = ExperimentConfig::new(ScenarioKind::Highdim);
    cfg.firms = Some(3000);
    cfg.periods = Some(150);
    cfg.replications = Some(3);
    let report = run_experiment(&cfg, false)?;
    for d in [8, 12, 18, 24] {
        let g = format!("d={}", d);
        println!(
            "d = {:2}: rmse proposed {:.3}, mle {:.3}",
            d,
            report.aggregate(&g, "rmse_beta_proposed").unwrap_or(f64::NAN),
            report.aggregate(&g, "rmse_beta_mle").unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
