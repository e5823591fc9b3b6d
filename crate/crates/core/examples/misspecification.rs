//! A hidden common factor: both estimators converge to the same wrong value.

use rarehazard::xlab::{misspecification_limit, run_experiment, ExperimentConfig, ScenarioKind};

fn main() -> rarehazard::Result<()> {
    let sigma = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let (limit, gap) = misspecification_limit(&sigma, &[-0.2, 0.5], &[1])?;
    println!("limit of the visible coefficient {:.4}, intercept gap {:.5}", limit[0], gap);

    let mut cfg = ExperimentConfig::new(ScenarioKind::Misspec);
    cfg.firms = Some(5000);
    cfg.periods = Some(200);
    cfg.replications = Some(5);
    let report = run_experiment(&cfg, false)?;
    let t = report.table("misspecification").expect("table");
    for row in &t.rows {
        println!("{}: rmse beta proposed {:.3}, mle {:.3}", row.label, row.values[0], row.values[1]);
    }
    Ok(())
}
