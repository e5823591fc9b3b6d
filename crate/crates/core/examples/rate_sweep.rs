//! Error decay along `α = log(1/γ)`, `m = γ^-δ`, `T = γ^-ζ`. Firm counts reach
//! 10^10 at the smallest `γ`; common-factor-only covariates keep this cheap.

use rarehazard::xlab::{predicted_slope, run_experiment, ExperimentConfig, ScenarioKind};

fn main() -> rarehazard::Result<()> {
    let mut cfg = ExperimentConfig::new(ScenarioKind::Sweep);
    cfg.replications = Some(30);
    let report = run_experiment(&cfg, false)?;
    let t = report.table("rate_sweep").expect("table");
    for row in &t.rows {
        println!("{}: m {:.0e}, T {:.0}, mse {:.4}", row.label, row.values[1], row.values[2], row.values[3]);
    }
    println!(
        "slope {:.3}, predicted {:.3}",
        report.aggregate("sweep", "slope").unwrap_or(f64::NAN),
        report.aggregate("sweep", "predicted_slope").unwrap_or(f64::NAN)
    );
    println!("mse ratio mle / closed form {:.3}", report.aggregate("ratio", "ratio").unwrap_or(f64::NAN));
    match predicted_slope(0.5, 0.4) {
        Err(e) => println!("delta 0.5, zeta 0.4: {}", e),
        Ok(s) => println!("unexpected slope {}", s),
    }
    Ok(())
}
