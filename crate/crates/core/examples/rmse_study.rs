//! Monte Carlo RMSE of both estimators on the twelve-covariate design, over
//! two sample sizes. Writes `report.json` and `rmse.csv`.

use rarehazard::xlab::{run_experiment, ExperimentConfig, ScenarioKind, SizePoint};

fn main() -> rarehazard::Result<()> {
    let mut cfg = ExperimentConfig::new(ScenarioKind::Rmse);
    cfg.grid = Some(vec![
        SizePoint {
            firms: 2000,
            periods: 100,
        },
        SizePoint {
            firms: 2000,
            periods: 300,
        },
    ]);
    cfg.replications = Some(5);
    let report = run_experiment(&cfg, false)?;
    let table = report.table("rmse").expect("rmse table");
    for row in &table.rows {
        println!("{}: {:.4?}", row.label, row.values);
    }
    let dir = std::env::temp_dir().join("rarehazard-rmse");
    report.write(&dir)?;
    println!("written to {}", dir.display());
    Ok(())
}
