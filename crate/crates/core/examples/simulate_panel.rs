//! Simulate a panel with two AR(1) common factors and three firm-level
//! covariates, write it as CSV and read it back.

use rarehazard::gproc::{simulate_covariates, CovariateProcessSpec};
use rarehazard::hazard::{simulate_exits, ModelSpec};
use rarehazard::panel::{load_panel, summarize, write_panel};

fn main() -> rarehazard::Result<()> {
    let cov = CovariateProcessSpec::standard(2, 3);
    let model = ModelSpec::intensity(vec![-0.2, 0.5, 0.5, 0.2, -1.0], 6.0);
    let block = simulate_covariates(&cov, 2000, 120, None, 42)?;
    let (panel, diag) = simulate_exits(&block, &model, None, 42)?;
    let s = summarize(&panel);
    println!(
        "{} firm-periods, {} defaults, monthly default rate {:.5}, capped hazards {}",
        s.firm_periods, s.default_count, s.empirical_default_rate, diag.infinite_hazard
    );

    let dir = std::env::temp_dir().join("rarehazard-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("panel.csv");
    write_panel(&panel, &path)?;
    let back = load_panel(&path)?;
    assert_eq!(back.rows().data(), panel.rows().data());
    println!("round trip through {} ok", path.display());
    Ok(())
}
