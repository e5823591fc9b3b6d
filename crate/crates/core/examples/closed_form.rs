//! The closed-form estimator against the truth, with the covariance either
//! estimated from the panel or supplied.

use rarehazard::closedform::{proposed, SigmaSource};
use rarehazard::gproc::CovariateProcessSpec;
use rarehazard::hazard::ModelSpec;
use rarehazard::xlab::simulate_panel;

fn main() -> rarehazard::Result<()> {
    let cov = CovariateProcessSpec::standard(0, 4);
    let beta = vec![0.5, -0.4, 0.3, 0.8];
    let model = ModelSpec::intensity(beta.clone(), 6.5);
    let panel = simulate_panel(&cov, &model, 5000, 200, None, 7)?;

    let est = proposed(panel.rows(), &SigmaSource::default())?;
    let known = proposed(panel.rows(), &SigmaSource::Known(cov.stationary_cov()?))?;
    println!("true beta      {:?}, alpha 6.5", beta);
    println!("estimated Σ    {:.3?}, alpha {:.3}", est.beta, est.alpha.get(0));
    println!("known Σ        {:.3?}, alpha {:.3}", known.beta, known.alpha.get(0));
    Ok(())
}
