//! Default and non-default exits with separate hazards, estimated jointly.

use rarehazard::closedform::closed_form_censoring;
use rarehazard::gproc::{estimate_covariance, CovarianceOptions, CovariateProcessSpec};
use rarehazard::hazard::{Link, ModelSpec};
use rarehazard::mle::{mle_fit, InitPoint, SolverOptions};
use rarehazard::xlab::simulate_panel;

fn main() -> rarehazard::Result<()> {
    let cov = CovariateProcessSpec::standard(0, 3);
    let mut model = ModelSpec::intensity(vec![0.5, -0.3, 0.4], 6.0);
    model.link = Link::Bihazard;
    model.vartheta = Some(vec![-0.2, 0.3, 0.1]);
    model.alpha2 = Some(5.5);
    let panel = simulate_panel(&cov, &model, 5000, 150, None, 5)?;
    let rows = panel.rows();

    let sigma = estimate_covariance(rows, CovarianceOptions::default())?;
    let p = closed_form_censoring(rows, &sigma)?;
    let m = mle_fit(
        rows,
        Link::Bihazard,
        &SolverOptions {
            init: InitPoint::Proposed,
            ..SolverOptions::default()
        },
    )?;
    println!("default beta   closed {:.3?}  mle {:.3?}", p.beta.as_slice(), m.beta);
    println!("censor vartheta closed {:.3?}  mle {:.3?}", p.vartheta.as_slice(), m.vartheta.unwrap_or_default());
    println!("alpha2         closed {:.3}  mle {:.3}", p.alpha2, m.alpha2.unwrap_or(f64::NAN));
    Ok(())
}
