//! Ridge: the closed form `(Σ + λI)⁻¹ŵ` next to the penalized likelihood fit
//! and a lasso solved by proximal gradient.

use nalgebra::DMatrix;
use rarehazard::closedform::{moment_statistics, regularized_closed_form, Penalty};
use rarehazard::gproc::{estimate_covariance, CovarianceOptions, CovariateProcessSpec};
use rarehazard::hazard::{Link, ModelSpec};
use rarehazard::mle::{mle_fit, InitPoint, SolverOptions};
use rarehazard::xlab::simulate_panel;

fn main() -> rarehazard::Result<()> {
    let cov = CovariateProcessSpec::standard(0, 5);
    let model = ModelSpec::intensity(vec![0.6, -0.4, 0.0, 0.0, 0.5], 6.0);
    let panel = simulate_panel(&cov, &model, 5000, 200, None, 11)?;
    let rows = panel.rows();
    let what = moment_statistics(rows).what()?;
    let sigma = estimate_covariance(rows, CovarianceOptions::default())?.sigma;

    let ridge = Penalty::Ridge {
        z: DMatrix::identity(5, 5),
        lambda: 1.0,
    };
    let closed = regularized_closed_form(&what, &sigma, &ridge)?;
    let ml = mle_fit(
        rows,
        Link::Intensity,
        &SolverOptions {
            penalty: ridge,
            init: InitPoint::Proposed,
            ..SolverOptions::default()
        },
    )?;
    println!("ridge closed form {:.3?}", closed.beta.as_slice());
    println!("ridge likelihood  {:.3?}", ml.beta);

    let lasso = regularized_closed_form(&what, &sigma, &Penalty::Lasso { lambda: 0.3 })?;
    println!("lasso ({} iterations) {:.3?}", lasso.iterations, lasso.beta.as_slice());
    Ok(())
}
