//! Maximum likelihood from the zero seed and from the closed form, with
//! Newton and BFGS.

use rarehazard::closedform::{proposed, SigmaSource};
use rarehazard::gproc::CovariateProcessSpec;
use rarehazard::hazard::{Link, ModelSpec};
use rarehazard::mle::{estimate_model, log_likelihood, mle_fit, InitPoint, SolverKind, SolverOptions};
use rarehazard::xlab::simulate_panel;

fn main() -> rarehazard::Result<()> {
    let cov = CovariateProcessSpec::standard(1, 3);
    let model = ModelSpec::intensity(vec![0.4, -0.5, 0.3, 0.6], 6.0);
    let panel = simulate_panel(&cov, &model, 4000, 150, None, 3)?;
    let rows = panel.rows();

    let p = proposed(rows, &SigmaSource::default())?;
    let ll_p = log_likelihood(rows, &estimate_model(&p, Link::Intensity, None))?;
    println!("closed form  ll {:.3}  beta {:.3?}", ll_p, p.beta);
    for solver in [SolverKind::Newton, SolverKind::Bfgs] {
        for init in [InitPoint::Zeros, InitPoint::Proposed] {
            let opts = SolverOptions {
                solver,
                init: init.clone(),
                ..SolverOptions::default()
            };
            let m = mle_fit(rows, Link::Intensity, &opts)?;
            println!(
                "{:?} from {:?}: {} iterations, ll {:.3}",
                solver, init, m.diagnostics.iterations, m.diagnostics.log_likelihood
            );
        }
    }
    Ok(())
}
