//! Two classes sharing the common-factor coefficient but with their own
//! firm-level coefficients and intercepts.

use rarehazard::closedform::{closed_form_multiclass_shared_theta, MulticlassCovariance};
use rarehazard::gproc::CovariateProcessSpec;
use rarehazard::hazard::{Alpha, ModelSpec};
use rarehazard::xlab::{assign_classes, simulate_panel};

fn main() -> rarehazard::Result<()> {
    let cov = CovariateProcessSpec::standard(1, 2);
    let mut model = ModelSpec::intensity(vec![0.5, -0.4, 0.3], 0.0);
    model.alpha = Alpha::PerClass(vec![6.0, 5.0]);
    let classes = assign_classes(6000, &[0.5, 0.5]);
    let panel = simulate_panel(&cov, &model, 6000, 150, Some(&classes), 9)?;

    let est = closed_form_multiclass_shared_theta(panel.rows(), 1, &MulticlassCovariance::ClassWise)?;
    println!("shared theta {:.3?}", est.theta.as_slice());
    for k in 0..2 {
        println!(
            "class {k}: eta {:.3?}, alpha {:.3}, share {:.3}",
            est.eta[k].as_slice(),
            est.alpha[k],
            est.shares[k]
        );
    }
    Ok(())
}
