//! Noisy covariates bias the likelihood fit toward zero by `Σ(Σ + c²I)⁻¹`;
//! the closed form with the clean covariance does not care. Also shows what
//! deleting rows just before defaults does.

use rarehazard::xlab::{run_experiment, CorruptionConfig, ExperimentConfig, ScenarioKind};

fn main() -> rarehazard::Result<()> {
    let mut cfg = ExperimentConfig::new(ScenarioKind::Corruption);
    cfg.firms = Some(4000);
    cfg.periods = Some(150);
    cfg.replications = Some(2);
    cfg.corruption = Some(CorruptionConfig {
        cases: vec![1, 3],
        ..CorruptionConfig::default()
    });
    let report = run_experiment(&cfg, false)?;
    let g = "m=4000,T=150";
    let get = |k: &str| report.aggregate(g, k).unwrap_or(f64::NAN);
    println!("case 1 rmse: proposed {:.3}, mle {:.3}", get("rmse_case1_proposed"), get("rmse_case1_mle"));
    println!("case 3 rmse: proposed {:.3}, mle {:.3}", get("rmse_case3_proposed"), get("rmse_case3_mle"));
    println!("mle shrinkage {:.3} (predicted {:.3})", get("pooled_ratio_mle"), get("predicted_ratio"));
    println!("pre-default deletion hurts {:.1}x more", get("deletion_ratio_mle"));
    Ok(())
}
