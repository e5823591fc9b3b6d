//! Map skewed covariates to approximately standard normal before fitting.

use rand::SeedableRng;
use rand_distr::{Distribution, LogNormal};
use rarehazard::gproc::{gaussianize, GaussianizeMethod, NamedTransform};

fn main() -> rarehazard::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dist = LogNormal::new(0.0, 1.0).unwrap();
    let xs: Vec<f64> = (0..5000).map(|_| dist.sample(&mut rng)).collect();

    let moments = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        let skew = v.iter().map(|x| ((x - m) / s).powi(3)).sum::<f64>() / n;
        (m, s, skew)
    };
    println!("raw:           mean/sd/skew {:.3?}", moments(&xs));
    let (ns, _) = gaussianize(&xs, GaussianizeMethod::NormalScores)?;
    println!("normal scores: mean/sd/skew {:.3?}", moments(&ns));
    let (lg, rec) = gaussianize(&xs, GaussianizeMethod::Named(NamedTransform::Log))?;
    println!("log:           mean/sd/skew {:.3?}", moments(&lg));
    let rec = rec.expect("named transforms return a record");
    println!("record {:?} maps 1.0 to {:.3}", rec, rec.apply(1.0)?);
    Ok(())
}
