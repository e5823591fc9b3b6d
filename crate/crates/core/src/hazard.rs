//! Exit-probability links and the doubly stochastic exit simulator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gproc::CovariateBlock;
use crate::linalg::dot;
use crate::panel::{Firm, Outcome, Panel, Rows};
use crate::rng::{substream, Purpose};

/// Exponents above this are clamped before exponentiation.
pub const EXP_CAP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Intensity,
    Logit,
    Bihazard,
    Highdim,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Intensity => "intensity",
            Link::Logit => "logit",
            Link::Bihazard => "bihazard",
            Link::Highdim => "highdim",
        }
    }
}

/// Intercept: one value, or one per firm class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Scalar(f64),
    PerClass(Vec<f64>),
}

impl Alpha {
    pub fn get(&self, class: usize) -> f64 {
        match self {
            Alpha::Scalar(a) => *a,
            Alpha::PerClass(v) => v[class],
        }
    }

    pub fn class_count(&self) -> Option<usize> {
        match self {
            Alpha::Scalar(_) => None,
            Alpha::PerClass(v) => Some(v.len()),
        }
    }

    pub fn to_vec(&self, classes: usize) -> Vec<f64> {
        (0..classes).map(|k| self.get(k)).collect()
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        if v.len() == 1 {
            Alpha::Scalar(v[0])
        } else {
            Alpha::PerClass(v)
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Alpha::Scalar(a) => vec![*a],
            Alpha::PerClass(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub link: Link,
    pub beta: Vec<f64>,
    pub alpha: Alpha,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_scale: Option<usize>,
}

impl ModelSpec {
    pub fn intensity(beta: Vec<f64>, alpha: f64) -> Self {
        ModelSpec {
            link: Link::Intensity,
            beta,
            alpha: Alpha::Scalar(alpha),
            vartheta: None,
            alpha2: None,
            dim_scale: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Structural checks. Infinite intercepts are allowed here (tests use them
    /// as sentinels); configuration loading rejects them separately.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidSpec("beta is empty".into()));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("beta must be finite".into()));
        }
        if self.alpha.values().iter().any(|a| a.is_nan()) || self.alpha.class_count() == Some(0) {
            return Err(Error::InvalidSpec("alpha must be a number or a non-empty list".into()));
        }
        match self.link {
            Link::Bihazard => {
                let vt = self
                    .vartheta
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("bihazard link requires vartheta".into()))?;
                if vt.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: vt.len(),
                    });
                }
                if self.alpha2.is_none() {
                    return Err(Error::InvalidSpec("bihazard link requires alpha2".into()));
                }
            }
            Link::Highdim => match self.dim_scale {
                Some(s) if s > 0 => {}
                _ => return Err(Error::InvalidSpec("highdim link requires a positive dim_scale".into())),
            },
            _ => {}
        }
        Ok(())
    }

    /// Reject the infinite-intercept sentinels.
    pub fn validate_finite(&self) -> Result<()> {
        self.validate()?;
        if self.alpha.values().iter().any(|a| !a.is_finite()) || self.alpha2.is_some_and(|a| !a.is_finite()) {
            return Err(Error::InvalidSpec("alpha must be finite".into()));
        }
        Ok(())
    }

    /// Multiplier applied to `βᵀv`: `1/√d` for the high-dimensional link.
    pub fn scale(&self) -> f64 {
        match (self.link, self.dim_scale) {
            (Link::Highdim, Some(d)) => 1.0 / (d as f64).sqrt(),
            _ => 1.0,
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Default exponent `βᵀv·s − α_k`.
    pub fn exponent(&self, v: &[f64], class: usize) -> f64 {
        self.scale() * dot(&self.beta, v) - self.alpha.get(class)
    }

    fn censor_exponent(&self, v: &[f64]) -> f64 {
        let vt = self.vartheta.as_deref().unwrap_or(&[]);
        dot(vt, v) - self.alpha2.unwrap_or(f64::INFINITY)
    }
}

/// `e^x` with the exponent clamped at [`EXP_CAP`]; the flag reports clamping.
#[inline]
pub fn capped_exp(x: f64) -> (f64, bool) {
    if x > EXP_CAP {
        (EXP_CAP.exp(), true)
    } else {
        (x.exp(), false)
    }
}

/// `1 − exp(−e^x)`.
#[inline]
pub fn intensity_prob(x: f64) -> f64 {
    -(-capped_exp(x).0).exp_m1()
}

/// `e^x / (1 + e^x)`.
#[inline]
pub fn logit_prob(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-row log-likelihood and its first two derivatives in the exponent `x`.
///
/// `link` is either `Intensity` or `Logit`; the other links reduce to these.
#[inline]
pub(crate) fn row_terms(link: Link, x: f64, event: bool) -> (f64, f64, f64) {
    match link {
        Link::Logit => {
            let p = logit_prob(x);
            let w = p * (1.0 - p);
            if event {
                (-softplus(-x), 1.0 - p, -w)
            } else {
                (-softplus(x), -p, -w)
            }
        }
        _ => {
            let (lam, _) = capped_exp(x);
            if !event {
                return (-lam, -lam, -lam);
            }
            if lam < 1e-3 {
                // series of λ/(e^λ−1) avoids cancellation near zero; the
                // log-likelihood uses log(1−e^{−λ}) = x − λ − log g so that it
                // stays finite when λ underflows
                let g = 1.0 - lam / 2.0 + lam * lam / 12.0 - lam.powi(4) / 720.0;
                let h = -(lam / 2.0 + lam * lam / 12.0 - lam.powi(4) / 720.0);
                (x - lam - g.ln(), g, g * h)
            } else {
                let ll = (-(-lam).exp_m1()).ln();
                let g = lam / lam.exp_m1();
                let h = if lam > EXP_CAP { 0.0 } else { 1.0 - g * lam.exp() };
                (ll, g, g * h)
            }
        }
    }
}

pub fn default_prob(model: &ModelSpec, v: &[f64], class: usize) -> Result<f64> {
    model.check_dim(v)?;
    let x = model.exponent(v, class);
    Ok(match model.link {
        Link::Logit => logit_prob(x),
        _ => intensity_prob(x),
    })
}

pub fn censor_prob(model: &ModelSpec, v: &[f64], class: usize) -> Result<f64> {
    if model.link != Link::Bihazard {
        return Err(Error::WrongLink {
            expected: "bihazard".into(),
            found: model.link.name().into(),
        });
    }
    model.check_dim(v)?;
    let psi = capped_exp(model.exponent(v, class)).0;
    let phi = capped_exp(model.censor_exponent(v)).0;
    Ok((-psi).exp() * -(-phi).exp_m1())
}

/// Survival probability `exp(−ψ − φ)` of the bi-hazard model.
pub fn survival_prob(model: &ModelSpec, v: &[f64], class: usize) -> Result<f64> {
    if model.link != Link::Bihazard {
        return Err(Error::WrongLink {
            expected: "bihazard".into(),
            found: model.link.name().into(),
        });
    }
    model.check_dim(v)?;
    let psi = capped_exp(model.exponent(v, class)).0;
    let phi = capped_exp(model.censor_exponent(v)).0;
    Ok((-psi - phi).exp())
}

/// Counters gathered while drawing exits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExitDiagnostics {
    /// Firm-periods whose exponent exceeded the cap.
    pub infinite_hazard: usize,
}

/// Exit drawn for one firm path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmExit {
    /// Rows observed, the exit row included.
    pub rows: usize,
    pub outcome: Outcome,
    /// Rows whose exponent exceeded the cap.
    pub capped: usize,
}

/// Walk a firm's covariate rows with one uniform per period from the firm's
/// own stream; the default test comes first, then censoring.
pub fn draw_firm_exit(model: &ModelSpec, path: &[f64], class: usize, seed: u64, firm: u64) -> FirmExit {
    let d = model.dim();
    let bihazard = model.link == Link::Bihazard;
    let mut rng = substream(seed, Purpose::Exits, firm);
    let mut capped = 0;
    let mut n = 0;
    for v in path.chunks_exact(d) {
        n += 1;
        let x = model.exponent(v, class);
        if x > EXP_CAP {
            capped += 1;
        }
        let pd = match model.link {
            Link::Logit => logit_prob(x),
            _ => intensity_prob(x),
        };
        let u: f64 = rng.random();
        if u < pd {
            return FirmExit { rows: n, outcome: Outcome::Default, capped };
        }
        if bihazard {
            let psi = capped_exp(x).0;
            let phi = capped_exp(model.censor_exponent(v)).0;
            let pc = (-psi).exp() * -(-phi).exp_m1();
            if u < pd + pc {
                return FirmExit { rows: n, outcome: Outcome::Censor, capped };
            }
        }
    }
    FirmExit { rows: n, outcome: Outcome::None, capped }
}

/// Draw default and censoring exits over a covariate block.
///
/// Each firm uses one uniform per period from its own stream; the default
/// test comes first, then censoring. Rows after an exit are dropped.
pub fn simulate_exits(
    block: &CovariateBlock,
    model: &ModelSpec,
    classes: Option<&[u32]>,
    seed: u64,
) -> Result<(Panel, ExitDiagnostics)> {
    model.validate()?;
    let d = block.dim();
    if model.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: model.dim(),
        });
    }
    let m = block.firm_count();
    if let Some(c) = classes {
        if c.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: c.len(),
            });
        }
        if let Some(k) = model.alpha.class_count() {
            if let Some(&bad) = c.iter().find(|&&c| c as usize >= k) {
                return Err(Error::InvalidSpec(format!("class {} has no intercept", bad)));
            }
        }
    }
    struct FirmOut {
        rows: Vec<f64>,
        firm: Firm,
        capped: usize,
    }
    let run_firm = |i: usize| -> FirmOut {
        let class = classes.map_or(0, |c| c[i]);
        let path = block.firm_path(i);
        let s0 = block.entry(i);
        let exit = draw_firm_exit(model, &path, class as usize, seed, i as u64);
        let (n, outcome, capped) = (exit.rows, exit.outcome, exit.capped);
        let mut rows = path;
        rows.truncate(n * d);
        FirmOut {
            rows,
            firm: Firm {
                id: i as u64,
                class,
                entry: s0,
                exit: s0 + n - 1,
                outcome,
            },
            capped,
        }
    };
    let outs: Vec<FirmOut> = (0..m).into_par_iter().map(run_firm).collect();

    let total: usize = outs.iter().map(|o| o.rows.len() / d).sum();
    let mut rows = Rows::with_capacity(d, total, m);
    let mut firms = Vec::with_capacity(m);
    let mut diag = ExitDiagnostics::default();
    for o in outs {
        let last = o.rows.len() / d - 1;
        for (k, v) in o.rows.chunks_exact(d).enumerate() {
            let flag = if k == last { o.firm.outcome } else { Outcome::None };
            rows.push(v, flag, o.firm.class, (o.firm.entry + k) as u32);
        }
        rows.end_firm();
        diag.infinite_hazard += o.capped;
        firms.push(o.firm);
    }
    Ok((
        Panel::new_unchecked(block.period_count(), block.spec().common_dim, firms, rows),
        diag,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gproc::{simulate_covariates, CovariateProcessSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(link: Link, beta: Vec<f64>, alpha: f64) -> ModelSpec {
        ModelSpec {
            link,
            beta,
            alpha: Alpha::Scalar(alpha),
            vartheta: None,
            alpha2: None,
            dim_scale: None,
        }
    }

    #[test]
    fn link_values_at_zero_exponent() {
        let m = model(Link::Intensity, vec![0.0], 0.0);
        assert_relative_eq!(default_prob(&m, &[1.0], 0).unwrap(), 0.632_120_558_828_557_7, epsilon = 1e-15);
        let m = model(Link::Logit, vec![0.0], 0.0);
        assert_eq!(default_prob(&m, &[1.0], 0).unwrap(), 0.5);
        assert!(matches!(default_prob(&m, &[1.0, 2.0], 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn tiny_intensity_is_accurate() {
        let m = model(Link::Intensity, vec![0.0], 20.0);
        let p = default_prob(&m, &[0.0], 0).unwrap();
        // 1 − exp(−ε) = ε − ε²/2 + ε³/6 to double precision for ε = e^{−20}
        let e = (-20f64).exp();
        let oracle = e - e * e / 2.0 + e * e * e / 6.0;
        assert!(((p - oracle) / oracle).abs() <= 1e-12);
    }

    #[test]
    fn highdim_scales_exponent() {
        let mut m = model(Link::Highdim, vec![1.0; 4], 0.0);
        m.dim_scale = Some(4);
        let p = default_prob(&m, &[1.0; 4], 0).unwrap();
        assert_relative_eq!(p, intensity_prob(2.0), epsilon = 1e-15);
    }

    #[test]
    fn bihazard_small_example() {
        let l2 = 2f64.ln().ln();
        let m = ModelSpec {
            link: Link::Bihazard,
            beta: vec![0.0],
            alpha: Alpha::Scalar(-l2),
            vartheta: Some(vec![0.0]),
            alpha2: Some(-l2),
            dim_scale: None,
        };
        assert_relative_eq!(default_prob(&m, &[0.0], 0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(censor_prob(&m, &[0.0], 0).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(survival_prob(&m, &[0.0], 0).unwrap(), 0.25, epsilon = 1e-15);
        let far = ModelSpec {
            alpha2: Some(1e6),
            ..m.clone()
        };
        assert_eq!(censor_prob(&far, &[0.0], 0).unwrap(), 0.0);
        let plain = model(Link::Intensity, vec![0.0], 0.0);
        assert!(matches!(censor_prob(&plain, &[0.0], 0), Err(Error::WrongLink { .. })));
    }

    proptest! {
        #[test]
        fn bihazard_outcomes_form_a_distribution(
            b in -3.0f64..3.0, t in -3.0f64..3.0, v in -3.0f64..3.0,
            a1 in -5.0f64..12.0, a2 in -5.0f64..12.0,
        ) {
            let m = ModelSpec {
                link: Link::Bihazard,
                beta: vec![b],
                alpha: Alpha::Scalar(a1),
                vartheta: Some(vec![t]),
                alpha2: Some(a2),
                dim_scale: None,
            };
            let p = default_prob(&m, &[v], 0).unwrap();
            let c = censor_prob(&m, &[v], 0).unwrap();
            let s = survival_prob(&m, &[v], 0).unwrap();
            for q in [p, c, s] {
                prop_assert!((0.0..=1.0).contains(&q));
            }
            prop_assert!((p + c + s - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn links_are_monotone(x in -40.0f64..1.5, dx in 1e-3f64..2.0, y in -40.0f64..28.0) {
            // ranges stop where the probability rounds to 1 in double precision
            prop_assert!(intensity_prob(x + dx) > intensity_prob(x));
            prop_assert!(logit_prob(y + dx) > logit_prob(y));
        }

        #[test]
        fn first_order_agreement(x in -40.0f64..-5.0) {
            let e = x.exp();
            // slack of a few ulps of e for rounding
            let ulp = 4.0 * f64::EPSILON * e;
            prop_assert!((intensity_prob(x) - e).abs() <= 0.5 * e * e + ulp);
            prop_assert!((logit_prob(x) - e).abs() <= e * e + ulp);
        }

        #[test]
        fn row_terms_match_finite_differences(x in -12.0f64..3.0, event in any::<bool>(), logit in any::<bool>()) {
            let link = if logit { Link::Logit } else { Link::Intensity };
            let h = 1e-5;
            let (l, g, hh) = row_terms(link, x, event);
            let (lp, gp, _) = row_terms(link, x + h, event);
            let (lm, gm, _) = row_terms(link, x - h, event);
            let fd1 = (lp - lm) / (2.0 * h);
            let fd2 = (gp - gm) / (2.0 * h);
            prop_assert!((fd1 - g).abs() <= 1e-6 * (1.0 + g.abs()));
            prop_assert!((fd2 - hh).abs() <= 1e-6 * (1.0 + hh.abs()));
            let p = if logit { logit_prob(x) } else { intensity_prob(x) };
            let naive = if event { p.ln() } else { (1.0 - p).ln() };
            prop_assert!((naive - l).abs() <= 1e-9 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn sentinel_intercepts() {
        let spec = CovariateProcessSpec::standard(1, 2);
        let block = simulate_covariates(&spec, 20, 15, None, 1).unwrap();
        let never = model(Link::Intensity, vec![0.3; 3], f64::INFINITY);
        let (p, _) = simulate_exits(&block, &never, None, 2).unwrap();
        assert!(p.firms().iter().all(|f| f.exit == 14 && f.outcome == Outcome::None));
        let always = model(Link::Intensity, vec![0.3; 3], f64::NEG_INFINITY);
        let (p, diag) = simulate_exits(&block, &always, None, 2).unwrap();
        assert!(p.firms().iter().all(|f| f.exit == f.entry && f.outcome == Outcome::Default));
        assert_eq!(diag.infinite_hazard, 20);
        p.validate().unwrap();
        assert!(always.validate_finite().is_err());
    }

    #[test]
    fn default_count_matches_conditional_expectation() {
        // Conditional on the realized covariate paths the firms are independent,
        // so the exact expected count and variance are available.
        let spec = CovariateProcessSpec::standard(2, 10);
        let beta = vec![-0.2, 0.5, 0.5, 0.2, -1.0, 0.3, -0.2, 0.5, 0.5, 0.2, -0.5, 0.3];
        let m = 10_000;
        let block = simulate_covariates(&spec, m, 200, None, 17).unwrap();
        let model = ModelSpec::intensity(beta, 8.5);
        let (panel, _) = simulate_exits(&block, &model, None, 18).unwrap();
        panel.validate().unwrap();
        let (mut mean, mut var) = (0.0, 0.0);
        for i in 0..m {
            let path = block.firm_path(i);
            let surv: f64 = path.chunks(12).map(|v| 1.0 - default_prob(&model, v, 0).unwrap()).product();
            mean += 1.0 - surv;
            var += surv * (1.0 - surv);
        }
        let got = crate::panel::summarize(&panel).default_count as f64;
        assert!((got - mean).abs() <= 3.0 * var.sqrt(), "{} vs {}", got, mean);
        assert!((got - mean).abs() <= 3.0 * mean.sqrt());
    }

    #[test]
    fn exits_are_conditionally_uncorrelated() {
        // Freeze a single covariate path shared by all firms (no idiosyncratic
        // part) and compare exit indicators of paired firms.
        let spec = CovariateProcessSpec::standard(1, 0);
        let block = simulate_covariates(&spec, 20_000, 30, None, 3).unwrap();
        let model = ModelSpec::intensity(vec![1.0], 4.0);
        let (panel, _) = simulate_exits(&block, &model, None, 4).unwrap();
        let ind: Vec<f64> = panel
            .firms()
            .iter()
            .map(|f| (f.outcome == Outcome::Default) as u8 as f64)
            .collect();
        let n = ind.len() / 2;
        let (a, b) = ind.split_at(n);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let sd = (ma * (1.0 - ma) * mb * (1.0 - mb)).sqrt();
        let corr = cov / sd;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {}", corr);
    }

    #[test]
    fn simulation_is_reproducible() {
        let spec = CovariateProcessSpec::standard(1, 2);
        let block = simulate_covariates(&spec, 50, 40, None, 5).unwrap();
        let model = ModelSpec::intensity(vec![0.5, 0.5, 0.5], 3.0);
        let a = simulate_exits(&block, &model, None, 6).unwrap().0;
        let b = simulate_exits(&block, &model, None, 6).unwrap().0;
        assert_eq!(a, b);
    }
}
