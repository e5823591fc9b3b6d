//! Closed-form and convex-program approximations to the MLE.
//!
//! The central identity: for Gaussian `V ~ N(0, Σ)` and rare exits,
//! `E[V e^{βᵀV}] / E[e^{βᵀV}] = Σβ`, so the average covariate just before a
//! default estimates `Σβ`, and `β̂ = Σ⁻¹ŵ`.

use std::fmt::Debug;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, FitDiagnostics};
use crate::gproc::{estimate_covariance, CovarianceEstimate, CovarianceOptions};
use crate::hazard::Alpha;
use crate::linalg::{self, dot, tree_reduce};
use crate::panel::{Outcome, Rows};

/// Event-weighted covariate sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStatistics {
    pub rows: usize,
    /// `Σ v d` over default rows.
    pub vhat: DVector<f64>,
    /// Number of defaults.
    pub dhat: usize,
    pub class_vhat: Vec<DVector<f64>>,
    pub class_dhat: Vec<usize>,
    /// `Σ v m` over censoring rows.
    pub censor_vhat: DVector<f64>,
    pub censor_count: usize,
}

impl MomentStatistics {
    /// `ŵ = V̂ / D̂`.
    pub fn what(&self) -> Result<DVector<f64>> {
        if self.dhat == 0 {
            return Err(Error::NoDefaultsObserved);
        }
        Ok(&self.vhat / self.dhat as f64)
    }

    pub fn censor_what(&self) -> Result<DVector<f64>> {
        if self.censor_count == 0 {
            return Err(Error::NoCensorObserved);
        }
        Ok(&self.censor_vhat / self.censor_count as f64)
    }

    /// Class-conditional average `ĝ_k`, normalized by the class's own defaults.
    pub fn class_what(&self, k: usize) -> Result<DVector<f64>> {
        match self.class_dhat.get(k) {
            Some(&n) if n > 0 => Ok(&self.class_vhat[k] / n as f64),
            _ => Err(Error::ClassWithoutDefaults(k)),
        }
    }

    /// Class default shares `f̂_k`.
    pub fn class_shares(&self) -> Result<Vec<f64>> {
        if self.dhat == 0 {
            return Err(Error::NoDefaultsObserved);
        }
        Ok(self.class_dhat.iter().map(|&n| n as f64 / self.dhat as f64).collect())
    }
}

pub fn moment_statistics(rows: &Rows) -> MomentStatistics {
    let d = rows.dim();
    let k = rows.class_count();
    let parts: Vec<MomentStatistics> = rows
        .chunks()
        .into_par_iter()
        .map(|range| {
            let mut s = MomentStatistics {
                rows: range.len(),
                vhat: DVector::zeros(d),
                dhat: 0,
                class_vhat: vec![DVector::zeros(d); k],
                class_dhat: vec![0; k],
                censor_vhat: DVector::zeros(d),
                censor_count: 0,
            };
            for r in range {
                match rows.outcome(r) {
                    Outcome::Default => {
                        let v = DVector::from_row_slice(rows.row(r));
                        let c = rows.class(r);
                        s.vhat += &v;
                        s.dhat += 1;
                        s.class_vhat[c] += v;
                        s.class_dhat[c] += 1;
                    }
                    Outcome::Censor => {
                        s.censor_vhat += DVector::from_row_slice(rows.row(r));
                        s.censor_count += 1;
                    }
                    Outcome::None => {}
                }
            }
            s
        })
        .collect();
    tree_reduce(parts, |mut a, b| {
        a.rows += b.rows;
        a.vhat += b.vhat;
        a.dhat += b.dhat;
        for (x, y) in a.class_vhat.iter_mut().zip(b.class_vhat) {
            *x += y;
        }
        for (x, y) in a.class_dhat.iter_mut().zip(b.class_dhat) {
            *x += y;
        }
        a.censor_vhat += b.censor_vhat;
        a.censor_count += b.censor_count;
        a
    })
    .unwrap_or(MomentStatistics {
        rows: 0,
        vhat: DVector::zeros(d),
        dhat: 0,
        class_vhat: vec![DVector::zeros(d); k],
        class_dhat: vec![0; k],
        censor_vhat: DVector::zeros(d),
        censor_count: 0,
    })
}

/// `β̂ = Σ⁻¹ ŵ`.
pub fn closed_form_beta(rows: &Rows, sigma: &CovarianceEstimate) -> Result<DVector<f64>> {
    let stats = moment_statistics(rows);
    sigma.solve(&stats.what()?)
}

/// Alias of [`closed_form_beta`] for noise-corrupted covariates; the caller
/// chooses which covariance (known, clean-subset or noisy estimate) to pair
/// with the noisy moments.
pub fn corrupted_closed_form(noisy: &Rows, sigma: &CovarianceEstimate) -> Result<DVector<f64>> {
    closed_form_beta(noisy, sigma)
}

/// Per-class `log Σ_rows exp(s·cᵀv)` via a pairwise log-sum-exp.
fn class_log_sum_exp(rows: &Rows, coef: &[f64], scale: f64) -> Vec<f64> {
    let k = rows.class_count();
    let parts: Vec<Vec<(f64, f64)>> = rows
        .chunks()
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![(f64::NEG_INFINITY, 0.0); k];
            for r in range {
                let x = scale * dot(coef, rows.row(r));
                let (m, s) = &mut acc[rows.class(r)];
                if x > *m {
                    *s = *s * (*m - x).exp() + 1.0;
                    *m = x;
                } else {
                    *s += (x - *m).exp();
                }
            }
            acc
        })
        .collect();
    let merged = tree_reduce(parts, |a, b| {
        a.into_iter()
            .zip(b)
            .map(|((m1, s1), (m2, s2))| {
                if m1 == f64::NEG_INFINITY {
                    (m2, s2)
                } else if m2 == f64::NEG_INFINITY {
                    (m1, s1)
                } else {
                    let m = m1.max(m2);
                    (m, s1 * (m1 - m).exp() + s2 * (m2 - m).exp())
                }
            })
            .collect()
    })
    .unwrap_or_else(|| vec![(f64::NEG_INFINITY, 0.0); k]);
    merged.into_iter().map(|(m, s)| m + s.ln()).collect()
}

/// `log Σ_rows exp(s·cᵀv)` over all classes.
fn log_sum_exp_all(rows: &Rows, coef: &[f64], scale: f64) -> f64 {
    let lse = class_log_sum_exp(rows, coef, scale);
    let m = lse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + lse.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// `α̂ = log(Σ exp(s·cᵀv) / N_event)` per class, for exits of kind `event`.
pub fn closed_form_alpha_for(rows: &Rows, coef: &[f64], scale: f64, event: Outcome) -> Result<Vec<f64>> {
    let k = rows.class_count();
    let mut counts = vec![0usize; k];
    for r in 0..rows.len() {
        if rows.outcome(r) == event {
            counts[rows.class(r)] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(match event {
            Outcome::Censor => Error::NoCensorObserved,
            _ => Error::NoDefaultsObserved,
        });
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ClassWithoutDefaults(c));
    }
    let lse = class_log_sum_exp(rows, coef, scale);
    Ok(lse.iter().zip(&counts).map(|(l, &n)| l - (n as f64).ln()).collect())
}

/// `α̂_k = log(Σ_{class k} exp(β̂ᵀv) / D_k)`.
pub fn closed_form_alpha(rows: &Rows, beta_hat: &DVector<f64>) -> Result<Vec<f64>> {
    closed_form_alpha_for(rows, beta_hat.as_slice(), 1.0, Outcome::Default)
}

/// Where the covariance for the closed form comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSource {
    Known(DMatrix<f64>),
    Estimate(CovarianceOptions),
}

impl Default for SigmaSource {
    fn default() -> Self {
        SigmaSource::Estimate(CovarianceOptions::default())
    }
}

impl SigmaSource {
    pub fn resolve(&self, rows: &Rows) -> Result<CovarianceEstimate> {
        match self {
            SigmaSource::Known(s) => {
                if s.nrows() != rows.dim() || s.ncols() != rows.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: rows.dim(),
                        found: s.nrows(),
                    });
                }
                Ok(CovarianceEstimate::known(s.clone()))
            }
            SigmaSource::Estimate(opts) => estimate_covariance(rows, *opts),
        }
    }
}

fn closed_form_result(method: &str, beta: DVector<f64>, alpha: Vec<f64>) -> EstimateResult {
    EstimateResult {
        method: method.into(),
        beta: beta.as_slice().to_vec(),
        alpha: Alpha::from_vec(alpha),
        vartheta: None,
        alpha2: None,
        diagnostics: FitDiagnostics {
            converged: true,
            ..FitDiagnostics::default()
        },
    }
}

/// The proposed estimator `(β̂, α̂_k)`.
pub fn proposed(rows: &Rows, sigma: &SigmaSource) -> Result<EstimateResult> {
    let s = sigma.resolve(rows)?;
    let beta = closed_form_beta(rows, &s)?;
    let alpha = closed_form_alpha(rows, &beta)?;
    Ok(closed_form_result("proposed", beta, alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoringEstimate {
    pub beta: DVector<f64>,
    pub vartheta: DVector<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: f64,
}

impl CensoringEstimate {
    pub fn into_result(self) -> EstimateResult {
        EstimateResult {
            vartheta: Some(self.vartheta.as_slice().to_vec()),
            alpha2: Some(self.alpha2),
            ..closed_form_result("censoring", self.beta, self.alpha1)
        }
    }
}

/// Default and censoring hazards estimated separately from their own flags.
pub fn closed_form_censoring(rows: &Rows, sigma: &CovarianceEstimate) -> Result<CensoringEstimate> {
    let stats = moment_statistics(rows);
    let w_d = stats.what()?;
    let w_m = stats.censor_what()?;
    let beta = sigma.solve(&w_d)?;
    let vartheta = sigma.solve(&w_m)?;
    let alpha1 = closed_form_alpha_for(rows, beta.as_slice(), 1.0, Outcome::Default)?;
    // the censoring intercept is shared across classes
    let alpha2 = log_sum_exp_all(rows, vartheta.as_slice(), 1.0) - (stats.censor_count as f64).ln();
    Ok(CensoringEstimate {
        beta,
        vartheta,
        alpha1,
        alpha2,
    })
}

// ---------------------------------------------------------------------------
// multiple classes with a shared common-factor coefficient

/// Source of the block covariances `Σ_YY`, `Σ_YXk`, `Σ_XkXk`.
#[derive(Debug, Clone, PartialEq)]
pub enum MulticlassCovariance {
    /// One known `d x d` matrix used for every class.
    Known(DMatrix<f64>),
    /// `Σ_YXk`, `Σ_XkXk` from each class's rows; `Σ_YY` from all rows.
    ClassWise,
    /// All blocks from all rows.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassEstimate {
    pub theta: DVector<f64>,
    pub eta: Vec<DVector<f64>>,
    pub alpha: Vec<f64>,
    pub shares: Vec<f64>,
}

impl MulticlassEstimate {
    /// `(θ̂, η̂_k)` stacked into a full coefficient vector.
    pub fn beta(&self, k: usize) -> DVector<f64> {
        let mut v = self.theta.as_slice().to_vec();
        v.extend_from_slice(self.eta[k].as_slice());
        DVector::from_vec(v)
    }
}

fn second_moment_where(rows: &Rows, keep: impl Fn(usize) -> bool) -> DMatrix<f64> {
    let d = rows.dim();
    let mut acc = vec![0.0; linalg::packed_len(d)];
    let mut n = 0usize;
    for r in 0..rows.len() {
        if keep(r) {
            linalg::packed_rank1(&mut acc, 1.0, rows.row(r));
            n += 1;
        }
    }
    linalg::unpack(&acc, d) / (n.max(1) as f64)
}

/// Shared-θ estimator over `K` classes. The first `shared_dim` coordinates
/// are the common factors `Y` with a coefficient `θ` shared by all classes;
/// the rest are `X` with class-specific `η_k`.
pub fn closed_form_multiclass_shared_theta(
    rows: &Rows,
    shared_dim: usize,
    cov: &MulticlassCovariance,
) -> Result<MulticlassEstimate> {
    let d = rows.dim();
    let dy = shared_dim;
    let dx = d - dy;
    let stats = moment_statistics(rows);
    let k = rows.class_count();
    if stats.dhat == 0 {
        return Err(Error::NoDefaultsObserved);
    }
    let shares = stats.class_shares()?;
    let g: Vec<DVector<f64>> = (0..k).map(|c| stats.class_what(c)).collect::<Result<_>>()?;
    let e = stats.what()?.rows(0, dy).into_owned();

    let full_all = match cov {
        MulticlassCovariance::Known(s) => {
            if s.nrows() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.nrows(),
                });
            }
            s.clone()
        }
        _ => second_moment_where(rows, |_| true),
    };
    let class_cov: Vec<DMatrix<f64>> = (0..k)
        .map(|c| match cov {
            MulticlassCovariance::ClassWise => second_moment_where(rows, |r| rows.class(r) == c),
            _ => full_all.clone(),
        })
        .collect();
    let syy = full_all.view((0, 0), (dy, dy)).into_owned();
    let syy_scale = syy.amax().max(f64::MIN_POSITIVE);

    let mut a = syy;
    let mut rhs = e;
    // per class: Σ_XkXk⁻¹ Σ_XkY and Σ_XkXk⁻¹ ĝ_k
    let mut solved = Vec::with_capacity(k);
    for c in 0..k {
        let s = &class_cov[c];
        let sxx = s.view((dy, dy), (dx, dx)).into_owned();
        let sxy = s.view((dy, 0), (dx, dy)).into_owned();
        let chol = sxx.cholesky().ok_or(Error::SingularCovariance)?;
        let gx = g[c].rows(dy, dx).into_owned();
        let inv_sxy = chol.solve(&sxy);
        let inv_g = chol.solve(&gx);
        let syx = sxy.transpose();
        a -= &syx * &inv_sxy * shares[c];
        rhs -= &syx * &inv_g * shares[c];
        solved.push((inv_sxy, inv_g));
    }
    let theta = if dy == 0 {
        DVector::zeros(0)
    } else {
        let a_sym = (&a + a.transpose()) * 0.5;
        let ev = a_sym.symmetric_eigenvalues();
        if ev.iter().any(|e| e.abs() <= 1e-10 * syy_scale) {
            return Err(Error::SingularSchurComplement);
        }
        linalg::lu_solve(&a, &rhs).map_err(|_| Error::SingularSchurComplement)?
    };
    let eta: Vec<DVector<f64>> = solved
        .iter()
        .map(|(inv_sxy, inv_g)| inv_g - inv_sxy * &theta)
        .collect();

    // class-wise intercepts from each class's own coefficient vector
    let mut alpha = Vec::with_capacity(k);
    for c in 0..k {
        let mut coef = theta.as_slice().to_vec();
        coef.extend_from_slice(eta[c].as_slice());
        let keep: Vec<bool> = (0..rows.len()).map(|r| rows.class(r) == c).collect();
        let sub = rows.filter(&keep);
        let lse = class_log_sum_exp(&sub, &coef, 1.0);
        alpha.push(lse[c] - (stats.class_dhat[c] as f64).ln());
    }
    Ok(MulticlassEstimate {
        theta,
        eta,
        alpha,
        shares,
    })
}

// ---------------------------------------------------------------------------
// high-dimensional scaling

/// `β̂ = √d·ŵ` on the high-dimensional block (all coordinates by default),
/// `ŵ` elsewhere; identity covariance is assumed.
pub fn closed_form_highdim(rows: &Rows, d: usize, high: Option<Range<usize>>) -> Result<(DVector<f64>, f64)> {
    let stats = moment_statistics(rows);
    let w = stats.what()?;
    let high = high.unwrap_or(0..rows.dim());
    let sd = (d as f64).sqrt();
    let mut beta = w.clone();
    for j in high.clone() {
        beta[j] *= sd;
    }
    // exponent coefficients: β̂ᴴ/√d on the high block, β̂ᴸ elsewhere, i.e. ŵ
    // on the high block
    let mut coef = beta.clone();
    for j in high {
        coef[j] /= sd;
    }
    let alpha = log_sum_exp_all(rows, coef.as_slice(), 1.0) - (stats.dhat as f64).ln();
    Ok((beta, alpha))
}

// ---------------------------------------------------------------------------
// regularization

/// A concave penalty `u(b)`; the regularized objectives add `λ·u(b)`.
pub trait ConcavePenalty: Debug + Send + Sync {
    fn value(&self, b: &DVector<f64>) -> f64;
    fn gradient(&self, b: &DVector<f64>) -> DVector<f64>;
    /// Exact Hessian when available.
    fn hessian(&self, _b: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `u(b) = −½ bᵀZb`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgePenalty {
    pub z: DMatrix<f64>,
}

impl ConcavePenalty for RidgePenalty {
    fn value(&self, b: &DVector<f64>) -> f64 {
        -0.5 * b.dot(&(&self.z * b))
    }
    fn gradient(&self, b: &DVector<f64>) -> DVector<f64> {
        -(&self.z * b)
    }
    fn hessian(&self, _b: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(-self.z.clone())
    }
}

#[derive(Debug, Clone)]
pub enum Penalty {
    None,
    Ridge { z: DMatrix<f64>, lambda: f64 },
    /// `u(b) = −‖b‖₁`.
    Lasso { lambda: f64 },
    Custom { u: Arc<dyn ConcavePenalty>, lambda: f64 },
}

impl Penalty {
    pub fn lambda(&self) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::Ridge { lambda, .. } | Penalty::Lasso { lambda } | Penalty::Custom { lambda, .. } => *lambda,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let lam = self.lambda();
        if !(lam >= 0.0) || !lam.is_finite() {
            return Err(Error::InvalidSpec("lambda must be finite and non-negative".into()));
        }
        if let Penalty::Ridge { z, .. } = self {
            if z.nrows() != d || z.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: z.nrows(),
                });
            }
            if !linalg::is_symmetric(z, 1e-12) || linalg::eig_range(z).0 < -1e-12 {
                return Err(Error::InvalidSpec("ridge Z must be symmetric positive semidefinite".into()));
            }
        }
        Ok(())
    }

    /// `u(b)` (without λ), or `None` for no penalty.
    pub fn value(&self, b: &DVector<f64>) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::Ridge { z, .. } => -0.5 * b.dot(&(z * b)),
            Penalty::Lasso { .. } => -b.iter().map(|x| x.abs()).sum::<f64>(),
            Penalty::Custom { u, .. } => u.value(b),
        }
    }

    /// Smooth gradient and Hessian of `u`; `None` for lasso.
    pub(crate) fn smooth_derivatives(&self, b: &DVector<f64>) -> Option<(DVector<f64>, Option<DMatrix<f64>>)> {
        let d = b.len();
        match self {
            Penalty::None => Some((DVector::zeros(d), Some(DMatrix::zeros(d, d)))),
            Penalty::Ridge { z, .. } => Some((-(z * b), Some(-z.clone()))),
            Penalty::Lasso { .. } => None,
            Penalty::Custom { u, .. } => Some((u.gradient(b), u.hessian(b))),
        }
    }
}

/// Serializable regularizer description used in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegularizerSpec {
    None,
    Ridge {
        lambda: f64,
        /// Defaults to the identity.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<Vec<Vec<f64>>>,
    },
    Lasso {
        lambda: f64,
    },
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec::None
    }
}

impl RegularizerSpec {
    pub fn to_penalty(&self, d: usize) -> Result<Penalty> {
        let p = match self {
            RegularizerSpec::None => Penalty::None,
            RegularizerSpec::Ridge { lambda, z } => Penalty::Ridge {
                z: match z {
                    Some(rows) => linalg::matrix_from_rows(rows)?,
                    None => DMatrix::identity(d, d),
                },
                lambda: *lambda,
            },
            RegularizerSpec::Lasso { lambda } => Penalty::Lasso { lambda: *lambda },
        };
        p.validate(d)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub optimality: f64,
    pub objective_trace: Vec<f64>,
}

const REG_TOL: f64 = 1e-10;
const REG_MAX_ITER: usize = 1000;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Maximize `f(b) = bᵀŵ − ½bᵀΣb + λu(b)`.
///
/// Ridge has the closed form `(Σ + λZ)⁻¹ŵ`. Smooth penalties use damped
/// Newton with Armijo backtracking; lasso uses proximal gradient with step
/// `1/L`, `L` the largest eigenvalue of `Σ`.
pub fn regularized_closed_form(what: &DVector<f64>, sigma: &DMatrix<f64>, reg: &Penalty) -> Result<RegularizedFit> {
    let d = what.len();
    if sigma.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: sigma.nrows(),
        });
    }
    reg.validate(d)?;
    let lam = reg.lambda();
    let f = |b: &DVector<f64>| b.dot(what) - 0.5 * b.dot(&(sigma * b)) + lam * reg.value(b);
    match reg {
        Penalty::None | Penalty::Ridge { .. } => {
            let a = match reg {
                Penalty::Ridge { z, .. } => sigma + z * lam,
                _ => sigma.clone(),
            };
            let beta = linalg::lu_solve(&a, what)?;
            let val = f(&beta);
            Ok(RegularizedFit {
                beta,
                iterations: 0,
                converged: true,
                optimality: 0.0,
                objective_trace: vec![val],
            })
        }
        Penalty::Lasso { .. } => {
            let (_, l) = linalg::eig_range(sigma);
            if !(l > 0.0) {
                return Err(Error::SingularSystem);
            }
            let mut b = DVector::zeros(d);
            let mut trace = vec![f(&b)];
            let mut opt = f64::INFINITY;
            for it in 1..=REG_MAX_ITER {
                let grad = what - sigma * &b;
                let step = &b + grad / l;
                let next = step.map(|x| soft_threshold(x, lam / l));
                opt = (&next - &b).amax() * l;
                b = next;
                let val = f(&b);
                if val < trace.last().unwrap() - 1e-12 * val.abs().max(1.0) {
                    return Err(Error::NonConcaveRegularizer);
                }
                trace.push(val);
                if opt <= REG_TOL {
                    return Ok(RegularizedFit {
                        beta: b,
                        iterations: it,
                        converged: true,
                        optimality: opt,
                        objective_trace: trace,
                    });
                }
            }
            Ok(RegularizedFit {
                beta: b,
                iterations: REG_MAX_ITER,
                converged: false,
                optimality: opt,
                objective_trace: trace,
            })
        }
        Penalty::Custom { u, .. } => {
            let mut b = DVector::zeros(d);
            let mut fb = f(&b);
            let mut trace = vec![fb];
            let mut opt = f64::INFINITY;
            for it in 0..REG_MAX_ITER {
                let grad = what - sigma * &b + u.gradient(&b) * lam;
                opt = grad.amax();
                if opt <= REG_TOL {
                    return Ok(RegularizedFit {
                        beta: b,
                        iterations: it,
                        converged: true,
                        optimality: opt,
                        objective_trace: trace,
                    });
                }
                // −H = Σ − λ∇²u is positive definite when u is concave
                let neg_h = match u.hessian(&b) {
                    Some(h) => sigma - h * lam,
                    None => sigma.clone(),
                };
                let dir = match neg_h.cholesky() {
                    Some(c) => c.solve(&grad),
                    None => return Err(Error::NonConcaveRegularizer),
                };
                let slope = grad.dot(&dir);
                if !(slope > 0.0) {
                    return Err(Error::NonConcaveRegularizer);
                }
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    let cand = &b + &dir * t;
                    let fc = f(&cand);
                    if fc >= fb + 1e-4 * t * slope {
                        b = cand;
                        fb = fc;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    // no ascent along an ascent direction: at numerical optimum
                    // or the objective is not concave
                    if opt <= 1e-6 {
                        break;
                    }
                    return Err(Error::NonConcaveRegularizer);
                }
                trace.push(fb);
            }
            Ok(RegularizedFit {
                beta: b,
                iterations: trace.len() - 1,
                converged: opt <= REG_TOL,
                optimality: opt,
                objective_trace: trace,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Outcome;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// One firm per listed row; `flags` marks which rows carry a default.
    fn rows_from(xs: &[&[f64]], flags: &[Outcome]) -> Rows {
        let d = xs[0].len();
        let mut r = Rows::empty(d);
        for (v, o) in xs.iter().zip(flags) {
            r.push(v, *o, 0, 0);
            r.end_firm();
        }
        r
    }

    fn ident(d: usize) -> CovarianceEstimate {
        CovarianceEstimate::known(DMatrix::identity(d, d))
    }

    #[test]
    fn beta_from_single_default() {
        let rows = rows_from(&[&[0.3, -0.4], &[5.0, 5.0]], &[Outcome::Default, Outcome::None]);
        let b = closed_form_beta(&rows, &ident(2)).unwrap();
        assert_eq!(b.as_slice(), &[0.3, -0.4]);
    }

    #[test]
    fn beta_from_two_defaults_and_correlated_sigma() {
        let rows = rows_from(&[&[1.0, 0.0], &[0.0, 1.0]], &[Outcome::Default, Outcome::Default]);
        let b = closed_form_beta(&rows, &ident(2)).unwrap();
        assert_eq!(b.as_slice(), &[0.5, 0.5]);

        let rows = rows_from(&[&[1.0, 1.0]], &[Outcome::Default]);
        let s = CovarianceEstimate::known(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let b = closed_form_beta(&rows, &s).unwrap();
        assert_relative_eq!(b[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(b[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn beta_needs_defaults() {
        let rows = rows_from(&[&[1.0]], &[Outcome::None]);
        assert!(matches!(closed_form_beta(&rows, &ident(1)), Err(Error::NoDefaultsObserved)));
    }

    #[test]
    fn alpha_with_zero_beta() {
        let mut flags = vec![Outcome::None; 100];
        flags[7] = Outcome::Default;
        let xs: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 * 0.01]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let rows = rows_from(&refs, &flags);
        let a = closed_form_alpha(&rows, &DVector::zeros(1)).unwrap();
        assert_relative_eq!(a[0], 100f64.ln(), epsilon = 1e-13);
        flags[50] = Outcome::Default;
        let rows = rows_from(&refs, &flags);
        let a = closed_form_alpha(&rows, &DVector::zeros(1)).unwrap();
        assert_relative_eq!(a[0], 50f64.ln(), epsilon = 1e-13);
    }

    /// Neumaier-compensated sum of exponentials as an accuracy oracle.
    fn compensated_log_sum_exp(xs: &[f64]) -> f64 {
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for &x in xs {
            let y = (x - m).exp();
            let t = s + y;
            if s.abs() >= y.abs() {
                c += (s - t) + y;
            } else {
                c += (y - t) + s;
            }
            s = t;
        }
        m + (s + c).ln()
    }

    proptest! {
        #[test]
        fn alpha_matches_compensated_sum(
            xs in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 5..60),
            b in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let mut flags = vec![Outcome::None; xs.len()];
            flags[0] = Outcome::Default;
            flags[xs.len() - 1] = Outcome::Default;
            let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            let rows = rows_from(&refs, &flags);
            let beta = DVector::from_vec(b.clone());
            let a = closed_form_alpha(&rows, &beta).unwrap()[0];
            let ex: Vec<f64> = xs.iter().map(|v| dot(&b, v)).collect();
            let oracle = compensated_log_sum_exp(&ex) - 2f64.ln();
            prop_assert!((a - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));

            // shifting every exponent by c shifts α̂ by c
            let c = 0.75;
            let mut xs2 = xs.clone();
            for v in xs2.iter_mut() { v.push(1.0); }
            let refs2: Vec<&[f64]> = xs2.iter().map(|v| v.as_slice()).collect();
            let rows2 = rows_from(&refs2, &flags);
            let mut b2 = b.clone();
            b2.push(c);
            let a2 = closed_form_alpha(&rows2, &DVector::from_vec(b2)).unwrap()[0];
            prop_assert!((a2 - a - c).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn beta_is_rotation_equivariant(
            xs in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 8..40),
            angles in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let mut flags = vec![Outcome::None; xs.len()];
            for k in (0..xs.len()).step_by(3) { flags[k] = Outcome::Default; }
            let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            let rows = rows_from(&refs, &flags);
            let sig = match estimate_covariance(&rows, CovarianceOptions::default()) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            prop_assume!(linalg::eig_range(&sig.sigma).0 > 1e-3);
            let b = closed_form_beta(&rows, &sig).unwrap();
            let q = nalgebra::Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
            let qm = DMatrix::from_row_slice(3, 3, q.matrix().transpose().as_slice());
            let mut rot = rows.clone();
            rot.map_rows(|_, v| {
                let w = &qm * DVector::from_row_slice(v);
                v.copy_from_slice(w.as_slice());
            });
            let sig_r = estimate_covariance(&rot, CovarianceOptions::default()).unwrap();
            let br = closed_form_beta(&rot, &sig_r).unwrap();
            let expect = &qm * &b;
            prop_assert!((br - expect).amax() <= 1e-10 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn beta_ignores_non_default_rows_when_sigma_known() {
        let rows = rows_from(
            &[&[1.0, 2.0], &[0.1, 0.2], &[-1.0, 0.5], &[3.0, 3.0]],
            &[Outcome::Default, Outcome::None, Outcome::Default, Outcome::None],
        );
        let s = CovarianceEstimate::known(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let b = closed_form_beta(&rows, &s).unwrap();
        let kept = rows.filter(&[true, false, true, false]);
        assert_eq!(closed_form_beta(&kept, &s).unwrap(), b);
    }

    #[test]
    fn censoring_estimates() {
        let rows = rows_from(&[&[1.0, 1.0], &[0.0, 0.0]], &[Outcome::Default, Outcome::None]);
        assert!(matches!(closed_form_censoring(&rows, &ident(2)), Err(Error::NoCensorObserved)));

        let rows = rows_from(
            &[&[1.0, 0.5], &[2.0, -1.0], &[0.0, 0.0], &[0.3, 0.3]],
            &[Outcome::Default, Outcome::Censor, Outcome::None, Outcome::None],
        );
        let est = closed_form_censoring(&rows, &ident(2)).unwrap();
        assert_eq!(est.vartheta.as_slice(), &[2.0, -1.0]);
        let swapped = closed_form_censoring(&rows.swap_exit_kinds(), &ident(2)).unwrap();
        assert_eq!(swapped.beta, est.vartheta);
        assert_eq!(swapped.vartheta, est.beta);
        assert_eq!(swapped.alpha1[0], est.alpha2);
        assert_eq!(swapped.alpha2, est.alpha1[0]);
    }

    fn random_rows(n: usize, d: usize, classes: u32, seed: u64) -> Rows {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, crate::rng::Purpose::Noise, 0);
        let mut r = Rows::empty(d);
        for i in 0..n {
            let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0 + 0.1 * (i % 3) as f64).collect();
            let o = if rng.random::<f64>() < 0.2 { Outcome::Default } else { Outcome::None };
            r.push(&v, o, (i as u32) % classes, 0);
            r.end_firm();
        }
        r
    }

    #[test]
    fn multiclass_single_class_matches_full_closed_form() {
        let rows = random_rows(400, 4, 1, 9);
        let sig = estimate_covariance(&rows, CovarianceOptions::default()).unwrap();
        let full = closed_form_beta(&rows, &sig).unwrap();
        for cov in [
            MulticlassCovariance::Pooled,
            MulticlassCovariance::ClassWise,
            MulticlassCovariance::Known(sig.sigma.clone()),
        ] {
            let est = closed_form_multiclass_shared_theta(&rows, 2, &cov).unwrap();
            assert!((est.beta(0) - &full).amax() <= 1e-10);
            let a = closed_form_alpha(&rows, &full).unwrap();
            assert!((est.alpha[0] - a[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn multiclass_identical_classes_agree() {
        // duplicate every row into class 0 and class 1
        let base = random_rows(300, 3, 1, 4);
        let mut rows = Rows::empty(3);
        for c in 0..2u32 {
            for r in 0..base.len() {
                rows.push(base.row(r), base.outcome(r), c, 0);
                rows.end_firm();
            }
        }
        let est = closed_form_multiclass_shared_theta(&rows, 1, &MulticlassCovariance::ClassWise).unwrap();
        assert!((&est.eta[0] - &est.eta[1]).amax() <= 1e-12);
        assert!((est.alpha[0] - est.alpha[1]).abs() <= 1e-12);
        assert_eq!(est.shares, vec![0.5, 0.5]);
    }

    #[test]
    fn multiclass_shares_and_errors() {
        let mut rows = Rows::empty(2);
        let cls = [0, 0, 0, 1, 1];
        let out = [Outcome::Default, Outcome::Default, Outcome::Default, Outcome::Default, Outcome::None];
        let xs = [[1.0, 0.2], [0.5, -0.3], [-0.2, 0.9], [0.3, 0.3], [1.1, -0.7]];
        for i in 0..5 {
            rows.push(&xs[i], out[i], cls[i], 0);
            rows.end_firm();
        }
        let est = closed_form_multiclass_shared_theta(&rows, 1, &MulticlassCovariance::Known(DMatrix::identity(2, 2))).unwrap();
        assert_eq!(est.shares, vec![0.75, 0.25]);
        let no_def = rows.with_outcomes(vec![Outcome::Default, Outcome::None, Outcome::None, Outcome::None, Outcome::None]);
        assert!(matches!(
            closed_form_multiclass_shared_theta(&no_def, 1, &MulticlassCovariance::Pooled),
            Err(Error::ClassWithoutDefaults(1))
        ));
        let degenerate = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        // Σ_YY − Σ_YX Σ_XX⁻¹ Σ_XY = 1 − 1/2 ≠ 0; make it singular instead
        let singular = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 2.0]);
        assert!(closed_form_multiclass_shared_theta(&rows, 1, &MulticlassCovariance::Known(degenerate)).is_ok());
        assert!(matches!(
            closed_form_multiclass_shared_theta(&rows, 1, &MulticlassCovariance::Known(singular)),
            Err(Error::SingularSchurComplement)
        ));
    }

    #[test]
    fn highdim_scaling() {
        let rows = rows_from(&[&[0.1], &[0.7]], &[Outcome::Default, Outcome::None]);
        let (b, _) = closed_form_highdim(&rows, 1, None).unwrap();
        assert_eq!(b, closed_form_beta(&rows, &ident(1)).unwrap());
        let rows = rows_from(&[&[0.1, 0.1, 0.1, 0.1]], &[Outcome::Default]);
        let (b, a) = closed_form_highdim(&rows, 4, None).unwrap();
        for v in b.iter() {
            assert_relative_eq!(*v, 0.2, epsilon = 1e-15);
        }
        // one row, exponent β̂ᵀv/2 = 0.04
        assert_relative_eq!(a, 0.04, epsilon = 1e-15);
        let (b, _) = closed_form_highdim(&rows, 4, Some(0..2)).unwrap();
        assert_relative_eq!(b[0], 0.2, epsilon = 1e-15);
        assert_relative_eq!(b[3], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn ridge_closed_form_examples() {
        let w = DVector::from_vec(vec![1.0, 2.0]);
        let s = DMatrix::identity(2, 2);
        let none = regularized_closed_form(&w, &s, &Penalty::None).unwrap();
        assert_eq!(none.beta, w);
        let ridge = regularized_closed_form(
            &w,
            &s,
            &Penalty::Ridge {
                z: DMatrix::identity(2, 2),
                lambda: 1.0,
            },
        )
        .unwrap();
        assert_eq!(ridge.beta.as_slice(), &[0.5, 1.0]);
        let zero = regularized_closed_form(
            &w,
            &s,
            &Penalty::Ridge {
                z: DMatrix::identity(2, 2),
                lambda: 0.0,
            },
        )
        .unwrap();
        assert_eq!(zero.beta, w);
    }

    proptest! {
        #[test]
        fn ridge_matches_generic_solver(
            w in proptest::collection::vec(-3.0f64..3.0, 3),
            a in proptest::collection::vec(-1.0f64..1.0, 9),
            zd in proptest::collection::vec(0.0f64..2.0, 3),
            lambda in 0.0f64..5.0,
        ) {
            let am = DMatrix::from_row_slice(3, 3, &a);
            let sigma = &am * am.transpose() + DMatrix::identity(3, 3) * 0.5;
            let z = DMatrix::from_diagonal(&DVector::from_vec(zd));
            let w = DVector::from_vec(w);
            let closed = regularized_closed_form(&w, &sigma, &Penalty::Ridge { z: z.clone(), lambda }).unwrap();
            let generic = regularized_closed_form(
                &w,
                &sigma,
                &Penalty::Custom { u: Arc::new(RidgePenalty { z }), lambda },
            ).unwrap();
            prop_assert!((closed.beta - &generic.beta).amax() <= 1e-8);
            prop_assert!(generic.objective_trace.windows(2).all(|p| p[1] >= p[0]));
        }

        #[test]
        fn lasso_kills_small_signals(w in proptest::collection::vec(-3.0f64..3.0, 4), extra in 0.0f64..1.0) {
            let w = DVector::from_vec(w);
            let lambda = w.amax() + extra;
            let fit = regularized_closed_form(&w, &DMatrix::identity(4, 4), &Penalty::Lasso { lambda }).unwrap();
            prop_assert!(fit.beta.iter().all(|&b| b == 0.0));
        }

        #[test]
        fn lasso_matches_soft_threshold_with_identity(w in proptest::collection::vec(-3.0f64..3.0, 4), lambda in 0.0f64..2.0) {
            let w = DVector::from_vec(w);
            let fit = regularized_closed_form(&w, &DMatrix::identity(4, 4), &Penalty::Lasso { lambda }).unwrap();
            for (b, x) in fit.beta.iter().zip(w.iter()) {
                prop_assert!((b - soft_threshold(*x, lambda)).abs() <= 1e-12);
            }
        }
    }

    #[derive(Debug)]
    struct Convex;
    impl ConcavePenalty for Convex {
        fn value(&self, b: &DVector<f64>) -> f64 {
            b.norm_squared() * 2.0
        }
        fn gradient(&self, b: &DVector<f64>) -> DVector<f64> {
            b * 4.0
        }
        fn hessian(&self, b: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::identity(b.len(), b.len()) * 4.0)
        }
    }

    #[test]
    fn non_concave_penalty_detected() {
        let w = DVector::from_vec(vec![1.0, -1.0]);
        let r = regularized_closed_form(
            &w,
            &DMatrix::identity(2, 2),
            &Penalty::Custom {
                u: Arc::new(Convex),
                lambda: 1.0,
            },
        );
        assert!(matches!(r, Err(Error::NonConcaveRegularizer)));
    }
}
