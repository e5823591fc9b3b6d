//! Stationary Gaussian covariate processes, covariance estimation,
//! gaussianizing transforms and Gaussian exponential-moment oracles.
//!
//! Covariates are split into `d1` common factors `Y_t`, shared by every firm
//! alive at `t`, followed by `d2` idiosyncratic coordinates `X_{i,t}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, packed_len, packed_rank1, tree_reduce, unpack};
use crate::panel::{Firm, Outcome, Panel, Rows};
use crate::rng::{substream, Purpose};

const BURN_IN: usize = 1000;

/// Dynamics of the common-factor block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Dynamics {
    /// `Y_t = coeff * Y_{t-1} + e_t`, coordinate-wise.
    Ar1 { coeff: f64 },
    /// `Y_t = sum_j ar[j] Y_{t-j} + e_t + sum_j ma[j] e_{t-j}` with `d1 x d1`
    /// coefficient matrices given as row lists.
    Arma {
        #[serde(default)]
        ar: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        ma: Vec<Vec<Vec<f64>>>,
    },
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics::Ar1 { coeff: 0.3 }
    }
}

/// Deterministic cyclic drift `amplitude * sin(frequency * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    #[default]
    Gaussian,
    /// Emit `exp(z)` of the Gaussian value; used for non-Gaussian robustness runs.
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateProcessSpec {
    pub common_dim: usize,
    pub idio_dim: usize,
    #[serde(default)]
    pub dynamics: Dynamics,
    /// AR(1) coefficient of the idiosyncratic block; 0 gives i.i.d. draws.
    #[serde(default)]
    pub idio_ar: f64,
    /// Innovation covariance (d x d). Identity when absent. The blocks coupling
    /// common and idiosyncratic coordinates must be zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub marginal: Marginal,
}

impl CovariateProcessSpec {
    /// Benchmark process: AR(0.3) common factors, i.i.d. N(0,1) idiosyncratic.
    pub fn standard(common_dim: usize, idio_dim: usize) -> Self {
        CovariateProcessSpec {
            common_dim,
            idio_dim,
            dynamics: Dynamics::default(),
            idio_ar: 0.0,
            innovation_cov: None,
            drift: None,
            normalize: false,
            marginal: Marginal::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        self.common_dim + self.idio_dim
    }

    fn innovation(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        match &self.innovation_cov {
            None => Ok(DMatrix::identity(d, d)),
            Some(rows) => {
                let m = linalg::matrix_from_rows(rows).map_err(|_| Error::InvalidSpec("innovation_cov is ragged".into()))?;
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::InvalidSpec(format!(
                        "innovation_cov is {}x{}, expected {}x{}",
                        m.nrows(),
                        m.ncols(),
                        d,
                        d
                    )));
                }
                Ok(m)
            }
        }
    }

    /// Companion matrices (AR part) and MA matrices of the common block.
    fn common_coeffs(&self) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        let d1 = self.common_dim;
        match &self.dynamics {
            Dynamics::Ar1 { coeff } => Ok((vec![DMatrix::identity(d1, d1) * *coeff], Vec::new())),
            Dynamics::Arma { ar, ma } => {
                let conv = |ms: &Vec<Vec<Vec<f64>>>, what: &str| -> Result<Vec<DMatrix<f64>>> {
                    ms.iter()
                        .map(|rows| {
                            let m = linalg::matrix_from_rows(rows)
                                .map_err(|_| Error::InvalidSpec(format!("{} matrix is ragged", what)))?;
                            if m.nrows() != d1 || m.ncols() != d1 {
                                return Err(Error::InvalidSpec(format!("{} matrices must be {}x{}", what, d1, d1)));
                            }
                            Ok(m)
                        })
                        .collect()
                };
                Ok((conv(ar, "ar")?, conv(ma, "ma")?))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidSpec("covariate dimension is zero".into()));
        }
        let sig = self.innovation()?;
        linalg::require_pd(&sig).map_err(|_| Error::InvalidSpec("innovation_cov is not symmetric positive definite".into()))?;
        let d1 = self.common_dim;
        for i in 0..d1 {
            for j in d1..self.dim() {
                if sig[(i, j)] != 0.0 {
                    return Err(Error::InvalidSpec(
                        "innovation_cov couples common and idiosyncratic blocks".into(),
                    ));
                }
            }
        }
        if !(self.idio_ar.abs() < 1.0) {
            return Err(Error::InvalidSpec(format!("idio_ar = {} is not causal", self.idio_ar)));
        }
        let (ar, _) = self.common_coeffs()?;
        if d1 > 0 {
            let rho = spectral_radius(&companion(&ar, d1));
            if !(rho < 1.0 - 1e-12) {
                return Err(Error::InvalidSpec(format!(
                    "common dynamics are not causal (spectral radius {:.6})",
                    rho
                )));
            }
        }
        if let Some(dr) = &self.drift {
            if !dr.amplitude.is_finite() || !dr.frequency.is_finite() {
                return Err(Error::InvalidSpec("drift must be finite".into()));
            }
        }
        Ok(())
    }

    /// Stationary covariance of the (un-drifted, Gaussian-scale) output.
    pub fn stationary_cov(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let d1 = self.common_dim;
        let d = self.dim();
        let sig = self.innovation()?;
        let raw = self.raw_stationary_cov(&sig)?;
        let mut out = DMatrix::zeros(d, d);
        out.view_mut((0, 0), (d1, d1)).copy_from(&raw.view((0, 0), (d1, d1)));
        out.view_mut((d1, d1), (d - d1, d - d1))
            .copy_from(&raw.view((d1, d1), (d - d1, d - d1)));
        if self.normalize {
            let s: Vec<f64> = (0..d).map(|k| raw[(k, k)].sqrt()).collect();
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] /= s[i] * s[j];
                }
            }
        }
        Ok(out)
    }

    fn raw_stationary_cov(&self, sig: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d1 = self.common_dim;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        if d1 > 0 {
            let (ar, ma) = self.common_coeffs()?;
            let syy = sig.view((0, 0), (d1, d1)).into_owned();
            out.view_mut((0, 0), (d1, d1))
                .copy_from(&arma_stationary_cov(&ar, &ma, &syy));
        }
        let phi2 = self.idio_ar * self.idio_ar;
        let sxx = sig.view((d1, d1), (d - d1, d - d1)).into_owned() / (1.0 - phi2);
        out.view_mut((d1, d1), (d - d1, d - d1)).copy_from(&sxx);
        Ok(out)
    }
}

fn companion(ar: &[DMatrix<f64>], d1: usize) -> DMatrix<f64> {
    let p = ar.len().max(1);
    let mut c = DMatrix::zeros(d1 * p, d1 * p);
    for (j, a) in ar.iter().enumerate() {
        c.view_mut((0, j * d1), (d1, d1)).copy_from(a);
    }
    for j in 1..p {
        c.view_mut((j * d1, (j - 1) * d1), (d1, d1))
            .copy_from(&DMatrix::identity(d1, d1));
    }
    c
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Stationary covariance of a causal VARMA(p, q) via its state-space form,
/// iterating the Lyapunov recursion to a fixed point.
fn arma_stationary_cov(ar: &[DMatrix<f64>], ma: &[DMatrix<f64>], syy: &DMatrix<f64>) -> DMatrix<f64> {
    let d1 = syy.nrows();
    let p = ar.len().max(1);
    let q = ma.len();
    // state s_t = (Y_t, .., Y_{t-p+1}, e_t, .., e_{t-q+1})
    let n = d1 * (p + q);
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (d1 * p, d1 * p)).copy_from(&companion(ar, d1));
    for (j, m) in ma.iter().enumerate() {
        // Y_t gets ma[j] e_{t-1-j}, which is state slot j of the shifted e block
        a.view_mut((0, d1 * p + j * d1), (d1, d1)).copy_from(m);
    }
    for j in 1..q {
        a.view_mut((d1 * p + j * d1, d1 * p + (j - 1) * d1), (d1, d1))
            .copy_from(&DMatrix::identity(d1, d1));
    }
    // e_t loads on Y_t and on the first e slot
    let mut b = DMatrix::zeros(n, d1);
    b.view_mut((0, 0), (d1, d1)).copy_from(&DMatrix::identity(d1, d1));
    if q > 0 {
        b.view_mut((d1 * p, 0), (d1, d1)).copy_from(&DMatrix::identity(d1, d1));
    }
    let qm = &b * syy * b.transpose();
    let mut g = qm.clone();
    for _ in 0..100_000 {
        let next = &a * &g * a.transpose() + &qm;
        let diff = (&next - &g).amax();
        g = next;
        if diff < 1e-14 * g.amax().max(1.0) {
            break;
        }
    }
    g.view((0, 0), (d1, d1)).into_owned()
}

/// A simulated covariate panel before exits are drawn.
///
/// The common path is stored; idiosyncratic rows are regenerated on demand
/// from the firm's own RNG stream, so a large block costs `O(T d1)` memory.
#[derive(Debug, Clone)]
pub struct CovariateBlock {
    spec: CovariateProcessSpec,
    firm_count: usize,
    period_count: usize,
    entry: Vec<usize>,
    seed: u64,
    common: Vec<f64>,
    idio_chol: DMatrix<f64>,
    idio_scale: Vec<f64>,
    idio_start_scale: f64,
}

pub fn simulate_covariates(
    spec: &CovariateProcessSpec,
    m: usize,
    t: usize,
    entry_times: Option<&[usize]>,
    seed: u64,
) -> Result<CovariateBlock> {
    spec.validate()?;
    if m == 0 || t == 0 {
        return Err(Error::InvalidSpec("firm count and period count must be positive".into()));
    }
    let entry = match entry_times {
        Some(e) => {
            if e.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: e.len(),
                });
            }
            if let Some(&bad) = e.iter().find(|&&s| s >= t) {
                return Err(Error::InvalidSpec(format!("entry time {} outside 0..{}", bad, t)));
            }
            e.to_vec()
        }
        None => vec![0; m],
    };
    let d1 = spec.common_dim;
    let d = spec.dim();
    let sig = spec.innovation()?;
    let raw = spec.raw_stationary_cov(&sig)?;
    let scale: Vec<f64> = (0..d)
        .map(|k| if spec.normalize { raw[(k, k)].sqrt() } else { 1.0 })
        .collect();

    let common = if d1 > 0 {
        simulate_common(spec, &sig, t, seed, &scale[..d1])?
    } else {
        Vec::new()
    };
    let sxx = sig.view((d1, d1), (d - d1, d - d1)).into_owned();
    let idio_chol = if d > d1 {
        sxx.cholesky().ok_or(Error::InvalidSpec("idiosyncratic innovation block not PD".into()))?.l()
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(CovariateBlock {
        spec: spec.clone(),
        firm_count: m,
        period_count: t,
        entry,
        seed,
        common,
        idio_chol,
        idio_scale: scale[d1..].to_vec(),
        idio_start_scale: 1.0 / (1.0 - spec.idio_ar * spec.idio_ar).sqrt(),
    })
}

fn draw_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn simulate_common(
    spec: &CovariateProcessSpec,
    sig: &DMatrix<f64>,
    t: usize,
    seed: u64,
    scale: &[f64],
) -> Result<Vec<f64>> {
    let d1 = spec.common_dim;
    let syy = sig.view((0, 0), (d1, d1)).into_owned();
    let l = syy.clone().cholesky().ok_or(Error::InvalidSpec("common innovation block not PD".into()))?.l();
    let mut rng = substream(seed, Purpose::CommonFactors, 0);
    let shock = |rng: &mut ChaCha8Rng| -> DVector<f64> { &l * DVector::from_vec(draw_normals(rng, d1)) };
    let drift = |s: usize| spec.drift.map_or(0.0, |dr| dr.amplitude * (dr.frequency * s as f64).sin());

    let mut out = Vec::with_capacity(t * d1);
    match &spec.dynamics {
        Dynamics::Ar1 { coeff } => {
            // exact stationary initial draw
            let mut y = shock(&mut rng) / (1.0 - coeff * coeff).sqrt();
            y.add_scalar_mut(drift(0));
            for s in 0..t {
                if s > 0 {
                    y = &y * *coeff + shock(&mut rng);
                    y.add_scalar_mut(drift(s));
                }
                out.extend(y.iter().zip(scale).map(|(v, c)| v / c));
            }
        }
        Dynamics::Arma { .. } => {
            let (ar, ma) = spec.common_coeffs()?;
            let p = ar.len();
            let q = ma.len();
            let mut ys: Vec<DVector<f64>> = vec![DVector::zeros(d1); p.max(1)];
            let mut es: Vec<DVector<f64>> = vec![DVector::zeros(d1); q.max(1)];
            for s in 0..BURN_IN + t {
                let e = shock(&mut rng);
                let mut y = e.clone();
                for j in 0..p {
                    y += &ar[j] * &ys[j];
                }
                for j in 0..q {
                    y += &ma[j] * &es[j];
                }
                if s >= BURN_IN {
                    y.add_scalar_mut(drift(s - BURN_IN));
                }
                if p > 0 {
                    ys.rotate_right(1);
                    ys[0] = y.clone();
                }
                if q > 0 {
                    es.rotate_right(1);
                    es[0] = e;
                }
                if s >= BURN_IN {
                    out.extend(y.iter().zip(scale).map(|(v, c)| v / c));
                }
            }
        }
    }
    Ok(out)
}

impl CovariateBlock {
    pub fn spec(&self) -> &CovariateProcessSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn firm_count(&self) -> usize {
        self.firm_count
    }

    pub fn period_count(&self) -> usize {
        self.period_count
    }

    pub fn entry(&self, i: usize) -> usize {
        self.entry[i]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Common factors at period `t`.
    pub fn common(&self, t: usize) -> &[f64] {
        let d1 = self.spec.common_dim;
        &self.common[t * d1..(t + 1) * d1]
    }

    /// Rows `entry_i..T` of firm `i`, row-major.
    pub fn firm_path(&self, i: usize) -> Vec<f64> {
        let d1 = self.spec.common_dim;
        let d2 = self.spec.idio_dim;
        let d = d1 + d2;
        let s0 = self.entry[i];
        let n = self.period_count - s0;
        let mut out = vec![0.0; n * d];
        let mut rng = substream(self.seed, Purpose::Idiosyncratic, i as u64);
        let mut x = DVector::<f64>::zeros(d2);
        let phi = self.spec.idio_ar;
        for k in 0..n {
            let t = s0 + k;
            let row = &mut out[k * d..(k + 1) * d];
            row[..d1].copy_from_slice(self.common(t));
            if d2 > 0 {
                let e = &self.idio_chol * DVector::from_vec(draw_normals(&mut rng, d2));
                x = if k == 0 { e * self.idio_start_scale } else { &x * phi + e };
                let drift = self
                    .spec
                    .drift
                    .map_or(0.0, |dr| dr.amplitude * (dr.frequency * t as f64).sin());
                for j in 0..d2 {
                    row[d1 + j] = (x[j] + drift) / self.idio_scale[j];
                }
            }
            if self.spec.marginal == Marginal::Lognormal {
                for v in row.iter_mut() {
                    *v = v.exp();
                }
            }
        }
        out
    }

    /// All covariate rows as a panel with no exits.
    pub fn to_panel(&self) -> Panel {
        let d = self.dim();
        let paths: Vec<Vec<f64>> = (0..self.firm_count).into_par_iter().map(|i| self.firm_path(i)).collect();
        let total: usize = paths.iter().map(|p| p.len() / d).sum();
        let mut rows = Rows::with_capacity(d, total, self.firm_count);
        let mut firms = Vec::with_capacity(self.firm_count);
        for (i, path) in paths.iter().enumerate() {
            let s0 = self.entry[i];
            for (k, v) in path.chunks_exact(d).enumerate() {
                rows.push(v, Outcome::None, 0, (s0 + k) as u32);
            }
            rows.end_firm();
            firms.push(Firm {
                id: i as u64,
                class: 0,
                entry: s0,
                exit: self.period_count - 1,
                outcome: Outcome::None,
            });
        }
        Panel::new_unchecked(self.period_count, self.spec.common_dim, firms, rows)
    }
}

// ---------------------------------------------------------------------------
// covariance estimation

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: DMatrix<f64>,
    pub jitter_applied: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CovarianceOptions {
    #[serde(default)]
    pub center: bool,
    #[serde(default)]
    pub jitter: f64,
}

impl CovarianceEstimate {
    /// Wrap a known covariance matrix.
    pub fn known(sigma: DMatrix<f64>) -> Self {
        CovarianceEstimate {
            sigma,
            jitter_applied: 0.0,
            sample_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `Σ⁻¹ b` by Cholesky; fails on singular or indefinite estimates.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        let (lo, hi) = linalg::eig_range(&self.sigma);
        if !(lo > 1e-12 * hi.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularCovariance);
        }
        linalg::spd_solve(&self.sigma, b)
    }
}

/// Second-moment matrix of all rows, `(1/N) Σ v vᵀ`, optionally centered.
pub fn estimate_covariance(rows: &Rows, opts: CovarianceOptions) -> Result<CovarianceEstimate> {
    let n = rows.len();
    let d = rows.dim();
    if n == 0 {
        return Err(Error::InsufficientData("no firm-period rows".into()));
    }
    let parts: Vec<(Vec<f64>, Vec<f64>)> = rows
        .chunks()
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![0.0; packed_len(d)];
            let mut sum = vec![0.0; d];
            for r in range {
                let v = rows.row(r);
                packed_rank1(&mut acc, 1.0, v);
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
            (acc, sum)
        })
        .collect();
    let (acc, sum) = tree_reduce(parts, |mut a, b| {
        a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
        a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
        a
    })
    .unwrap();
    let nf = n as f64;
    let mut sigma = unpack(&acc, d) / nf;
    if opts.center {
        let mean = DVector::from_vec(sum) / nf;
        sigma -= &mean * mean.transpose();
    }
    let mut jitter_applied = 0.0;
    if opts.jitter > 0.0 {
        let (lo, _) = linalg::eig_range(&sigma);
        if lo <= 0.0 {
            sigma += DMatrix::identity(d, d) * opts.jitter;
            jitter_applied = opts.jitter;
        }
    }
    Ok(CovarianceEstimate {
        sigma,
        jitter_applied,
        sample_count: n,
    })
}

// ---------------------------------------------------------------------------
// gaussianizing transforms

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedTransform {
    /// log(x + 1)
    Log1p,
    /// log x
    Log,
    /// (x - 2)^3
    CubeShift2,
    /// log(log(x + 1))
    LogLog1p,
    /// sqrt x
    Sqrt,
}

impl NamedTransform {
    fn name(self) -> &'static str {
        match self {
            NamedTransform::Log1p => "log1p",
            NamedTransform::Log => "log",
            NamedTransform::CubeShift2 => "cube_shift2",
            NamedTransform::LogLog1p => "loglog1p",
            NamedTransform::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            NamedTransform::Log1p,
            NamedTransform::Log,
            NamedTransform::CubeShift2,
            NamedTransform::LogLog1p,
            NamedTransform::Sqrt,
        ]
        .into_iter()
        .find(|t| t.name() == s)
    }

    fn eval(self, x: f64) -> Result<f64> {
        let dom = |ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::DomainViolation {
                    transform: self.name().into(),
                    value: x,
                })
            }
        };
        match self {
            NamedTransform::Log1p => dom(x > -1.0).map(|_| x.ln_1p()),
            NamedTransform::Log => dom(x > 0.0).map(|_| x.ln()),
            NamedTransform::CubeShift2 => Ok((x - 2.0).powi(3)),
            NamedTransform::LogLog1p => dom(x > 0.0).map(|_| x.ln_1p().ln()),
            NamedTransform::Sqrt => dom(x >= 0.0).map(|_| x.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianizeMethod {
    NormalScores,
    Named(NamedTransform),
}

/// Reusable record of a fitted named transform: `(f(x - shift) - mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub name: String,
    pub shift: f64,
    pub mean: f64,
    pub sd: f64,
}

impl TransformRecord {
    pub fn apply(&self, x: f64) -> Result<f64> {
        let t = NamedTransform::from_name(&self.name).ok_or_else(|| Error::InvalidSpec(format!("unknown transform `{}`", self.name)))?;
        Ok((t.eval(x - self.shift)? - self.mean) / self.sd)
    }
}

pub fn gaussianize(series: &[f64], method: GaussianizeMethod) -> Result<(Vec<f64>, Option<TransformRecord>)> {
    let n = series.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("series of length {} (need >= 3)", n)));
    }
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::ConstantSeries);
    }
    match method {
        GaussianizeMethod::NormalScores => {
            let ranks = average_ranks(series);
            let z = Normal::standard();
            let nf = n as f64;
            Ok((ranks.iter().map(|r| z.inverse_cdf((r - 0.5) / nf)).collect(), None))
        }
        GaussianizeMethod::Named(t) => {
            let shift = if lo < 0.0 { lo } else { 0.0 };
            let y = series.iter().map(|&x| t.eval(x - shift)).collect::<Result<Vec<f64>>>()?;
            let nf = n as f64;
            let mean = y.iter().sum::<f64>() / nf;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
            if !(var > 0.0) {
                return Err(Error::ConstantSeries);
            }
            let sd = var.sqrt();
            let rec = TransformRecord {
                name: t.name().into(),
                shift,
                mean,
                sd,
            };
            Ok((y.iter().map(|v| (v - mean) / sd).collect(), Some(rec)))
        }
    }
}

/// 1-based ranks, ties sharing their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

// ---------------------------------------------------------------------------
// Gaussian exponential moments

/// `(E e^{βᵀV}, E V e^{βᵀV})` for `V ~ N(0, Σ)`.
pub fn gaussian_exp_moments(sigma: &DMatrix<f64>, beta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    linalg::require_pd(sigma)?;
    if beta.len() != sigma.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: beta.len(),
        });
    }
    let sb = sigma * beta;
    let e = (0.5 * beta.dot(&sb)).exp();
    Ok((e, sb * e))
}
