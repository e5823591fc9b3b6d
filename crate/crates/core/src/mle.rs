//! Exact maximum likelihood for the intensity, logit, bi-hazard and
//! high-dimensional links.
//!
//! Parameters are stacked as `θ = (b, a_1, …, a_K)`, one intercept per firm
//! class. Both single-hazard log-likelihoods are concave in the exponent, so
//! damped Newton with an Armijo line search is the default solver.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{self, Penalty, SigmaSource};
use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, FitDiagnostics};
use crate::hazard::{row_terms, Alpha, Link, ModelSpec};
use crate::linalg::{self, dot, tree_reduce};
use crate::panel::{Outcome, Rows};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Newton,
    /// Quasi-Newton; iteration counts grow with the distance from the seed.
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Gradient sup-norm at most `grad_tol`.
    #[default]
    Gradient,
    /// Change in log-likelihood between iterations below `tol`.
    LikelihoodDelta { tol: f64 },
}

/// Starting point of the solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitPoint {
    /// `b = 0` with the matching closed-form intercepts `log(N_k / D_k)`.
    #[default]
    Zeros,
    /// The closed-form estimator.
    Proposed,
    Explicit { beta: Vec<f64>, alpha: Vec<f64> },
    /// `center + scale·N(0, I)` over every coordinate; `center` defaults to
    /// the zero seed.
    GaussianPerturbed {
        center: Option<(Vec<f64>, Vec<f64>)>,
        scale: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub solver: SolverKind,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub stop: StopRule,
    pub init: InitPoint,
    /// Freeze the intercepts at these values and fit `b` only.
    pub fixed_alpha: Option<Vec<f64>>,
    /// Adds `λ·D·u(b)` to the log-likelihood, `D` the number of events.
    pub penalty: Penalty,
    /// Covariance for the `Proposed` seed.
    pub sigma: SigmaSource,
    /// `d` in the `1/√d` scaling of the high-dimensional link.
    pub dim_scale: Option<usize>,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            solver: SolverKind::Newton,
            max_iter: 500,
            grad_tol: 1e-8,
            stop: StopRule::Gradient,
            init: InitPoint::Zeros,
            fixed_alpha: None,
            penalty: Penalty::None,
            sigma: SigmaSource::default(),
            dim_scale: None,
            record_trace: false,
        }
    }
}

/// One single-hazard likelihood block.
#[derive(Debug, Clone, Copy)]
struct Problem<'a> {
    rows: &'a Rows,
    /// `Intensity` or `Logit`.
    link: Link,
    scale: f64,
    event: Outcome,
    /// Rows with this outcome are left out of the block.
    skip: Option<Outcome>,
    classes: usize,
}

struct Eval {
    ll: f64,
    grad: DVector<f64>,
    hess: Option<DMatrix<f64>>,
}

struct Acc {
    ll: f64,
    gb: Vec<f64>,
    ga: Vec<f64>,
    s2: Vec<f64>,
    s1: Vec<f64>,
    s0: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn dim(&self) -> usize {
        self.rows.dim()
    }

    fn event_count(&self) -> usize {
        self.rows.count(self.event)
    }

    fn class_event_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for r in 0..self.rows.len() {
            if self.rows.outcome(r) == self.event {
                c[self.rows.class(r)] += 1;
            }
        }
        c
    }

    fn class_row_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for r in 0..self.rows.len() {
            if Some(self.rows.outcome(r)) != self.skip {
                c[self.rows.class(r)] += 1;
            }
        }
        c
    }

    /// Log-likelihood, gradient and optionally Hessian at `(b, a)`.
    fn evaluate(&self, b: &[f64], a: &[f64], want_hess: bool) -> Result<Eval> {
        let d = self.dim();
        let k = self.classes;
        let s = self.scale;
        let rows = self.rows;
        let parts: Vec<Acc> = rows
            .chunks()
            .into_par_iter()
            .map(|range| {
                let mut acc = Acc {
                    ll: 0.0,
                    gb: vec![0.0; d],
                    ga: vec![0.0; k],
                    s2: if want_hess { vec![0.0; linalg::packed_len(d)] } else { Vec::new() },
                    s1: if want_hess { vec![0.0; k * d] } else { Vec::new() },
                    s0: vec![0.0; k],
                };
                for r in range {
                    let o = rows.outcome(r);
                    if Some(o) == self.skip {
                        continue;
                    }
                    let v = rows.row(r);
                    let c = rows.class(r);
                    let x = s * dot(b, v) - a[c];
                    let (l, l1, l2) = row_terms(self.link, x, o == self.event);
                    acc.ll += l;
                    for (g, vj) in acc.gb.iter_mut().zip(v) {
                        *g += l1 * vj;
                    }
                    acc.ga[c] -= l1;
                    if want_hess {
                        linalg::packed_rank1(&mut acc.s2, l2, v);
                        for (t, vj) in acc.s1[c * d..(c + 1) * d].iter_mut().zip(v) {
                            *t += l2 * vj;
                        }
                        acc.s0[c] += l2;
                    }
                }
                acc
            })
            .collect();
        let add = |x: &mut Vec<f64>, y: Vec<f64>| {
            for (p, q) in x.iter_mut().zip(y) {
                *p += q;
            }
        };
        let acc = tree_reduce(parts, |mut x, y| {
            x.ll += y.ll;
            add(&mut x.gb, y.gb);
            add(&mut x.ga, y.ga);
            add(&mut x.s2, y.s2);
            add(&mut x.s1, y.s1);
            add(&mut x.s0, y.s0);
            x
        })
        .ok_or(Error::EmptyPanel)?;
        if !acc.ll.is_finite() || acc.gb.iter().chain(&acc.ga).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLikelihood);
        }
        let mut grad = DVector::zeros(d + k);
        for j in 0..d {
            grad[j] = s * acc.gb[j];
        }
        for c in 0..k {
            grad[d + c] = acc.ga[c];
        }
        let hess = if want_hess {
            let mut h = DMatrix::zeros(d + k, d + k);
            let s2 = linalg::unpack(&acc.s2, d) * (s * s);
            h.view_mut((0, 0), (d, d)).copy_from(&s2);
            for c in 0..k {
                for j in 0..d {
                    let v = -s * acc.s1[c * d + j];
                    h[(j, d + c)] = v;
                    h[(d + c, j)] = v;
                }
                h[(d + c, d + c)] = acc.s0[c];
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLikelihood);
            }
            Some(h)
        } else {
            None
        };
        Ok(Eval { ll: acc.ll, grad, hess })
    }
}

/// Links reduced to single-hazard blocks for a model.
fn block_link(link: Link) -> Link {
    match link {
        Link::Logit => Link::Logit,
        _ => Link::Intensity,
    }
}

fn check_dims(rows: &Rows, model: &ModelSpec) -> Result<()> {
    if rows.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: rows.dim(),
            found: model.dim(),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    if let Some(k) = model.alpha.class_count() {
        if rows.class_count() > k {
            return Err(Error::InvalidSpec(format!("class {} has no intercept", k)));
        }
    }
    Ok(())
}

fn model_blocks<'a>(rows: &'a Rows, model: &ModelSpec) -> Vec<(Problem<'a>, Vec<f64>, Vec<f64>)> {
    let classes = rows.class_count().max(model.alpha.class_count().unwrap_or(1));
    let first = Problem {
        rows,
        link: block_link(model.link),
        scale: model.scale(),
        event: Outcome::Default,
        skip: None,
        classes,
    };
    let mut out = vec![(first, model.beta.clone(), model.alpha.to_vec(classes))];
    if model.link == Link::Bihazard {
        let second = Problem {
            rows,
            link: Link::Intensity,
            scale: 1.0,
            event: Outcome::Censor,
            skip: Some(Outcome::Default),
            classes: 1,
        };
        let vt = model.vartheta.clone().unwrap_or_default();
        // one shared censoring intercept: fold every class into class 0
        out.push((second, vt, vec![model.alpha2.unwrap_or(f64::INFINITY)]));
    }
    out
}

/// Total log-likelihood of a panel under a model.
pub fn log_likelihood(rows: &Rows, model: &ModelSpec) -> Result<f64> {
    model.validate()?;
    check_dims(rows, model)?;
    let mut total = 0.0;
    for (p, b, a) in model_blocks(rows, model) {
        let p = collapse_classes(p, &a);
        total += p.0.evaluate(&b, &p.1, false)?.ll;
    }
    Ok(total)
}

/// A bi-hazard censoring block has one intercept; evaluating it over a panel
/// with several classes needs that intercept repeated.
fn collapse_classes<'a>(p: Problem<'a>, a: &[f64]) -> (Problem<'a>, Vec<f64>) {
    if p.classes == a.len() {
        (p, a.to_vec())
    } else {
        let k = p.rows.class_count();
        (Problem { classes: k, ..p }, vec![a[0]; k])
    }
}

/// Score and Hessian in `θ = (β, α_1..α_K)`; for the bi-hazard link the
/// censoring block `(ϑ, α₂)` follows, and the cross blocks are zero.
pub fn score_and_hessian(rows: &Rows, model: &ModelSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.validate()?;
    check_dims(rows, model)?;
    let mut grads = Vec::new();
    let mut hs = Vec::new();
    for (p, b, a) in model_blocks(rows, model) {
        if p.skip.is_some() {
            // censoring block: a single intercept shared by all classes
            let (q, aa) = collapse_classes(p, &a);
            let e = q.evaluate(&b, &aa, true)?;
            let (g, h) = merge_intercepts(&e.grad.clone(), e.hess.as_ref().unwrap(), q.dim());
            grads.push(g);
            hs.push(h);
        } else {
            let e = p.evaluate(&b, &a, true)?;
            grads.push(e.grad);
            hs.push(e.hess.unwrap());
        }
    }
    let n: usize = grads.iter().map(|g| g.len()).sum();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    let mut off = 0;
    for (gi, hi) in grads.iter().zip(&hs) {
        g.rows_mut(off, gi.len()).copy_from(gi);
        h.view_mut((off, off), (gi.len(), gi.len())).copy_from(hi);
        off += gi.len();
    }
    Ok((g, h))
}

/// Sum the per-class intercept coordinates of a gradient and Hessian into one.
fn merge_intercepts(g: &DVector<f64>, h: &DMatrix<f64>, d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = g.len();
    let mut t = DMatrix::zeros(d + 1, n);
    for j in 0..d {
        t[(j, j)] = 1.0;
    }
    for c in d..n {
        t[(d, c)] = 1.0;
    }
    (&t * g, &t * h * t.transpose())
}

/// Asymptotic covariance `(Σ + ΣββᵀΣ)⁻¹ e^{−½βᵀΣβ}` of the scaled slope
/// estimator.
pub fn clt_covariance(sigma: &DMatrix<f64>, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    linalg::require_pd(sigma)?;
    let sb = sigma * beta;
    let m = sigma + &sb * sb.transpose();
    let inv = m.try_inverse().ok_or(Error::SingularSystem)?;
    Ok(inv * (-0.5 * beta.dot(&sb)).exp())
}

struct Fit {
    b: Vec<f64>,
    a: Vec<f64>,
    diag: FitDiagnostics,
}

/// Intercept-only closed form `log(N_k / D_k)` at `b = 0`.
fn zero_seed(p: &Problem) -> Result<(Vec<f64>, Vec<f64>)> {
    let events = p.class_event_counts();
    let n = p.class_row_counts();
    let mut a = Vec::with_capacity(p.classes);
    for c in 0..p.classes {
        if events[c] == 0 {
            return Err(Error::ClassWithoutDefaults(c));
        }
        let r = events[c] as f64 / n[c] as f64;
        a.push(match p.link {
            Link::Logit => -(r / (1.0 - r).max(f64::MIN_POSITIVE)).ln(),
            _ => -(-(-r).ln_1p()).ln(),
        });
    }
    Ok((vec![0.0; p.dim()], a))
}

fn seed_point(p: &Problem, opts: &SolverOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = p.dim();
    let (b, a) = match &opts.init {
        InitPoint::Zeros => zero_seed(p)?,
        InitPoint::Proposed => {
            let rows = if p.event == Outcome::Default && p.skip.is_none() {
                p.rows.clone()
            } else {
                // treat the block's events as defaults
                let outs = p
                    .rows
                    .outcomes()
                    .iter()
                    .map(|&o| if o == p.event { Outcome::Default } else { Outcome::None })
                    .collect();
                p.rows.with_outcomes(outs)
            };
            let sigma = opts.sigma.resolve(&rows)?;
            let w = closedform::moment_statistics(&rows).what()?;
            let b = sigma.solve(&w)? / p.scale;
            let a = closedform::closed_form_alpha_for(&rows, b.as_slice(), p.scale, Outcome::Default)?;
            let a = if a.len() == p.classes { a } else { vec![a[0]; p.classes] };
            (b.as_slice().to_vec(), a)
        }
        InitPoint::Explicit { beta, alpha } => {
            let a = if alpha.len() == 1 { vec![alpha[0]; p.classes] } else { alpha.clone() };
            (beta.clone(), a)
        }
        InitPoint::GaussianPerturbed { center, scale, seed } => {
            let (mut b, mut a) = match center {
                Some((b, a)) => (b.clone(), if a.len() == 1 { vec![a[0]; p.classes] } else { a.clone() }),
                None => zero_seed(p)?,
            };
            let mut rng = substream(*seed, Purpose::SolverInit, 0);
            for x in b.iter_mut().chain(a.iter_mut()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += scale * z;
            }
            (b, a)
        }
    };
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.len(),
        });
    }
    if a.len() != p.classes {
        return Err(Error::DimensionMismatch {
            expected: p.classes,
            found: a.len(),
        });
    }
    Ok((b, a))
}

/// Penalized objective pieces in the free coordinates.
struct Objective<'a, 'p> {
    p: &'p Problem<'a>,
    fixed_alpha: Option<Vec<f64>>,
    penalty: &'p Penalty,
    weight: f64,
}

impl Objective<'_, '_> {
    fn split(&self, theta: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let d = self.p.dim();
        let b = theta.as_slice()[..d].to_vec();
        let a = match &self.fixed_alpha {
            Some(a) => a.clone(),
            None => theta.as_slice()[d..].to_vec(),
        };
        (b, a)
    }

    fn eval(&self, theta: &DVector<f64>, want_hess: bool) -> Result<Eval> {
        let d = self.p.dim();
        let (b, a) = self.split(theta);
        let mut e = self.p.evaluate(&b, &a, want_hess)?;
        if self.fixed_alpha.is_some() {
            e.grad = e.grad.rows(0, d).into_owned();
            e.hess = e.hess.map(|h| h.view((0, 0), (d, d)).into_owned());
        }
        let lam = self.penalty.lambda() * self.weight;
        if lam > 0.0 {
            let bv = DVector::from_vec(b);
            e.ll += lam * self.penalty.value(&bv);
            if let Some((g, h)) = self.penalty.smooth_derivatives(&bv) {
                let mut gr = e.grad.rows_mut(0, d);
                gr += g * lam;
                if let Some(hess) = e.hess.as_mut() {
                    let hp = h.unwrap_or_else(|| DMatrix::zeros(d, d));
                    let mut hv = hess.view_mut((0, 0), (d, d));
                    hv += hp * lam;
                }
            }
        }
        Ok(e)
    }
}

/// Generic ascent loop shared by every block.
fn maximize(obj: &Objective, theta0: DVector<f64>, opts: &SolverOptions) -> Result<(DVector<f64>, FitDiagnostics)> {
    if matches!(obj.penalty, Penalty::Lasso { .. }) && obj.penalty.lambda() > 0.0 {
        return maximize_proximal(obj, theta0, opts);
    }
    let newton = opts.solver == SolverKind::Newton;
    let mut theta = theta0;
    let mut cur = obj.eval(&theta, newton)?;
    let mut diag = FitDiagnostics::default();
    if opts.record_trace {
        diag.objective_trace.push(cur.ll);
    }
    let n = theta.len();
    let mut hinv: Option<DMatrix<f64>> = None;
    for it in 0..opts.max_iter {
        let gnorm = cur.grad.amax();
        diag.final_grad_norm = gnorm;
        if gnorm <= opts.grad_tol {
            diag.converged = true;
            diag.iterations = it;
            break;
        }
        let dir = if newton {
            let neg_h = -cur.hess.as_ref().unwrap();
            match neg_h.cholesky() {
                Some(c) => c.solve(&cur.grad),
                None => {
                    diag.fallbacks += 1;
                    &cur.grad / cur.grad.norm().max(1.0)
                }
            }
        } else {
            match &hinv {
                Some(h) => h * &cur.grad,
                None => &cur.grad / gnorm,
            }
        };
        let mut slope = cur.grad.dot(&dir);
        let dir = if slope > 0.0 {
            dir
        } else {
            // not an ascent direction; restart from the gradient
            diag.fallbacks += 1;
            hinv = None;
            slope = cur.grad.norm_squared() / gnorm;
            &cur.grad / gnorm
        };
        // below this predicted gain, Armijo comparisons are rounding noise
        let noise = 1e-13 * cur.ll.abs().max(1.0);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = &theta + &dir * t;
            match obj.eval(&cand, newton) {
                Ok(e) if e.ll >= cur.ll + 1e-4 * t * slope || (t * slope <= noise && e.ll >= cur.ll - noise) => {
                    next = Some((cand, e));
                    break;
                }
                Ok(_) | Err(Error::NonFiniteLikelihood) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        diag.iterations = it + 1;
        let Some((cand, e)) = next else {
            // no further ascent is possible at working precision
            diag.converged = gnorm <= opts.grad_tol.max(1e-6);
            break;
        };
        if !newton {
            let s = &cand - &theta;
            let y = &cur.grad - &e.grad; // gradient of −ℓ
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                let h0 = hinv.take().unwrap_or_else(|| DMatrix::identity(n, n) * (sy / y.norm_squared()));
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(n, n);
                let a = &i - &s * y.transpose() * rho;
                let h = &a * h0 * a.transpose() + &s * s.transpose() * rho;
                hinv = Some(h);
            }
        }
        let delta = e.ll - cur.ll;
        theta = cand;
        cur = e;
        if opts.record_trace {
            diag.objective_trace.push(cur.ll);
        }
        if let StopRule::LikelihoodDelta { tol } = opts.stop {
            if delta.abs() < tol {
                diag.converged = true;
                diag.final_grad_norm = cur.grad.amax();
                break;
            }
        }
        if it + 1 == opts.max_iter {
            diag.final_grad_norm = cur.grad.amax();
            diag.converged = diag.final_grad_norm <= opts.grad_tol;
        }
    }
    diag.log_likelihood = cur.ll;
    Ok((theta, diag))
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Proximal gradient with backtracking for the lasso-penalized likelihood.
/// Only the slope coordinates are penalized.
fn maximize_proximal(obj: &Objective, theta0: DVector<f64>, opts: &SolverOptions) -> Result<(DVector<f64>, FitDiagnostics)> {
    let d = obj.p.dim();
    let lam = obj.penalty.lambda() * obj.weight;
    let smooth = Objective {
        p: obj.p,
        fixed_alpha: obj.fixed_alpha.clone(),
        penalty: &Penalty::None,
        weight: 0.0,
    };
    let full = |th: &DVector<f64>, ll: f64| ll - lam * th.rows(0, d).iter().map(|x| x.abs()).sum::<f64>();
    let mut theta = theta0;
    let mut cur = smooth.eval(&theta, true)?;
    // initial step from the curvature at the seed
    let mut step = 1.0 / (-cur.hess.as_ref().unwrap().diagonal()).amax().max(1e-12);
    let mut diag = FitDiagnostics::default();
    let mut obj_val = full(&theta, cur.ll);
    if opts.record_trace {
        diag.objective_trace.push(obj_val);
    }
    for it in 0..opts.max_iter {
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = &theta + &cur.grad * step;
            for j in 0..d {
                cand[j] = soft(cand[j], step * lam);
            }
            let diff = &cand - &theta;
            let e = match smooth.eval(&cand, false) {
                Ok(e) => e,
                Err(Error::NonFiniteLikelihood) => {
                    step *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if e.ll >= cur.ll + cur.grad.dot(&diff) - diff.norm_squared() / (2.0 * step) - 1e-13 * cur.ll.abs() {
                accepted = Some((cand, diff));
                break;
            }
            step *= 0.5;
        }
        diag.iterations = it + 1;
        let Some((cand, diff)) = accepted else { break };
        let opt = diff.amax() / step;
        theta = cand;
        cur = smooth.eval(&theta, false)?;
        obj_val = full(&theta, cur.ll);
        if opts.record_trace {
            diag.objective_trace.push(obj_val);
        }
        diag.final_grad_norm = opt;
        if opt <= opts.grad_tol {
            diag.converged = true;
            break;
        }
        step *= 2.0;
    }
    diag.log_likelihood = obj_val;
    Ok((theta, diag))
}

fn fit_block(p: &Problem, opts: &SolverOptions) -> Result<Fit> {
    if p.event_count() == 0 {
        return Err(match p.event {
            Outcome::Censor => Error::NoCensorObserved,
            _ => Error::NoDefaultsObserved,
        });
    }
    let (b0, a0) = seed_point(p, opts)?;
    let fixed_alpha = match &opts.fixed_alpha {
        Some(a) if a.len() == 1 => Some(vec![a[0]; p.classes]),
        Some(a) if a.len() == p.classes => Some(a.clone()),
        Some(a) => {
            return Err(Error::DimensionMismatch {
                expected: p.classes,
                found: a.len(),
            })
        }
        None => None,
    };
    let obj = Objective {
        p,
        fixed_alpha: fixed_alpha.clone(),
        penalty: &opts.penalty,
        weight: p.event_count() as f64,
    };
    let mut theta0 = b0;
    if fixed_alpha.is_none() {
        theta0.extend_from_slice(&a0);
    }
    let (theta, diag) = maximize(&obj, DVector::from_vec(theta0), opts)?;
    let (b, a) = obj.split(&theta);
    Ok(Fit { b, a, diag })
}

/// Fit a model by maximum likelihood.
///
/// Hitting `max_iter` is not an error: the best point found is returned with
/// `converged = false`.
pub fn mle_fit(rows: &Rows, link: Link, opts: &SolverOptions) -> Result<EstimateResult> {
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let scale = match link {
        Link::Highdim => {
            let d = opts
                .dim_scale
                .ok_or_else(|| Error::InvalidSpec("highdim fit requires dim_scale".into()))?;
            1.0 / (d as f64).sqrt()
        }
        _ => 1.0,
    };
    opts.penalty.validate(rows.dim())?;
    let first = Problem {
        rows,
        link: block_link(link),
        scale,
        event: Outcome::Default,
        skip: None,
        classes: rows.class_count(),
    };
    let f1 = fit_block(&first, opts)?;
    let mut result = EstimateResult {
        method: "mle".into(),
        beta: f1.b,
        alpha: Alpha::from_vec(f1.a),
        vartheta: None,
        alpha2: None,
        diagnostics: f1.diag,
    };
    if link == Link::Bihazard {
        let second = Problem {
            rows,
            link: Link::Intensity,
            scale: 1.0,
            event: Outcome::Censor,
            skip: Some(Outcome::Default),
            classes: 1,
        };
        // the censoring block has a single intercept across classes
        let single = rows.with_outcomes(rows.outcomes().to_vec());
        let single = single_class(&single);
        let second = Problem { rows: &single, ..second };
        let mut o2 = opts.clone();
        o2.fixed_alpha = None;
        o2.penalty = Penalty::None;
        if let InitPoint::Explicit { .. } | InitPoint::GaussianPerturbed { center: Some(_), .. } = o2.init {
            o2.init = InitPoint::Zeros;
        }
        let f2 = fit_block(&second, &o2)?;
        let d = &mut result.diagnostics;
        d.iterations += f2.diag.iterations;
        d.final_grad_norm = d.final_grad_norm.max(f2.diag.final_grad_norm);
        d.log_likelihood += f2.diag.log_likelihood;
        d.converged &= f2.diag.converged;
        d.fallbacks += f2.diag.fallbacks;
        result.vartheta = Some(f2.b);
        result.alpha2 = Some(f2.a[0]);
    }
    Ok(result)
}

/// The same rows with every class set to 0.
fn single_class(rows: &Rows) -> Rows {
    let mut out = Rows::with_capacity(rows.dim(), rows.len(), rows.firm_count());
    for f in 0..rows.firm_count() {
        for r in rows.firm_range(f) {
            out.push(rows.row(r), rows.outcome(r), 0, rows.period(r) as u32);
        }
        out.end_firm();
    }
    out
}

/// Model implied by an estimate, for likelihood evaluation.
pub fn estimate_model(est: &EstimateResult, link: Link, dim_scale: Option<usize>) -> ModelSpec {
    ModelSpec {
        link,
        beta: est.beta.clone(),
        alpha: est.alpha.clone(),
        vartheta: est.vartheta.clone(),
        alpha2: est.alpha2,
        dim_scale,
    }
}
