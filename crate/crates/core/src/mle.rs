//! Pseudo log-likelihood estimation.
//!
//! The estimator maximizes
//!
//! ```text
//! H(θ) = Σᵢ wᵢ (yᵢ xᵢᵀθ − m(xᵢᵀθ)),   m(z) = ∫₀ᶻ μ
//! ```
//!
//! whose gradient is the score `Σᵢ wᵢ (yᵢ − μ(xᵢᵀθ)) xᵢ` and whose Hessian
//! `−Σᵢ wᵢ μ'(xᵢᵀθ) xᵢxᵢᵀ` is negative semidefinite, so `H` is concave. With a
//! saturating `μ` the supremum need not be attained; [`maximize`] then
//! reports [`MleStatus::Unbounded`] and [`certify_unbounded`] exhibits a ray
//! along which `H` keeps increasing. With a [`CorrectedLink`] a maximizer
//! always exists.
//!
//! Weights default to 1; a weighted row stands for repeated observations of
//! the same feature vector with `y` equal to their mean.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linkfn::{antiderivative_m, LinkError, LinkFunction};
use crate::tailfix::CorrectedLink;

/// What the estimator needs from a link: `μ`, `μ'`, `m`, and its limits.
pub trait GlmLink {
    fn label(&self) -> &str;
    fn mean(&self, z: f64) -> f64;
    fn slope(&self, z: f64) -> f64;
    /// `m(z) = ∫₀ᶻ μ`.
    fn integral(&self, z: f64) -> Result<f64, LinkError>;
    /// `lim μ` at `+∞`, if finite.
    fn upper_limit(&self) -> Option<f64>;
    /// `lim μ` at `−∞`, if finite.
    fn lower_limit(&self) -> Option<f64>;

    /// `y (z1 − z0) − (m(z1) − m(z0))`, the change of one row's term.
    fn gain(&self, y: f64, z0: f64, z1: f64) -> Result<f64, LinkError> {
        Ok(y * (z1 - z0) - (self.integral(z1)? - self.integral(z0)?))
    }
}

impl GlmLink for LinkFunction {
    fn label(&self) -> &str {
        self.name()
    }

    fn mean(&self, z: f64) -> f64 {
        self.eval(z)
    }

    fn slope(&self, z: f64) -> f64 {
        self.deriv1(z)
    }

    fn integral(&self, z: f64) -> Result<f64, LinkError> {
        antiderivative_m(self, z)
    }

    fn upper_limit(&self) -> Option<f64> {
        self.sup_value()
    }

    fn lower_limit(&self) -> Option<f64> {
        self.inf_value()
    }

    fn gain(&self, y: f64, z0: f64, z1: f64) -> Result<f64, LinkError> {
        // In the saturated upper tail m(z) ≈ sup·z and the plain difference
        // cancels to nothing; (y − sup)Δz + G(z0) − G(z1) keeps the sign.
        if let (Some(sup), true) = (self.sup_value(), z0.min(z1) >= 0.0) {
            if let (Some(g0), Some(g1)) = (self.upper_gap(z0), self.upper_gap(z1)) {
                return Ok((y - sup) * (z1 - z0) + (g0 - g1));
            }
        }
        Ok(y * (z1 - z0) - (self.integral(z1)? - self.integral(z0)?))
    }
}

impl GlmLink for CorrectedLink {
    fn label(&self) -> &str {
        self.base().name()
    }

    fn mean(&self, z: f64) -> f64 {
        self.h_eval(z)
    }

    fn slope(&self, z: f64) -> f64 {
        self.h_deriv1(z)
    }

    fn integral(&self, z: f64) -> Result<f64, LinkError> {
        self.m_h(z)
    }

    fn upper_limit(&self) -> Option<f64> {
        if self.knots().upper.is_some() {
            None
        } else {
            self.base().sup_value()
        }
    }

    fn lower_limit(&self) -> Option<f64> {
        if self.knots().lower.is_some() {
            None
        } else {
            self.base().inf_value()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MleError {
    #[error("row {row}: {detail}")]
    InvalidRow { row: usize, detail: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("certificate search needs a link bounded above; `{0}` is not")]
    NotApplicable(String),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    pub weight: f64,
}

/// Rows `(xᵢ ∈ [0,1]^d, yᵢ ∈ [0,1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    rows: Vec<Observation>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Result<Self, MleError> {
        let mut data = Self::new(dim);
        for (x, y) in rows {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<(), MleError> {
        self.push_weighted(x, y, 1.0)
    }

    pub fn push_weighted(&mut self, x: Vec<f64>, y: f64, weight: f64) -> Result<(), MleError> {
        let row = self.rows.len();
        if x.len() != self.dim {
            return Err(MleError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MleError::InvalidRow { row, detail: format!("feature {v} outside [0, 1]") });
        }
        if !(0.0..=1.0).contains(&y) {
            return Err(MleError::InvalidRow { row, detail: format!("outcome {y} outside [0, 1]") });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(MleError::InvalidRow { row, detail: format!("weight {weight} must be positive") });
        }
        self.rows.push(Observation { x, y, weight });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Columns that are nonzero in at least one row.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.dim).filter(|&j| self.rows.iter().any(|r| r.x[j] != 0.0)).collect()
    }

    /// The dataset restricted to `columns`.
    pub fn select_columns(&self, columns: &[usize]) -> Dataset {
        Dataset {
            dim: columns.len(),
            rows: self
                .rows
                .iter()
                .map(|r| Observation { x: columns.iter().map(|&j| r.x[j]).collect(), y: r.y, weight: r.weight })
                .collect(),
        }
    }

    fn check_dim(&self, theta: &[f64]) -> Result<(), MleError> {
        if theta.len() != self.dim {
            return Err(MleError::DimensionMismatch { expected: self.dim, got: theta.len() });
        }
        Ok(())
    }
}

fn dot(x: &[f64], theta: &[f64]) -> f64 {
    x.iter().zip(theta).map(|(a, b)| a * b).sum()
}

/// `H(θ) = Σᵢ wᵢ (yᵢ xᵢᵀθ − m(xᵢᵀθ))`.
pub fn objective<L: GlmLink + ?Sized>(data: &Dataset, link: &L, theta: &[f64]) -> Result<f64, MleError> {
    data.check_dim(theta)?;
    let mut total = 0.0;
    for r in &data.rows {
        let z = dot(&r.x, theta);
        total += r.weight * (r.y * z - link.integral(z)?);
    }
    Ok(total)
}

/// `H(to) − H(from)`, summed row by row through [`GlmLink::gain`].
pub fn objective_gain<L: GlmLink + ?Sized>(
    data: &Dataset,
    link: &L,
    from: &[f64],
    to: &[f64],
) -> Result<f64, MleError> {
    data.check_dim(from)?;
    data.check_dim(to)?;
    let mut total = 0.0;
    for r in &data.rows {
        total += r.weight * link.gain(r.y, dot(&r.x, from), dot(&r.x, to))?;
    }
    Ok(total)
}

/// The score `Σᵢ wᵢ (yᵢ − μ(xᵢᵀθ)) xᵢ`.
pub fn gradient<L: GlmLink + ?Sized>(data: &Dataset, link: &L, theta: &[f64]) -> Result<DVector<f64>, MleError> {
    data.check_dim(theta)?;
    let mut g = DVector::zeros(data.dim);
    for r in &data.rows {
        let resid = r.weight * (r.y - link.mean(dot(&r.x, theta)));
        for (gj, xj) in g.iter_mut().zip(&r.x) {
            *gj += resid * xj;
        }
    }
    Ok(g)
}

/// `−Σᵢ wᵢ μ'(xᵢᵀθ) xᵢxᵢᵀ`.
pub fn hessian<L: GlmLink + ?Sized>(data: &Dataset, link: &L, theta: &[f64]) -> Result<DMatrix<f64>, MleError> {
    data.check_dim(theta)?;
    let d = data.dim;
    let mut h = DMatrix::zeros(d, d);
    for r in &data.rows {
        let s = r.weight * link.slope(dot(&r.x, theta));
        for i in 0..d {
            if r.x[i] == 0.0 {
                continue;
            }
            for j in 0..=i {
                h[(i, j)] -= s * r.x[i] * r.x[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            h[(j, i)] = h[(i, j)];
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Smallest ridge, relative to the largest diagonal entry of `−∇²H`.
    pub ridge_floor: f64,
    pub divergence_norm_cap: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 200, ridge_floor: 1e-10, divergence_norm_cap: 1e8 }
    }
}

impl MleOptions {
    pub fn validate(&self) -> Result<(), MleError> {
        let mut bad = Vec::new();
        if !(self.grad_tol > 0.0) {
            bad.push("grad_tol must be positive");
        }
        if self.max_iter == 0 {
            bad.push("max_iter must be positive");
        }
        if !(self.ridge_floor >= 0.0 && self.ridge_floor.is_finite()) {
            bad.push("ridge_floor must be nonnegative");
        }
        if !(self.divergence_norm_cap > 0.0) {
            bad.push("divergence_norm_cap must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MleError::InvalidOptions(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MleStatus {
    Converged,
    Unbounded,
    MaxIterations,
}

/// A ray `θ₀ + s·v` along which the objective never stops increasing.
///
/// Every row with `xᵢᵀv > 0` has `yᵢ ≥ sup μ` and every row with `xᵢᵀv < 0`
/// has `yᵢ ≤ inf μ`, so each row's directional derivative
/// `(yᵢ − μ(·)) xᵢᵀv` is positive for every finite `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnboundednessCertificate {
    pub direction: Vec<f64>,
    /// Limit of the directional derivative as `s → ∞`:
    /// `Σ wᵢ (yᵢ − lim μ) xᵢᵀv ≥ 0`.
    pub margin: f64,
    /// `margin == 0`: the objective increases along the ray but its slope
    /// vanishes at infinity (some `yᵢ` sits exactly at the bound).
    pub weak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub status: MleStatus,
    /// Present iff `status` is `Converged`.
    pub theta_hat: Option<Vec<f64>>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub certificate: Option<UnboundednessCertificate>,
    /// Norm of the last iterate (beyond the divergence cap when unbounded).
    pub theta_norm: f64,
}

/// Checks whether `v` is a recession direction of increase for `link` on
/// `data` and builds the certificate if so.
pub fn ray_certificate<L: GlmLink + ?Sized>(data: &Dataset, link: &L, v: &[f64]) -> Option<UnboundednessCertificate> {
    let mut margin = 0.0;
    let mut moving = false;
    for r in &data.rows {
        let q = dot(&r.x, v);
        if q > 0.0 {
            let sup = link.upper_limit()?;
            if r.y < sup {
                return None;
            }
            margin += r.weight * (r.y - sup) * q;
            moving = true;
        } else if q < 0.0 {
            let inf = link.lower_limit()?;
            if r.y > inf {
                return None;
            }
            margin += r.weight * (r.y - inf) * q;
            moving = true;
        }
    }
    moving.then(|| UnboundednessCertificate { direction: v.to_vec(), margin, weak: margin == 0.0 })
}

/// The all-ones vector followed by the unit vectors `e₁, …, e_d`.
pub fn default_candidates(dim: usize) -> Vec<Vec<f64>> {
    std::iter::once(vec![1.0; dim])
        .chain((0..dim).map(|j| {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            e
        }))
        .collect()
}

/// Searches `candidates` (default: [`default_candidates`]) for a direction
/// `v` with `xᵢᵀv ≥ 0` on every row, `> 0` on some row, and `yᵢ ≥ sup μ`
/// wherever `xᵢᵀv > 0`.
pub fn certify_unbounded(
    data: &Dataset,
    f: &LinkFunction,
    candidates: Option<&[Vec<f64>]>,
) -> Result<Option<UnboundednessCertificate>, MleError> {
    let sup = f.sup_value().ok_or_else(|| MleError::NotApplicable(f.name().to_string()))?;
    let defaults;
    let candidates = match candidates {
        Some(c) => c,
        None => {
            defaults = default_candidates(data.dim);
            &defaults
        }
    };
    'candidate: for v in candidates {
        if v.len() != data.dim {
            return Err(MleError::DimensionMismatch { expected: data.dim, got: v.len() });
        }
        let mut margin = 0.0;
        let mut strict = false;
        for r in &data.rows {
            let q = dot(&r.x, v);
            if q < 0.0 || (q > 0.0 && r.y < sup) {
                continue 'candidate;
            }
            if q > 0.0 {
                strict = true;
                margin += r.weight * (r.y - sup) * q;
            }
        }
        if strict {
            return Ok(Some(UnboundednessCertificate { direction: v.clone(), margin, weak: margin == 0.0 }));
        }
    }
    Ok(None)
}

/// Objective values at `θ = s·v` for each scale `s`, plus the successive
/// differences computed without cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct RayProfile {
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    pub gains: Vec<f64>,
}

impl RayProfile {
    pub fn strictly_increasing(&self) -> bool {
        self.gains.iter().all(|&g| g > 0.0)
    }
}

pub fn ray_profile<L: GlmLink + ?Sized>(
    data: &Dataset,
    link: &L,
    direction: &[f64],
    scales: &[f64],
) -> Result<RayProfile, MleError> {
    let points: Vec<Vec<f64>> = scales.iter().map(|s| direction.iter().map(|v| s * v).collect()).collect();
    let values = points.iter().map(|p| objective(data, link, p)).collect::<Result<Vec<_>, _>>()?;
    let gains = points.windows(2).map(|w| objective_gain(data, link, &w[0], &w[1])).collect::<Result<Vec<_>, _>>()?;
    Ok(RayProfile { scales: scales.to_vec(), values, gains })
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const DIVERGENCE_WINDOW: usize = 10;
const MAX_RIDGE_STEPS: i32 = 80;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solves `(A + ridge·I) p = g` with the smallest ridge in
/// `{floor·max diag(A)·4ᵏ}` for which the Cholesky factorization succeeds.
/// The relative scale keeps the step Newton-like where `A` is tiny.
fn ridged_solve(a: &DMatrix<f64>, g: &DVector<f64>, floor: f64) -> Option<DVector<f64>> {
    let scale = a.diagonal().amax();
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    let base = scale * if floor > 0.0 { floor } else { f64::EPSILON };
    let ridges = (floor == 0.0).then_some(0.0).into_iter().chain((0..MAX_RIDGE_STEPS).map(|k| base * 4f64.powi(k)));
    for ridge in ridges {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = Cholesky::new(m) {
            let p = ch.solve(g);
            if p.iter().all(|v| v.is_finite()) {
                return Some(p);
            }
        }
    }
    None
}

/// Follows `θ + s·p` with doubling `s` until the iterate leaves the
/// divergence cap, requiring the objective never to decrease and to
/// increase on the first step.
fn extrapolate<L: GlmLink + ?Sized>(
    data: &Dataset,
    link: &L,
    theta: &[f64],
    p: &[f64],
    cap: f64,
) -> Result<Option<Vec<f64>>, MleError> {
    let mut prev = theta.to_vec();
    let mut s = 1.0;
    for step in 0..2100 {
        let next: Vec<f64> = theta.iter().zip(p).map(|(t, d)| t + s * d).collect();
        let gain = objective_gain(data, link, &prev, &next)?;
        if gain < 0.0 || (step == 0 && gain <= 0.0) || !gain.is_finite() {
            return Ok(None);
        }
        if norm(&next) > cap {
            return Ok(Some(next));
        }
        prev = next;
        s *= 2.0;
    }
    Ok(None)
}

/// Damped Newton ascent on `H` from `θ₀ = 0`.
///
/// Each step solves `(−∇²H + ridge·I) p = ∇H` and backtracks (Armijo 1e−4,
/// halving) on the objective. Columns that are zero in every row stay at 0.
/// The iteration stops as
/// - `Converged` once `‖∇H‖₂ ≤ grad_tol`;
/// - `Unbounded` once the iterate passes `divergence_norm_cap` with the
///   objective increasing over the last 10 steps (only for links with a
///   finite limit; without one `H` is coercive), or as soon as the Newton
///   direction is a ray of endless increase (see [`ray_certificate`]), in
///   which case the iterate is pushed along it past the cap;
/// - `MaxIterations` otherwise, including when the line search stalls.
///
/// With rank-deficient designs the maximizer is not unique; the point
/// reached from 0 is returned.
pub fn maximize<L: GlmLink + ?Sized>(data: &Dataset, link: &L, opts: &MleOptions) -> Result<MleResult, MleError> {
    opts.validate()?;
    let d = data.dim;
    let active = data.active_columns();
    let saturating = link.upper_limit().is_some() || link.lower_limit().is_some();
    let mut theta = vec![0.0; d];
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(DIVERGENCE_WINDOW);
    let finish = |status, theta: &[f64], grad_norm, iterations, certificate| MleResult {
        status,
        theta_hat: (status == MleStatus::Converged).then(|| theta.to_vec()),
        grad_norm,
        iterations,
        certificate,
        theta_norm: norm(theta),
    };

    for iter in 0..opts.max_iter {
        let g = gradient(data, link, &theta)?;
        let g_norm = g.norm();
        if !g_norm.is_finite() {
            return Ok(finish(MleStatus::MaxIterations, &theta, g_norm, iter, None));
        }
        if g_norm <= opts.grad_tol {
            return Ok(finish(MleStatus::Converged, &theta, g_norm, iter, None));
        }

        let full_h = hessian(data, link, &theta)?;
        let k = active.len();
        let neg_h = DMatrix::from_fn(k, k, |i, j| -full_h[(active[i], active[j])]);
        let g_active = DVector::from_iterator(k, active.iter().map(|&j| g[j]));
        let Some(p_active) = ridged_solve(&neg_h, &g_active, opts.ridge_floor) else {
            return Ok(finish(MleStatus::MaxIterations, &theta, g_norm, iter, None));
        };
        let mut p = vec![0.0; d];
        for (i, &j) in active.iter().enumerate() {
            p[j] = p_active[i];
        }

        if let Some(mut cert) = ray_certificate(data, link, &p) {
            if let Some(far) = extrapolate(data, link, &theta, &p, opts.divergence_norm_cap)? {
                let pn = norm(&p);
                cert.direction.iter_mut().for_each(|v| *v /= pn);
                let gn = gradient(data, link, &far)?.norm();
                return Ok(finish(MleStatus::Unbounded, &far, gn, iter + 1, Some(cert)));
            }
        }

        let slope = g.dot(&DVector::from_column_slice(&p));
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = theta.iter().zip(&p).map(|(t, s)| t + alpha * s).collect();
            let gain = objective_gain(data, link, &theta, &trial)?;
            if gain.is_finite() && gain >= ARMIJO * alpha * slope {
                accepted = Some((trial, gain));
                break;
            }
            alpha *= 0.5;
        }
        // Near the optimum the gain drops below the objective's rounding
        // floor; the full step is then judged by the gradient norm.
        let accepted = match accepted {
            Some(a) => Some(a),
            None => {
                let trial: Vec<f64> = theta.iter().zip(&p).map(|(t, s)| t + s).collect();
                let g_trial = gradient(data, link, &trial)?.norm();
                (g_trial < g_norm).then_some((trial, 0.0))
            }
        };
        let Some((next, gain)) = accepted else {
            return Ok(finish(MleStatus::MaxIterations, &theta, g_norm, iter, None));
        };
        theta = next;
        if recent.len() == DIVERGENCE_WINDOW {
            recent.pop_front();
        }
        recent.push_back(gain);

        let theta_norm = norm(&theta);
        if saturating && theta_norm > opts.divergence_norm_cap && recent.iter().all(|&g| g > 0.0) {
            let direction: Vec<f64> = theta.iter().map(|t| t / theta_norm).collect();
            let cert = ray_certificate(data, link, &direction);
            let gn = gradient(data, link, &theta)?.norm();
            return Ok(finish(MleStatus::Unbounded, &theta, gn, iter + 1, cert));
        }
    }
    let gn = gradient(data, link, &theta)?.norm();
    Ok(finish(MleStatus::MaxIterations, &theta, gn, opts.max_iter, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkfn::{make_comp_exponential, make_scaled_sigmoid};
    use crate::tailfix::{build_corrected_link, InputRangeBounds};

    fn corrected_exp(u: f64, d: usize) -> CorrectedLink {
        build_corrected_link(&make_comp_exponential(), InputRangeBounds::new(u, 0.0, d).unwrap()).unwrap()
    }

    fn binary_counterexample(d: usize, t: usize) -> Dataset {
        Dataset::from_rows(d, (0..t).map(|_| (vec![1.0; d], 1.0))).unwrap()
    }

    #[test]
    fn dataset_rejects_out_of_range() {
        let mut data = Dataset::new(2);
        assert!(matches!(data.push(vec![0.5, 1.5], 0.0), Err(MleError::InvalidRow { row: 0, .. })));
        assert!(matches!(data.push(vec![0.5, 0.5], -0.1), Err(MleError::InvalidRow { .. })));
        assert!(matches!(data.push(vec![0.5], 0.1), Err(MleError::DimensionMismatch { .. })));
        assert!(matches!(data.push_weighted(vec![0.5, 0.5], 0.1, 0.0), Err(MleError::InvalidRow { .. })));
        data.push(vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(data.active_columns(), vec![1]);
    }

    #[test]
    fn objective_examples() {
        let c = corrected_exp(1.0, 1);
        assert_eq!(objective(&Dataset::new(1), &c, &[3.0]).unwrap(), 0.0);
        let one = Dataset::from_rows(1, [(vec![1.0], 1.0)]).unwrap();
        assert_eq!(objective(&one, &c, &[0.0]).unwrap(), 0.0);
        let v = objective(&one, &c, &[1.0]).unwrap();
        assert!((v - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((v - 0.632_120_558_828_557_7).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let c = corrected_exp(2.0, 2);
        let theta = [0.3, 0.7];
        let xs = [vec![1.0, 0.0], vec![0.2, 0.9], vec![1.0, 1.0]];
        let data = Dataset::from_rows(2, xs.iter().map(|x| (x.clone(), c.h_eval(dot(x, &theta))))).unwrap();
        assert!(gradient(&data, &c, &theta).unwrap().norm() < 1e-15);
    }

    #[test]
    fn binary_counterexample_gradient_is_positive() {
        let f = make_comp_exponential();
        let data = binary_counterexample(3, 5);
        for theta in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [10.0, 10.0, 10.0]] {
            let g = gradient(&data, &f, &theta).unwrap();
            let expected = 5.0 * (-theta.iter().sum::<f64>()).exp();
            for gj in g.iter() {
                assert!(*gj > 0.0);
                // 1 − μ(z) loses relative precision as μ(z) approaches 1.
                assert!((gj - expected).abs() <= 1e-3 * expected);
            }
        }
    }

    #[test]
    fn hessian_examples() {
        let c = corrected_exp(1.0, 1);
        assert_eq!(hessian(&Dataset::new(3), &c, &[0.0; 3]).unwrap(), DMatrix::zeros(3, 3));
        let one = Dataset::from_rows(1, [(vec![1.0], 0.3)]).unwrap();
        let h = hessian(&one, &c, &[0.4]).unwrap();
        assert_eq!(h[(0, 0)], -c.h_deriv1(0.4));
        assert!(h[(0, 0)] < 0.0);
    }

    #[test]
    fn closed_form_mean_half() {
        let c = corrected_exp(1.0, 1);
        let data = Dataset::from_rows(1, [0.0, 1.0, 0.0, 1.0].map(|y| (vec![1.0], y))).unwrap();
        let res = maximize(&data, &c, &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Converged);
        let theta = res.theta_hat.unwrap()[0];
        assert!((theta - std::f64::consts::LN_2).abs() < 1e-9, "{theta}");
        assert!(res.grad_norm <= 1e-8);
    }

    #[test]
    fn binary_counterexample_uncorrected_is_unbounded() {
        let data = binary_counterexample(3, 5);
        let f = make_comp_exponential();
        let res = maximize(&data, &f, &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Unbounded);
        assert!(res.theta_hat.is_none());
        assert!(res.theta_norm > 1e8);
        let cert = res.certificate.unwrap();
        assert!(cert.weak);
        let third = 1.0 / 3f64.sqrt();
        for v in cert.direction {
            assert!((v - third).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_counterexample_corrected_converges() {
        let data = binary_counterexample(3, 5);
        let c = corrected_exp(3.0, 3);
        let res = maximize(&data, &c, &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Converged);
        assert!(res.grad_norm <= 1e-8);
        let theta = res.theta_hat.unwrap();
        // h(z) = 1 lands in the upper tail at z = x* − 1 + e with x* = 6.
        let z: f64 = theta.iter().sum();
        // |Δz| ≲ grad_tol / (t·√d·h'(z)) with h'(z) ≈ e⁻⁶/e.
        assert!((z - (5.0 + std::f64::consts::E)).abs() < 1e-5, "{z}");
        assert!(theta.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn continuous_counterexample_uncorrected_is_unbounded() {
        let data = Dataset::from_rows(2, (0..4).map(|i| (vec![0.2 + 0.2 * i as f64; 2], 0.75))).unwrap();
        let f = make_scaled_sigmoid();
        let res = maximize(&data, &f, &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Unbounded);
        assert!(res.theta_norm > 1e8);
        let cert = res.certificate.unwrap();
        assert!(!cert.weak && cert.margin > 0.0);
    }

    #[test]
    fn certificate_examples() {
        let exp = make_comp_exponential();
        let cert = certify_unbounded(&binary_counterexample(3, 5), &exp, None).unwrap().unwrap();
        assert_eq!(cert.direction, vec![1.0; 3]);
        assert!(cert.weak);
        // Unit directions qualify too once the all-ones candidate is absent.
        let e1 = [vec![0.0, -1.0, 1.0], vec![1.0, 0.0, 0.0]];
        let cert = certify_unbounded(&binary_counterexample(3, 5), &exp, Some(&e1)).unwrap().unwrap();
        assert_eq!(cert.direction, vec![1.0, 0.0, 0.0]);

        let sig = make_scaled_sigmoid();
        let cont = Dataset::from_rows(2, (0..4).map(|_| (vec![0.6, 0.6], 0.75))).unwrap();
        let cert = certify_unbounded(&cont, &sig, Some(&[vec![1.0, 1.0]])).unwrap().unwrap();
        assert!((cert.margin - 4.0 * 0.25 * 1.2).abs() < 1e-12);

        let mut mixed = binary_counterexample(1, 3);
        mixed.push(vec![1.0], 0.0).unwrap();
        assert!(certify_unbounded(&mixed, &exp, None).unwrap().is_none());

        let identity = LinkFunction::new("identity", |x| x, |_| 1.0, |_| 0.0);
        assert!(matches!(certify_unbounded(&mixed, &identity, None), Err(MleError::NotApplicable(_))));
    }

    #[test]
    fn mixed_outcomes_have_interior_maximum() {
        // Brute-force oracle over θ ∈ [−50, 50].
        let exp = make_comp_exponential();
        let mut data = binary_counterexample(1, 3);
        data.push(vec![1.0], 0.0).unwrap();
        let (mut best_t, mut best_v) = (f64::NAN, f64::NEG_INFINITY);
        for k in 0..=100_000 {
            let t = -50.0 + k as f64 * 1e-3;
            let v = objective(&data, &exp, &[t]).unwrap();
            if v > best_v {
                best_v = v;
                best_t = t;
            }
        }
        assert!((best_t - 4f64.ln()).abs() < 2e-3);
        let res = maximize(&data, &exp, &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Converged);
        assert!((res.theta_hat.unwrap()[0] - 4f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn certificate_ray_is_increasing() {
        let exp = make_comp_exponential();
        let data = binary_counterexample(3, 5);
        let prof = ray_profile(&data, &exp, &[1.0; 3], &[1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert!(prof.strictly_increasing(), "{:?}", prof.gains);
        // The values themselves saturate at t = 5 in floating point.
        assert_eq!(prof.values[3], 5.0);
    }

    #[test]
    fn zero_column_is_pinned() {
        let c = build_corrected_link(&make_scaled_sigmoid(), InputRangeBounds::new(2.0, -2.0, 3).unwrap()).unwrap();
        let rows = [(vec![0.2, 0.0, 0.9], 0.3), (vec![1.0, 0.0, 0.1], 0.1), (vec![0.5, 0.0, 0.5], 0.4)];
        let data = Dataset::from_rows(3, rows.iter().cloned()).unwrap();
        let res = maximize(&data, &c, &MleOptions::default()).unwrap();
        let full = res.theta_hat.unwrap();
        assert_eq!(full[1], 0.0);
        let reduced = maximize(&data.select_columns(&[0, 2]), &c, &MleOptions::default()).unwrap();
        let r = reduced.theta_hat.unwrap();
        assert!((full[0] - r[0]).abs() < 1e-9 && (full[2] - r[1]).abs() < 1e-9);
    }

    #[test]
    fn empty_dataset_converges_at_zero() {
        let res = maximize(&Dataset::new(2), &corrected_exp(1.0, 2), &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Converged);
        assert_eq!(res.theta_hat, Some(vec![0.0, 0.0]));
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn max_iterations_reported() {
        let c = corrected_exp(1.0, 1);
        let data = Dataset::from_rows(1, [(vec![1.0], 0.9)]).unwrap();
        let opts = MleOptions { max_iter: 1, ..Default::default() };
        assert_eq!(maximize(&data, &c, &opts).unwrap().status, MleStatus::MaxIterations);
    }

    #[test]
    fn invalid_options_rejected() {
        let opts = MleOptions { grad_tol: 0.0, max_iter: 0, ..Default::default() };
        let err = maximize(&Dataset::new(1), &corrected_exp(1.0, 1), &opts).unwrap_err().to_string();
        assert!(err.contains("grad_tol") && err.contains("max_iter"), "{err}");
    }

    #[test]
    fn ridge_handles_rank_deficient_design() {
        let c = corrected_exp(2.0, 2);
        let data = Dataset::from_rows(2, [(vec![1.0, 1.0], 0.5), (vec![1.0, 1.0], 0.2)]).unwrap();
        let res = maximize(&data, &c, &MleOptions::default()).unwrap();
        assert_eq!(res.status, MleStatus::Converged);
        let t = res.theta_hat.unwrap();
        assert!((c.h_eval(t[0] + t[1]) - 0.35).abs() < 1e-9);
    }
}
