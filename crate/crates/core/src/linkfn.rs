//! Link functions, their antiderivatives, and the smoothness bounds the
//! estimator relies on.
//!
//! A [`LinkFunction`] is a monotone increasing, twice differentiable map
//! `μ: ℝ → ℝ` carried together with its first and second derivatives. The
//! derivatives are always supplied by the caller; nothing here differentiates
//! symbolically. [`validate_link`] checks the supplied derivatives against
//! central finite differences.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::quadrature::{self, QuadratureError};

/// A real function shared between links.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Names accepted by [`LinkFunction::by_name`].
pub const BUILTIN_LINKS: [&str; 2] = ["scaled_sigmoid", "comp_exponential"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("unknown link `{name}` (available: {})", BUILTIN_LINKS.join(", "))]
    UnknownLink { name: String },
    #[error("numerical failure while integrating link `{link}`: {source}")]
    Quadrature {
        link: String,
        #[source]
        source: QuadratureError,
    },
    #[error("assumption violated for link `{link}`: {detail}")]
    AssumptionViolation { link: String, detail: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A monotone increasing, twice differentiable link `μ`.
#[derive(Clone)]
pub struct LinkFunction {
    name: String,
    eval: RealFn,
    deriv1: RealFn,
    deriv2: RealFn,
    sup_value: Option<f64>,
    inf_value: Option<f64>,
    antiderivative: Option<RealFn>,
    upper_gap: Option<RealFn>,
}

impl fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkFunction")
            .field("name", &self.name)
            .field("sup_value", &self.sup_value)
            .field("inf_value", &self.inf_value)
            .field("closed_form_antiderivative", &self.antiderivative.is_some())
            .finish()
    }
}

impl LinkFunction {
    /// A link from its value and first two derivatives. Boundedness and the
    /// closed-form antiderivative are attached with the `with_*` builders.
    pub fn new<E, D1, D2>(name: impl Into<String>, eval: E, deriv1: D1, deriv2: D2) -> Self
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            deriv1: Arc::new(deriv1),
            deriv2: Arc::new(deriv2),
            sup_value: None,
            inf_value: None,
            antiderivative: None,
            upper_gap: None,
        }
    }

    pub fn with_sup(mut self, sup: f64) -> Self {
        self.sup_value = Some(sup);
        self
    }

    pub fn with_inf(mut self, inf: f64) -> Self {
        self.inf_value = Some(inf);
        self
    }

    /// Closed form of `m(x) = ∫₀ˣ μ`.
    pub fn with_antiderivative<F>(mut self, m: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.antiderivative = Some(Arc::new(m));
        self
    }

    /// Closed form of `G(x) = ∫ₓ^∞ (sup μ − μ)`, used to evaluate objective
    /// differences far out in the saturated upper tail without cancellation.
    pub fn with_upper_gap<F>(mut self, gap: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.upper_gap = Some(Arc::new(gap));
        self
    }

    /// Looks up one of the [`BUILTIN_LINKS`].
    pub fn by_name(name: &str) -> Result<Self, LinkError> {
        match name {
            "scaled_sigmoid" => Ok(make_scaled_sigmoid()),
            "comp_exponential" => Ok(make_comp_exponential()),
            other => Err(LinkError::UnknownLink { name: other.to_string() }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    #[inline]
    pub fn deriv1(&self, x: f64) -> f64 {
        (self.deriv1)(x)
    }

    #[inline]
    pub fn deriv2(&self, x: f64) -> f64 {
        (self.deriv2)(x)
    }

    pub fn sup_value(&self) -> Option<f64> {
        self.sup_value
    }

    pub fn inf_value(&self) -> Option<f64> {
        self.inf_value
    }

    pub fn has_closed_form_antiderivative(&self) -> bool {
        self.antiderivative.is_some()
    }

    /// `G(x) = ∫ₓ^∞ (sup μ − μ)` when a closed form was supplied.
    pub fn upper_gap(&self, x: f64) -> Option<f64> {
        self.upper_gap.as_ref().map(|g| g(x))
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `μ(x) = 1 / (2 + 2e^(−x))`, bounded in `(0, 1/2)`.
pub fn make_scaled_sigmoid() -> LinkFunction {
    // μ' = e^{-|x|} / (2 (1 + e^{-|x|})²) stays positive where σ(1 − σ) would round to 0.
    fn d1(x: f64) -> f64 {
        let e = (-x.abs()).exp();
        0.5 * e / ((1.0 + e) * (1.0 + e))
    }
    LinkFunction::new("scaled_sigmoid", |x| 0.5 * logistic(x), d1, |x| d1(x) * (-0.5 * x).tanh())
        .with_sup(0.5)
        .with_inf(0.0)
        .with_antiderivative(|x| 0.5 * (softplus(x) - std::f64::consts::LN_2))
        .with_upper_gap(|x| 0.5 * softplus(-x))
}

/// `μ(x) = 1 − e^(−x)`, bounded above by 1 and unbounded below.
pub fn make_comp_exponential() -> LinkFunction {
    LinkFunction::new("comp_exponential", |x| -(-x).exp_m1(), |x| (-x).exp(), |x| -(-x).exp())
        .with_sup(1.0)
        // x − 1 + e^{-x} = x + expm1(-x)
        .with_antiderivative(|x| x + (-x).exp_m1())
        .with_upper_gap(|x| (-x).exp())
}

/// `m(x) = ∫₀ˣ μ` (signed, so `m(x) = −∫ₓ⁰ μ` for `x < 0`).
///
/// Uses the link's closed form when present, otherwise adaptive Simpson
/// quadrature at absolute tolerance 1e−10 and maximum depth 60.
pub fn antiderivative_m(f: &LinkFunction, x: f64) -> Result<f64, LinkError> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if let Some(m) = &f.antiderivative {
        return Ok(m(x));
    }
    quadrature::adaptive_simpson(|t| f.eval(t), 0.0, x, quadrature::DEFAULT_ABS_TOL, quadrature::DEFAULT_MAX_DEPTH)
        .map_err(|source| LinkError::Quadrature { link: f.name.clone(), source })
}

const FD_STEP: f64 = 1e-5;

/// What went wrong at one grid point of [`validate_link`].
#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    FirstDerivative { analytic: f64, finite_difference: f64 },
    SecondDerivative { analytic: f64, finite_difference: f64 },
    NotIncreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub x: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub points_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Distinct grid points with at least one violation.
    pub fn violating_points(&self) -> usize {
        let mut xs: Vec<f64> = self.violations.iter().map(|v| v.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }
}

fn mismatch(analytic: f64, fd: f64, tol: f64) -> bool {
    !((analytic - fd).abs() <= tol * analytic.abs().max(1.0))
}

/// Checks `deriv1` and `deriv2` against central differences of `eval` and
/// `deriv1` (step 1e−5) and checks that `eval` increases at and between the
/// grid points. Mismatches larger than `tol · max(1, |analytic|)` are
/// reported.
pub fn validate_link(f: &LinkFunction, grid: &[f64], tol: f64) -> ValidationReport {
    let mut report = ValidationReport { points_checked: grid.len(), violations: Vec::new() };
    for &x in grid {
        let fd1 = (f.eval(x + FD_STEP) - f.eval(x - FD_STEP)) / (2.0 * FD_STEP);
        let d1 = f.deriv1(x);
        if mismatch(d1, fd1, tol) {
            report
                .violations
                .push(Violation { x, kind: ViolationKind::FirstDerivative { analytic: d1, finite_difference: fd1 } });
        }
        let fd2 = (f.deriv1(x + FD_STEP) - f.deriv1(x - FD_STEP)) / (2.0 * FD_STEP);
        let d2 = f.deriv2(x);
        if mismatch(d2, fd2, tol) {
            report
                .violations
                .push(Violation { x, kind: ViolationKind::SecondDerivative { analytic: d2, finite_difference: fd2 } });
        }
        if !(f.eval(x + FD_STEP) > f.eval(x - FD_STEP)) {
            report.violations.push(Violation { x, kind: ViolationKind::NotIncreasing });
        }
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for w in sorted.windows(2) {
        if !(f.eval(w[1]) > f.eval(w[0])) {
            report.violations.push(Violation { x: w[1], kind: ViolationKind::NotIncreasing });
        }
    }
    report
}

/// Estimated constants of the two smoothness assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionBounds {
    /// Estimated infimum of `μ'(xᵀθ)` over `x ∈ [0,1]^d`, `‖θ − θ*‖∞ ≤ 1`.
    pub kappa: f64,
    /// Estimated upper bound on `μ'`.
    pub l_mu: f64,
    /// Estimated upper bound on `μ''` (one-sided, never negative).
    pub m_mu: f64,
    /// Reachable interval of `xᵀθ` used for `kappa`.
    pub reachable: (f64, f64),
    /// Interval sampled for `l_mu` and `m_mu`.
    pub window: (f64, f64),
}

/// Padding on each side of the reachable interval when sampling `l_mu`, `m_mu`.
pub const BOUND_WINDOW_PAD: f64 = 20.0;
const BOUND_SAMPLES_PER_UNIT: f64 = 100.0;

/// Interval of `xᵀθ` over `x ∈ [0,1]^d` and the sup-norm unit ball around
/// `θ*`. Its ends are attained at vertices: `θᵢ = θ*ᵢ ± 1` with `xᵢ ∈ {0, 1}`.
pub fn reachable_interval(theta_star: &[f64]) -> (f64, f64) {
    let hi = theta_star.iter().map(|t| (t + 1.0).max(0.0)).sum();
    let lo = theta_star.iter().map(|t| (t - 1.0).min(0.0)).sum();
    (lo, hi)
}

fn sample(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

/// Grid estimates of `κ`, `L_μ`, `M_μ` for a parameter `θ*` of dimension `d`.
///
/// `κ` is the minimum of `μ'` over `grid_density` evenly spaced points of the
/// reachable interval (ends included). `L_μ` and `M_μ` are the maxima of
/// `μ'` and `μ''` over that interval padded by [`BOUND_WINDOW_PAD`]. `M_μ`
/// is clamped at zero: `μ'` of a bounded increasing link vanishes at infinity,
/// so `μ''` cannot stay below a negative constant on the whole line.
pub fn compute_assumption_bounds(
    f: &LinkFunction,
    theta_star: &[f64],
    d: usize,
    grid_density: usize,
) -> Result<AssumptionBounds, LinkError> {
    if theta_star.len() != d {
        return Err(LinkError::DimensionMismatch { expected: d, got: theta_star.len() });
    }
    let (lo, hi) = reachable_interval(theta_star);
    let kappa = sample(lo, hi, grid_density).map(|z| f.deriv1(z)).fold(f64::INFINITY, f64::min);
    if !(kappa > 0.0) {
        return Err(LinkError::AssumptionViolation {
            link: f.name.clone(),
            detail: format!("estimated kappa = {kappa:e} on [{lo}, {hi}] is not positive"),
        });
    }
    let window = (lo - BOUND_WINDOW_PAD, hi + BOUND_WINDOW_PAD);
    let n = ((window.1 - window.0) * BOUND_SAMPLES_PER_UNIT).ceil() as usize + 1;
    let (mut l_mu, mut m_mu) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for z in sample(window.0, window.1, n) {
        l_mu = l_mu.max(f.deriv1(z));
        m_mu = m_mu.max(f.deriv2(z));
    }
    Ok(AssumptionBounds { kappa, l_mu, m_mu: m_mu.max(0.0), reachable: (lo, hi), window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    }

    #[test]
    fn scaled_sigmoid_values() {
        let f = make_scaled_sigmoid();
        assert_eq!(f.eval(0.0), 0.25);
        assert_eq!(f.deriv1(0.0), 0.125);
        assert_eq!(f.sup_value(), Some(0.5));
        assert_eq!(f.inf_value(), Some(0.0));
    }

    #[test]
    fn comp_exponential_values() {
        let f = make_comp_exponential();
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.deriv1(0.0), 1.0);
        assert_eq!(f.sup_value(), Some(1.0));
        assert_eq!(f.inf_value(), None);
        let m1 = antiderivative_m(&f, 1.0).unwrap();
        assert!((m1 - (-1f64).exp()).abs() < 1e-15);
        let quad = adaptive_simpson(|t| f.eval(t), 0.0, 1.0, 1e-12, 50).unwrap();
        assert!((m1 - quad).abs() < 1e-11);
        assert!((m1 - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn antiderivative_at_zero_is_zero() {
        for f in [make_scaled_sigmoid(), make_comp_exponential()] {
            assert_eq!(antiderivative_m(&f, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn scaled_sigmoid_closed_form_matches_simpson() {
        let f = make_scaled_sigmoid();
        for x in [-5.0, -1.0, 2.0, 10.0] {
            let closed = antiderivative_m(&f, x).unwrap();
            let oracle = adaptive_simpson(|t| 0.5 / (1.0 + (-t).exp()), 0.0, x, 1e-12, 60).unwrap();
            assert!((closed - oracle).abs() < 1e-9, "x = {x}: {closed} vs {oracle}");
        }
    }

    #[test]
    fn quadrature_fallback_without_closed_form() {
        let f = LinkFunction::new("cubic", |x| x * x * x + x, |x| 3.0 * x * x + 1.0, |x| 6.0 * x);
        let m = antiderivative_m(&f, -2.0).unwrap();
        // ∫₀^{-2} (t³ + t) dt = 4 + 2
        assert!((m - 6.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_failure_is_reported() {
        let f = LinkFunction::new("pole", |x| 1.0 / (1.0 - x), |x| 1.0 / ((1.0 - x) * (1.0 - x)), |_| 0.0);
        let err = antiderivative_m(&f, 2.0).unwrap_err();
        assert!(matches!(err, LinkError::Quadrature { .. }));
    }

    #[test]
    fn by_name_lists_available_links() {
        assert_eq!(LinkFunction::by_name("comp_exponential").unwrap().name(), "comp_exponential");
        let err = LinkFunction::by_name("foo").unwrap_err().to_string();
        assert!(err.contains("scaled_sigmoid") && err.contains("comp_exponential"), "{err}");
    }

    #[test]
    fn builtin_links_validate() {
        let report = validate_link(&make_scaled_sigmoid(), &grid(-10.0, 10.0, 0.5), 1e-5);
        assert!(report.is_clean(), "{:?}", report.violations);
        assert_eq!(report.points_checked, 41);
        assert!(validate_link(&make_comp_exponential(), &[0.0], 1e-5).is_clean());
    }

    #[test]
    fn wrong_derivative_flagged_everywhere() {
        let base = make_scaled_sigmoid();
        let b = base.clone();
        let c = base.clone();
        let bad =
            LinkFunction::new("bad", move |x| base.eval(x), move |x| 2.0 * b.deriv1(x), move |x| 2.0 * c.deriv2(x));
        let g = grid(-5.0, 5.0, 0.5);
        let report = validate_link(&bad, &g, 1e-5);
        assert_eq!(report.violating_points(), g.len());
        assert!(report.violations.iter().any(|v| matches!(v.kind, ViolationKind::FirstDerivative { .. })));
    }

    #[test]
    fn decreasing_link_flagged() {
        let f = LinkFunction::new("neg", |x| -x, |_| -1.0, |_| 0.0);
        let report = validate_link(&f, &[0.0, 1.0], 1e-5);
        assert!(report.violations.iter().any(|v| v.kind == ViolationKind::NotIncreasing));
    }

    #[test]
    fn derivatives_match_finite_differences_on_wide_range() {
        for f in [make_scaled_sigmoid(), make_comp_exponential()] {
            for x in grid(-20.0, 20.0, 0.25) {
                let fd = (f.eval(x + FD_STEP) - f.eval(x - FD_STEP)) / (2.0 * FD_STEP);
                let err = (fd - f.deriv1(x)).abs();
                // Where μ saturates, the difference quotient cannot resolve μ'
                // better than the rounding floor of the two evaluations.
                let floor = 4.0 * f64::EPSILON * f.eval(x).abs() / FD_STEP;
                assert!(err < 1e-6 * f.deriv1(x) || err < floor, "{} at {x}: err {err:e}", f.name());
                if x.abs() <= 10.0 {
                    assert!(err < 1e-6 * f.deriv1(x), "{} at {x}", f.name());
                }
            }
        }
    }

    #[test]
    fn strictly_increasing_below_sup() {
        for f in [make_scaled_sigmoid(), make_comp_exponential()] {
            let g = grid(-20.0, 20.0, 0.1);
            let sup = f.sup_value().unwrap();
            for w in g.windows(2) {
                assert!(f.eval(w[1]) > f.eval(w[0]));
                assert!(f.eval(w[1]) < sup);
            }
            assert!(f.deriv1(40.0) < 1e-10);
            assert!(f.deriv1(40.0) > 0.0);
        }
    }

    #[test]
    fn m_is_convex() {
        for f in [make_scaled_sigmoid(), make_comp_exponential()] {
            let h = 1e-3;
            for x in grid(-10.0, 10.0, 0.5) {
                let m = |t| antiderivative_m(&f, t).unwrap();
                let second = (m(x + h) - 2.0 * m(x) + m(x - h)) / (h * h);
                assert!(second >= 0.0, "{} at {x}", f.name());
            }
        }
    }

    #[test]
    fn kappa_comp_exponential_one_dim() {
        let f = make_comp_exponential();
        let b = compute_assumption_bounds(&f, &[0.5], 1, 64).unwrap();
        assert_eq!(b.reachable, (-0.5, 1.5));
        assert!((b.kappa - (-1.5f64).exp()).abs() < 1e-15);
        assert!((b.kappa - 0.2231).abs() < 1e-4);
        assert!(b.kappa <= b.l_mu);
        // μ'' = −e^{−x} < 0 everywhere but tends to 0, its supremum.
        assert_eq!(b.m_mu, 0.0);
        assert!((1..100).all(|k| f.deriv2(k as f64) <= b.m_mu));
    }

    #[test]
    fn kappa_scaled_sigmoid_two_dim() {
        let f = make_scaled_sigmoid();
        let b = compute_assumption_bounds(&f, &[0.0, 0.0], 2, 64).unwrap();
        assert_eq!(b.reachable, (-2.0, 2.0));
        // Brute-force oracle: sweep the vertices of x ∈ {0,1}², θ ∈ {−1,1}² and a fine interior grid.
        let mut oracle = f64::INFINITY;
        for k in 0..=4000 {
            let z = -2.0 + 4.0 * k as f64 / 4000.0;
            let d = 0.5 * (1.0 / (1.0 + (-z).exp())) * (1.0 - 1.0 / (1.0 + (-z).exp()));
            oracle = oracle.min(d);
        }
        assert!((b.kappa - f.deriv1(2.0)).abs() < 1e-15);
        assert!((b.kappa - oracle).abs() < 1e-12);
        assert_eq!(b.l_mu, 0.125);
        for z in grid(-22.0, 22.0, 0.01) {
            assert!(f.deriv1(z) <= b.l_mu);
            assert!(f.deriv2(z) <= b.m_mu + 1e-12);
        }
    }

    #[test]
    fn kappa_zero_is_an_error() {
        let flat = LinkFunction::new("flat_right", |x: f64| x.min(0.0), |x| if x < 0.0 { 1.0 } else { 0.0 }, |_| 0.0);
        let err = compute_assumption_bounds(&flat, &[1.0], 1, 64).unwrap_err();
        assert!(matches!(err, LinkError::AssumptionViolation { .. }));
        let err = compute_assumption_bounds(&flat, &[1.0], 2, 64).unwrap_err();
        assert_eq!(err, LinkError::DimensionMismatch { expected: 2, got: 1 });
    }
}
