//! Tail extension of a bounded link.
//!
//! A link that saturates (bounded above or below) can leave the pseudo
//! log-likelihood without a maximizer. [`build_corrected_link`] replaces each
//! bounded tail by a logarithmic tail that diverges, while keeping the link
//! untouched on the interval the true linear predictor can reach.
//!
//! Upper tail, attached at a knot `x* ≥ U + d` where `μ''(x*) < 0`, with
//! `a = μ'(x*)`, `b = μ''(x*)`, `c = −a/b`:
//!
//! ```text
//! g(x)   = μ(x*) + (a²/b) ln(c) − (a²/b) ln(x − x* + c)
//! g'(x)  = −a² / (b (x − x* + c))
//! g''(x) =  a² / (b (x − x* + c)²)
//! ```
//!
//! Lower tail, attached at `x** ≤ L − d` where `μ''(x**) > 0`, with
//! `a = g'(x**)`, `b = g''(x**)`, `c = a/b`:
//!
//! ```text
//! h(x)   = g(x**) + (a²/b) ln(c) − (a²/b) ln(x** − x + c)
//! h'(x)  = a² / (b (x** − x + c))
//! h''(x) = a² / (b (x − x** − c)²)
//! ```
//!
//! Value, slope and curvature all match at the knots, so `h` is C².

use std::fmt;

use thiserror::Error;

use crate::linkfn::{antiderivative_m, LinkError, LinkFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TailError {
    #[error("invalid input-range bounds: {0}")]
    InvalidBounds(String),
    #[error("no {side} knot for link `{link}` within [{from}, {to}]")]
    NoKnot { side: Side, link: String, from: f64, to: f64 },
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
    }
}

/// Bounds on the reachable linear predictor: `L ≤ −Σ ReLU(−θ*ᵢ)` and
/// `U ≥ Σ ReLU(θ*ᵢ)`, together with the dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputRangeBounds {
    upper_u: f64,
    lower_l: f64,
    dim_d: usize,
}

impl InputRangeBounds {
    pub fn new(upper_u: f64, lower_l: f64, dim_d: usize) -> Result<Self, TailError> {
        if !upper_u.is_finite() || !lower_l.is_finite() {
            return Err(TailError::InvalidBounds(format!("U = {upper_u}, L = {lower_l} must be finite")));
        }
        if upper_u < 0.0 {
            return Err(TailError::InvalidBounds(format!("U = {upper_u} must be >= 0")));
        }
        if lower_l > 0.0 {
            return Err(TailError::InvalidBounds(format!("L = {lower_l} must be <= 0")));
        }
        if dim_d == 0 {
            return Err(TailError::InvalidBounds("d must be positive".into()));
        }
        Ok(Self { upper_u, lower_l, dim_d })
    }

    /// The tightest bounds for a known parameter vector.
    pub fn from_theta_star(theta_star: &[f64]) -> Result<Self, TailError> {
        let u = theta_star.iter().map(|t| t.max(0.0)).sum();
        let l = -theta_star.iter().map(|t| (-t).max(0.0)).sum::<f64>();
        Self::new(u, l, theta_star.len())
    }

    pub fn upper_u(&self) -> f64 {
        self.upper_u
    }

    pub fn lower_l(&self) -> f64 {
        self.lower_l
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    /// Whether `θ*` only produces linear predictors inside `[L, U]`.
    pub fn covers(&self, theta_star: &[f64]) -> bool {
        let pos: f64 = theta_star.iter().map(|t| t.max(0.0)).sum();
        let neg: f64 = theta_star.iter().map(|t| (-t).max(0.0)).sum();
        pos <= self.upper_u && -neg >= self.lower_l
    }
}

/// Parameters of the knot scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub step: f64,
    pub eps_curv: f64,
    /// Scan length past the starting point.
    pub cap: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { step: 0.5, eps_curv: 1e-12, cap: 1e4 }
    }
}

const MIN_CURVATURE: f64 = 1e-300;

fn scan(f: &LinkFunction, start: f64, dir: f64, search: &SearchParams, side: Side) -> Result<f64, TailError> {
    let steps = (search.cap / search.step).floor() as usize;
    for k in 0..=steps {
        let x = start + dir * k as f64 * search.step;
        let a = f.deriv1(x);
        let b = f.deriv2(x);
        let curved = match side {
            Side::Upper => b < -search.eps_curv,
            Side::Lower => b > search.eps_curv,
        };
        if curved && b.abs() >= MIN_CURVATURE && a > 0.0 && a.is_finite() && b.is_finite() {
            return Ok(x);
        }
    }
    Err(TailError::NoKnot { side, link: f.name().to_string(), from: start, to: start + dir * search.cap })
}

/// First scanned `x ≥ U + d` with `μ''(x) < −ε`, or `None` when `μ` is
/// unbounded above and needs no upper tail.
pub fn find_upper_knot(
    f: &LinkFunction,
    bounds: &InputRangeBounds,
    search: &SearchParams,
) -> Result<Option<f64>, TailError> {
    if f.sup_value().is_none() {
        return Ok(None);
    }
    scan(f, bounds.upper_u + bounds.dim_d as f64, 1.0, search, Side::Upper).map(Some)
}

/// First scanned `x ≤ L − d` with `μ''(x) > ε`, or `None` when `μ` is
/// unbounded below. The upper tail never reaches this far down, so the scan
/// reads `μ` directly.
pub fn find_lower_knot(
    f: &LinkFunction,
    bounds: &InputRangeBounds,
    search: &SearchParams,
) -> Result<Option<f64>, TailError> {
    if f.inf_value().is_none() {
        return Ok(None);
    }
    scan(f, bounds.lower_l - bounds.dim_d as f64, -1.0, search, Side::Lower).map(Some)
}

/// A knot with the slope and curvature of the link there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub x: f64,
    /// Slope at the knot.
    pub a: f64,
    /// Curvature at the knot.
    pub b: f64,
    value: f64,
    /// `m` at the knot, for stitching the antiderivative.
    m: f64,
}

impl Knot {
    fn new(f: &LinkFunction, x: f64) -> Result<Self, LinkError> {
        Ok(Self { x, a: f.deriv1(x), b: f.deriv2(x), value: f.eval(x), m: antiderivative_m(f, x)? })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// `a²/|b|`, the coefficient of the logarithm.
    fn scale(&self) -> f64 {
        self.a * self.a / self.b.abs()
    }

    /// `|a/b|`, the offset inside the logarithm.
    fn offset(&self) -> f64 {
        (self.a / self.b).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TailKnots {
    pub upper: Option<Knot>,
    pub lower: Option<Knot>,
}

impl TailKnots {
    pub fn x_star(&self) -> Option<f64> {
        self.upper.map(|k| k.x)
    }

    pub fn x_dstar(&self) -> Option<f64> {
        self.lower.map(|k| k.x)
    }
}

/// The tail-extended link `h`.
#[derive(Debug, Clone)]
pub struct CorrectedLink {
    base: LinkFunction,
    knots: TailKnots,
    bounds: InputRangeBounds,
}

/// Builds `h` from `μ` with the default knot search.
pub fn build_corrected_link(f: &LinkFunction, bounds: InputRangeBounds) -> Result<CorrectedLink, TailError> {
    build_corrected_link_with(f, bounds, &SearchParams::default())
}

pub fn build_corrected_link_with(
    f: &LinkFunction,
    bounds: InputRangeBounds,
    search: &SearchParams,
) -> Result<CorrectedLink, TailError> {
    let upper = find_upper_knot(f, &bounds, search)?.map(|x| Knot::new(f, x)).transpose()?;
    let lower = find_lower_knot(f, &bounds, search)?.map(|x| Knot::new(f, x)).transpose()?;
    Ok(CorrectedLink { base: f.clone(), knots: TailKnots { upper, lower }, bounds })
}

impl CorrectedLink {
    pub fn base(&self) -> &LinkFunction {
        &self.base
    }

    pub fn knots(&self) -> &TailKnots {
        &self.knots
    }

    pub fn bounds(&self) -> &InputRangeBounds {
        &self.bounds
    }

    /// `[x**, x*]`, with infinite ends where no tail was attached.
    pub fn core_interval(&self) -> (f64, f64) {
        (self.knots.x_dstar().unwrap_or(f64::NEG_INFINITY), self.knots.x_star().unwrap_or(f64::INFINITY))
    }

    pub fn h_eval(&self, x: f64) -> f64 {
        match self.piece(x) {
            Piece::Core => self.base.eval(x),
            // μ(x*) + (a²/|b|) ln(1 + (x − x*)/c)
            Piece::Upper(k) => k.value + k.scale() * ((x - k.x) / k.offset()).ln_1p(),
            Piece::Lower(k) => k.value - k.scale() * ((k.x - x) / k.offset()).ln_1p(),
        }
    }

    pub fn h_deriv1(&self, x: f64) -> f64 {
        match self.piece(x) {
            Piece::Core => self.base.deriv1(x),
            Piece::Upper(k) => -k.a * k.a / (k.b * (x - k.x - k.a / k.b)),
            Piece::Lower(k) => k.a * k.a / (k.b * (-x + k.x + k.a / k.b)),
        }
    }

    pub fn h_deriv2(&self, x: f64) -> f64 {
        match self.piece(x) {
            Piece::Core => self.base.deriv2(x),
            Piece::Upper(k) => {
                let u = x - k.x - k.a / k.b;
                k.a * k.a / (k.b * u * u)
            }
            Piece::Lower(k) => {
                let u = x - k.x - k.a / k.b;
                k.a * k.a / (k.b * u * u)
            }
        }
    }

    /// `m_h(x) = ∫₀ˣ h`: the base antiderivative on the core, closed-form
    /// logarithmic integrals on the tails.
    pub fn m_h(&self, x: f64) -> Result<f64, LinkError> {
        match self.piece(x) {
            Piece::Core => antiderivative_m(&self.base, x),
            Piece::Upper(k) => Ok(k.m + tail_integral(&k, x - k.x)),
            Piece::Lower(k) => Ok(k.m - tail_integral(&k, k.x - x)),
        }
    }

    fn piece(&self, x: f64) -> Piece {
        match (self.knots.upper, self.knots.lower) {
            (Some(k), _) if x > k.x => Piece::Upper(k),
            (_, Some(k)) if x < k.x => Piece::Lower(k),
            _ => Piece::Core,
        }
    }
}

enum Piece {
    Core,
    Upper(Knot),
    Lower(Knot),
}

/// `∫` of the tail over a distance `s ≥ 0` away from the knot, measured
/// outward. With `v = s + c`, `∫ ln(v/c) dv = v ln(v/c) − (v − c)`; the sign
/// of the logarithmic term flips with the side.
fn tail_integral(k: &Knot, s: f64) -> f64 {
    let c = k.offset();
    let log_part = (s + c) * (s / c).ln_1p() - s;
    if k.b < 0.0 {
        k.value * s + k.scale() * log_part
    } else {
        k.value * s - k.scale() * log_part
    }
}
