//! Adaptive Simpson quadrature.

use thiserror::Error;

/// Default absolute tolerance for [`adaptive_simpson`].
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Default maximum recursion depth for [`adaptive_simpson`].
pub const DEFAULT_MAX_DEPTH: u32 = 60;
const MAX_EVALUATIONS: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol:e} within depth {depth}")]
    DepthExceeded { a: f64, b: f64, tol: f64, depth: u32 },
    #[error("quadrature on [{a}, {b}] exceeded the evaluation budget")]
    BudgetExceeded { a: f64, b: f64 },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
}

struct Simpson<'a, F> {
    f: &'a F,
    evals: usize,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> Result<f64, QuadratureError> {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, QuadratureError> {
        if self.evals > MAX_EVALUATIONS {
            return Err(QuadratureError::BudgetExceeded { a, b });
        }
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(QuadratureError::DepthExceeded { a, b, tol, depth: 0 });
        }
        let l = self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
        let r = self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
        Ok(l + r)
    }
}

/// Integrates `f` over `[a, b]` (signed: `b < a` gives the negated integral)
/// to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol, max_depth).map(|v| -v);
    }
    let mut s = Simpson { f: &f, evals: 0 };
    let fa = s.eval(a)?;
    let fb = s.eval(b)?;
    let m = 0.5 * (a + b);
    let fm = s.eval(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    s.refine(a, b, fa, fm, fb, whole, tol, max_depth).map_err(|e| match e {
        QuadratureError::DepthExceeded { .. } => QuadratureError::DepthExceeded { a, b, tol, depth: max_depth },
        other => other,
    })
}
