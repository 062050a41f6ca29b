//! Adaptive quadrature on finite intervals.
//!
//! Each panel is integrated with the double-exponential rule and the worst
//! panel is bisected until the summed error estimate is small enough. Endpoint
//! singularities of integrable type (e.g. `y^{α-1}` at zero) are handled by the
//! double-exponential rule itself.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: u64,
}

/// Integrates `f` over `[a, b]` to an absolute error of `abs_tol`.
///
/// The interval starts as [`INITIAL_PANELS`] equal panels; the panel with the
/// largest error estimate is bisected until the summed estimate meets the
/// tolerance or [`MAX_PANELS`] is reached.
pub fn integrate<F>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidParameter(format!(
            "quadrature bounds must be finite with a <= b, got [{a}, {b}]"
        )));
    }
    let mut evaluations = 0u64;
    let mut heap = BinaryHeap::new();
    let h = (b - a) / INITIAL_PANELS as f64;
    for i in 0..INITIAL_PANELS {
        let lo = a + h * i as f64;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + h };
        heap.push(Panel::new(f, lo, hi, abs_tol, &mut evaluations));
    }
    loop {
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= abs_tol || heap.len() >= MAX_PANELS {
            let value = heap.iter().map(|p| p.value).sum();
            let q = Quadrature {
                value,
                error,
                evaluations,
            };
            return if error <= abs_tol {
                Ok(q)
            } else {
                Err(Error::Quadrature { partial: value, error })
            };
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // cannot split further; keep its estimate as is
            let value = heap.iter().map(|p| p.value).sum::<f64>() + worst.value;
            return Err(Error::Quadrature {
                partial: value,
                error,
            });
        }
        heap.push(Panel::new(f, worst.a, mid, abs_tol, &mut evaluations));
        heap.push(Panel::new(f, mid, worst.b, abs_tol, &mut evaluations));
    }
}

const INITIAL_PANELS: usize = 8;
const MAX_PANELS: usize = 4000;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Panel {
    fn new<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, evaluations: &mut u64) -> Self {
        let out = quadrature::integrate(f, a, b, 0.1 * tol);
        *evaluations += out.num_function_evaluations as u64;
        Panel {
            a,
            b,
            value: out.integral,
            error: out.error_estimate,
        }
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(&|x: f64| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((q.value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let q = integrate(&|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-9, "{}", q.value);
    }

    #[test]
    fn sharp_peak_needs_bisection() {
        // narrow Gaussian far from the panel centre
        let s = 1e-3;
        let f = |x: f64| (-(x - 0.9).powi(2) / (2.0 * s * s)).exp();
        let q = integrate(&f, 0.0, 1.0, 1e-12).unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((q.value - exact).abs() < 1e-10, "{} vs {exact}", q.value);
    }

    #[test]
    fn rejects_reversed_bounds() {
        assert!(integrate(&|x: f64| x, 1.0, 0.0, 1e-8).is_err());
    }
}
