//! Closed-form quantities of branching-stable processes.
//!
//! Everything here assumes the normalization `c(λ) Γ(α) = 1` (see
//! [`crate::measure::normalize_lambda`]). Large values are handled in log
//! space; a result that does not fit in an `f64` is reported as
//! [`Error::Overflow`] carrying its logarithm, never as a bare infinity.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::measure::Alpha;

const LN_F64_MAX: f64 = 709.782712893384;
const TERM_REL: f64 = 1e-16;
const TAIL_REL: f64 = 1e-14;
const MAX_TERMS: usize = 10_000_000;

/// Value of the Wright function together with its series diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrightEval {
    /// `φ(ρ, β, z)`; `+∞` exactly when `overflow` is set.
    pub value: f64,
    pub ln_value: f64,
    pub overflow: bool,
    pub terms_used: usize,
    /// Bound on the discarded tail of the series (absolute).
    pub truncation_bound: f64,
    /// The same bound relative to `value`.
    pub rel_truncation_bound: f64,
}

impl WrightEval {
    /// The value, or an overflow error carrying the log-value.
    pub fn finite(&self) -> Result<f64> {
        if self.overflow {
            Err(Error::Overflow {
                ln_value: self.ln_value,
            })
        } else {
            Ok(self.value)
        }
    }
}

/// Wright generalized Bessel function `φ(ρ, β, z) = Σ_k z^k / (k! Γ(ρk + β))`.
///
/// Terms are accumulated in log space. Summation stops once three consecutive
/// terms fall below `1e-16` of the partial sum and the geometric tail bound
/// (term ratios are decreasing in `k`) is below `1e-14` of the sum.
pub fn wright_phi(rho: f64, beta: f64, z: f64) -> Result<WrightEval> {
    if !(rho.is_finite() && rho > 0.0) || !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wright_phi needs rho > 0 and beta > 0, got rho={rho}, beta={beta}"
        )));
    }
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wright_phi needs finite z >= 0, got {z}"
        )));
    }
    let ln_t0 = -ln_gamma(beta);
    if z == 0.0 {
        let mut e = make_eval(ln_t0, 1, 0.0);
        if beta.fract() == 0.0 && beta <= 20.0 {
            // 1/(β-1)! exactly
            e.value = 1.0 / (1..beta as u64).product::<u64>() as f64;
        }
        return Ok(e);
    }
    let ln_z = z.ln();
    // Running sum as exp(shift) * acc.
    let mut shift = ln_t0;
    let mut acc = 1.0f64;
    let mut prev_ln = ln_t0;
    let mut small_run = 0;
    let mut k = 0usize;
    loop {
        k += 1;
        if k > MAX_TERMS {
            return Err(Error::InvalidParameter(format!(
                "wright_phi series did not settle within {MAX_TERMS} terms (z={z})"
            )));
        }
        let kf = k as f64;
        let ln_t = kf * ln_z - ln_gamma(kf + 1.0) - ln_gamma(rho * kf + beta);
        if ln_t > shift {
            acc = acc * (shift - ln_t).exp() + 1.0;
            shift = ln_t;
        } else {
            acc += (ln_t - shift).exp();
        }
        let ln_sum = shift + acc.ln();
        let ln_ratio = ln_t - prev_ln;
        prev_ln = ln_t;
        if ln_ratio < 0.0 && ln_t - ln_sum < TERM_REL.ln() {
            small_run += 1;
        } else {
            small_run = 0;
        }
        if small_run >= 3 {
            let r = ln_ratio.exp();
            let ln_tail = ln_t + ln_ratio - (-r).ln_1p();
            let rel = (ln_tail - ln_sum).exp();
            if rel <= TAIL_REL {
                return Ok(make_eval(ln_sum, k + 1, rel));
            }
        }
    }
}

fn make_eval(ln_value: f64, terms_used: usize, rel: f64) -> WrightEval {
    let overflow = ln_value > LN_F64_MAX;
    let value = if overflow { f64::INFINITY } else { ln_value.exp() };
    WrightEval {
        value,
        ln_value,
        overflow,
        terms_used,
        truncation_bound: rel * value,
        rel_truncation_bound: rel,
    }
}

/// `E[S_t([0, x])] = φ(α, 1, t x^α)`.
pub fn mean_cdf(alpha: Alpha, t: f64, x: f64) -> Result<f64> {
    positive("t", t)?;
    positive("x", x)?;
    wright_phi(alpha.get(), 1.0, t * x.powf(alpha.get()))?.finite()
}

/// `ln E[S_t([0, x])]`, usable far beyond the `f64` range of the mean itself.
pub fn ln_mean_cdf(alpha: Alpha, t: f64, x: f64) -> Result<f64> {
    positive("t", t)?;
    positive("x", x)?;
    Ok(wright_phi(alpha.get(), 1.0, t * x.powf(alpha.get()))?.ln_value)
}

/// Leading-order asymptotics of `E[S_1([0, x])]` as `x → ∞`:
/// `exp((α+1)(x/α)^{α/(α+1)}) / sqrt(2π(α+1) α^{1/(α+1)} x^{α/(α+1)})`.
///
/// Empirical onset of 1% agreement with [`mean_cdf`] at `t = 1`, in terms of
/// `z = x^α`, beyond which the ratio stays within 1%: `z ≳ 9` for
/// `α = 0.5`, `z ≳ 43` for `α = 1`, `z ≳ 84` for `α = 2` (see the
/// `asymptotic_threshold_*` tests).
pub fn mean_cdf_asymptotic(alpha: Alpha, x: f64) -> Result<f64> {
    let ln = ln_mean_cdf_asymptotic(alpha, x)?;
    if ln > LN_F64_MAX {
        Err(Error::Overflow { ln_value: ln })
    } else {
        Ok(ln.exp())
    }
}

pub fn ln_mean_cdf_asymptotic(alpha: Alpha, x: f64) -> Result<f64> {
    positive("x", x)?;
    let a = alpha.get();
    let e = a / (a + 1.0);
    let ln_x = x.ln();
    let growth = (a + 1.0) * (e * (ln_x - a.ln())).exp();
    let ln_den = 0.5
        * ((2.0 * std::f64::consts::PI * (a + 1.0)).ln() + a.ln() / (a + 1.0) + e * ln_x);
    Ok(growth - ln_den)
}

/// `E[∫ e^{-θx} S_t(dx)] = exp(t θ^{-α})`.
pub fn laplace_mean(alpha: Alpha, t: f64, theta: f64) -> f64 {
    (t * theta.powf(-alpha.get())).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    /// Density of `μ_n` at `(t, x)`.
    pub density: f64,
    /// `μ_n([0, t] × [0, x]) = t^n x^{αn} / (n! Γ(αn + 1))`.
    pub cumulative: f64,
}

/// Intensity measure `μ_n` of the `n`-th generation.
pub fn intensity_mu_n(alpha: Alpha, n: u32, t: f64, x: f64) -> Result<Intensity> {
    if n == 0 {
        return Err(Error::InvalidParameter("generation n must be >= 1".into()));
    }
    positive("t", t)?;
    positive("x", x)?;
    Ok(Intensity {
        density: ln_mu_density(alpha, n, t, x).exp(),
        cumulative: ln_mu_cumulative(alpha, n, t, x).exp(),
    })
}

fn ln_mu_density(alpha: Alpha, n: u32, t: f64, x: f64) -> f64 {
    let a = alpha.get();
    let nf = n as f64;
    (nf - 1.0) * t.ln() + (a * nf - 1.0) * x.ln() - ln_gamma(nf) - ln_gamma(a * nf)
}

/// `ln μ_n([0, t] × [0, x])`.
pub fn ln_mu_cumulative(alpha: Alpha, n: u32, t: f64, x: f64) -> f64 {
    let a = alpha.get();
    let nf = n as f64;
    nf * t.ln() + a * nf * x.ln() - ln_gamma(nf + 1.0) - ln_gamma(a * nf + 1.0)
}

/// Expected number of atoms with generation `<= max_generation` in
/// `[0, t] × [0, x]`, the root included.
pub fn expected_atoms_up_to_generation(alpha: Alpha, max_generation: u32, t: f64, x: f64) -> f64 {
    1.0 + (1..=max_generation)
        .map(|n| ln_mu_cumulative(alpha, n, t, x).exp())
        .sum::<f64>()
}

/// `κ(a, b) = -log(a b^α)`, the log-Laplace transform of the reproduction law.
pub fn cumulant_2d(alpha: Alpha, a: f64, b: f64) -> f64 {
    -(a.ln() + alpha.get() * b.ln())
}

/// Legendre transform `κ*(p, q) = 1 + α + log p + α log(q/α)` for `p, q > 0`,
/// `+∞` otherwise.
pub fn legendre_kappa_star(alpha: Alpha, p: f64, q: f64) -> f64 {
    if p > 0.0 && q > 0.0 {
        let a = alpha.get();
        1.0 + a + p.ln() + a * (q / a).ln()
    } else {
        f64::INFINITY
    }
}

/// `c_α = α e^{-(α+1)/α}`.
pub fn c_alpha_const(alpha: Alpha) -> f64 {
    let a = alpha.get();
    a * (-(a + 1.0) / a).exp()
}

/// A rescaled point `(p, q) = (t/n, x/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapePoint {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Inside,
    Boundary,
    Outside,
}

/// Classifies `pt` against `C_α = {p q^α >= α^α e^{-(1+α)}}`.
pub fn in_region_c_alpha(alpha: Alpha, pt: ShapePoint) -> Region {
    if !(pt.p > 0.0 && pt.q > 0.0) {
        return Region::Outside;
    }
    let a = alpha.get();
    let threshold = a.powf(a) * (-(1.0 + a)).exp();
    let d = pt.p * pt.q.powf(a) - threshold;
    if d.abs() <= 1e-12 * threshold {
        Region::Boundary
    } else if d > 0.0 {
        Region::Inside
    } else {
        Region::Outside
    }
}

/// `(2π α^{1/(1+α)} (α+1))^{-1/2}`, the mean of the large-x limit of the normalized CDF.
pub fn mean_w_bar(alpha: Alpha) -> f64 {
    let a = alpha.get();
    (2.0 * std::f64::consts::PI * a.powf(1.0 / (1.0 + a)) * (a + 1.0)).powf(-0.5)
}

/// CDF of the smallest positive atom of `S_t`: `1 - exp(-t r a^α / α)`.
pub fn first_atom_cdf(alpha: Alpha, rate: f64, t: f64, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let al = alpha.get();
    -(-t * rate * a.powf(al) / al).exp_m1()
}

/// Bound on the expected contribution to `W_t(θ)` of atoms beyond `x_max`:
/// `exp(-tθ^{-α}) Σ_{n≥1} (tθ^{-α})^n / n! · Q(αn, θ x_max)`.
pub fn martingale_tail_bias(alpha: Alpha, theta: f64, t: f64, x_max: f64) -> f64 {
    let a = alpha.get();
    let lam = t * theta.powf(-a);
    if lam == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut ln_poisson = -lam; // ln(e^{-λ} λ^0 / 0!)
    let mut n = 0u32;
    loop {
        n += 1;
        ln_poisson += lam.ln() - (n as f64).ln();
        let weight = ln_poisson.exp();
        let q = gamma_ur(a * n as f64, theta * x_max);
        total += weight * q;
        // Remaining Poisson mass bounds the rest since Q <= 1.
        if n as f64 > lam && weight * lam / (n as f64 + 1.0 - lam) < 1e-18 * total.max(1e-300) {
            break;
        }
        if n > 100_000 {
            break;
        }
    }
    total
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}
