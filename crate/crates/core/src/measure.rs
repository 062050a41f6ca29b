//! The generating measure `λ` of a branching-stable process.
//!
//! `λ` is restricted to finite mixtures of finite configurations: a list of
//! weighted point configurations on `(0, ∞)`. The self-similar reproduction
//! intensity is `Λ*(F) = ∫_0^∞ y^{α-1} ∫ F(y x) λ(dx) dy`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quad;

/// Self-similarity index `α > 0`; the scaling exponent is `-α`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Alpha(value))
        } else {
            Err(Error::InvalidParameter(format!(
                "alpha must be positive and finite, got {value}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Alpha::new(value)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// One finite configuration `x_1 <= ... <= x_m` of strictly positive offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Config {
    offsets: Vec<f64>,
}

impl Config {
    /// Builds a configuration, sorting the offsets. Repeated values encode
    /// multiplicity.
    pub fn new(mut offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter(
                "configuration must contain at least one offset".into(),
            ));
        }
        if let Some(bad) = offsets.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "offsets must be strictly positive and finite, got {bad}"
            )));
        }
        offsets.sort_by(f64::total_cmp);
        Ok(Config { offsets })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Nearest offset `x_1`.
    pub fn first(&self) -> f64 {
        self.offsets[0]
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dilate(&self, c: f64) -> Config {
        Config {
            offsets: self.offsets.iter().map(|x| c * x).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for Config {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Config::new(v)
    }
}

impl From<Config> for Vec<f64> {
    fn from(c: Config) -> Vec<f64> {
        c.offsets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub weight: f64,
    pub offsets: Config,
}

/// A finite, non-zero measure `λ` on finite positive configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Entry>", into = "Vec<Entry>")]
pub struct LambdaSpec {
    entries: Vec<Entry>,
}

impl LambdaSpec {
    pub fn new(entries: Vec<Entry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter(
                "lambda must have at least one entry".into(),
            ));
        }
        for e in &entries {
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weights must be positive and finite, got {}",
                    e.weight
                )));
            }
        }
        Ok(LambdaSpec { entries })
    }

    /// Convenience constructor from `(weight, offsets)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<f64>)>,
    {
        let entries = pairs
            .into_iter()
            .map(|(weight, offsets)| {
                Ok(Entry {
                    weight,
                    offsets: Config::new(offsets)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LambdaSpec::new(entries)
    }

    /// A single configuration with unit weight.
    pub fn single(offsets: Vec<f64>) -> Result<Self> {
        LambdaSpec::from_pairs([(1.0, offsets)])
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Dilates every configuration by `c`.
    pub fn dilate(&self, c: f64) -> LambdaSpec {
        LambdaSpec {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    weight: e.weight,
                    offsets: e.offsets.dilate(c),
                })
                .collect(),
        }
    }
}

impl TryFrom<Vec<Entry>> for LambdaSpec {
    type Error = Error;
    fn try_from(v: Vec<Entry>) -> Result<Self> {
        LambdaSpec::new(v)
    }
}

impl From<LambdaSpec> for Vec<Entry> {
    fn from(s: LambdaSpec) -> Vec<Entry> {
        s.entries
    }
}

/// `λ` dilated so that `c(λ) Γ(α) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLambda {
    pub spec: LambdaSpec,
    pub alpha: Alpha,
    pub dilation_applied: f64,
}

impl NormalizedLambda {
    /// Rate `r` of [`first_atom_rate`] for the normalized spec.
    pub fn first_atom_rate(&self) -> f64 {
        first_atom_rate(&self.spec, self.alpha)
    }
}

/// `c(λ) = Σ_j w_j Σ_k x_{j,k}^{-α}`.
pub fn c_lambda(spec: &LambdaSpec, alpha: Alpha) -> f64 {
    let a = alpha.get();
    spec.entries
        .iter()
        .map(|e| e.weight * e.offsets.offsets().iter().map(|x| x.powf(-a)).sum::<f64>())
        .sum()
}

/// Dilates every configuration by `d = (c(λ) Γ(α))^{1/α}`.
pub fn normalize_lambda(spec: &LambdaSpec, alpha: Alpha) -> NormalizedLambda {
    let a = alpha.get();
    let d = (c_lambda(spec, alpha) * gamma(a)).powf(1.0 / a);
    NormalizedLambda {
        spec: spec.dilate(d),
        alpha,
        dilation_applied: d,
    }
}

/// `r = Σ_j w_j x_{j,1}^{-α}`, so that `Λ*({x_1 <= a}) = r a^α / α`.
pub fn first_atom_rate(spec: &LambdaSpec, alpha: Alpha) -> f64 {
    let a = alpha.get();
    spec.entries
        .iter()
        .map(|e| e.weight * e.offsets.first().powf(-a))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpIntegral {
    pub value: f64,
    /// Achieved relative accuracy (quadrature error plus tail bound, over value).
    pub rel_accuracy: f64,
    /// Upper limit `Y` of the numerically integrated range `(0, Y]`.
    pub upper_limit: f64,
    /// Analytic bound on `∫_Y^∞`.
    pub tail_bound: f64,
}

const LP_REL_TOL: f64 = 1e-8;

/// Regularized upper incomplete gamma `Q(a, x)`, with `Q(a, 0) = 1`.
fn upper_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}
const LP_TAIL_REL: f64 = 1e-12;

/// `∫_0^∞ y^{α-1} Σ_j w_j (Σ_k e^{-y x_{j,k}})^p dy` for `p ∈ (1, 2]`.
pub fn lp_condition_integral(spec: &LambdaSpec, alpha: Alpha, p: f64) -> Result<LpIntegral> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "p must lie in (1, 2], got {p}"
        )));
    }
    let a = alpha.get();
    let integrand = |y: f64| -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let s: f64 = spec
            .entries
            .iter()
            .map(|e| {
                let inner: f64 = e.offsets.offsets().iter().map(|x| (-y * x).exp()).sum();
                e.weight * inner.powf(p)
            })
            .sum();
        y.powf(a - 1.0) * s
    };
    // On (Y, ∞): (Σ_k e^{-y x_k})^p <= m^p e^{-p y x_1}, whose weighted integral
    // is Σ_j w_j m_j^p Γ(α) (p x_{j,1})^{-α} Q(α, p x_{j,1} Y).
    let tail = |y_lim: f64| -> f64 {
        spec.entries
            .iter()
            .map(|e| {
                let m = e.offsets.len() as f64;
                let rate = p * e.offsets.first();
                e.weight * m.powf(p) * gamma(a) * rate.powf(-a) * upper_q(a, rate * y_lim)
            })
            .sum()
    };
    // Rough magnitude: Σ w_j m^p Γ(α) (p x_{j,1})^{-α} bounds the whole integral.
    let scale = tail(0.0).max(f64::MIN_POSITIVE);

    // Break points at the natural scales 1/x of the configurations.
    let mut scales: Vec<f64> = spec
        .entries
        .iter()
        .flat_map(|e| e.offsets.offsets().iter().map(|x| 1.0 / x))
        .collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let smallest = scales[0];
    let largest = *scales.last().unwrap();

    let mut upper = 8.0 * largest;
    while tail(upper) > LP_TAIL_REL * 1e-3 * scale {
        upper *= 2.0;
    }
    let mut points = vec![0.0, smallest * 1e-3];
    let mut b = smallest * 1e-3;
    while b < upper {
        b = (b * 2.0).min(upper);
        points.push(b);
    }

    let abs_tol = 0.1 * LP_REL_TOL * scale;
    let per_panel = abs_tol / points.len() as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        match quad::integrate(&integrand, w[0], w[1], per_panel) {
            Ok(q) => {
                value += q.value;
                error += q.error;
            }
            Err(Error::Quadrature { partial, error: e }) => {
                return Err(Error::Quadrature {
                    partial: value + partial,
                    error: error + e,
                })
            }
            Err(e) => return Err(e),
        }
    }
    let tail_bound = tail(upper);
    if tail_bound > LP_TAIL_REL * value {
        // `scale` over-estimated the integral by too much; extend the range.
        let mut y0 = upper;
        let mut extra = 0.0;
        while tail(y0) > LP_TAIL_REL * (value + extra) {
            let y1 = 2.0 * y0;
            let q = quad::integrate(&integrand, y0, y1, per_panel)?;
            extra += q.value;
            error += q.error;
            y0 = y1;
        }
        value += extra;
        upper = y0;
    }
    let tail_bound = tail(upper);
    let rel_accuracy = (error + tail_bound) / value;
    if rel_accuracy > LP_REL_TOL {
        return Err(Error::Quadrature {
            partial: value,
            error: error + tail_bound,
        });
    }
    Ok(LpIntegral {
        value,
        rel_accuracy,
        upper_limit: upper,
        tail_bound,
    })
}

/// On-disk model description: `alpha` plus weighted configurations.
///
/// ```toml
/// alpha = 1.0
/// [[entries]]
/// weight = 1.0
/// offsets = [1.0, 2.5]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub alpha: Alpha,
    pub entries: LambdaSpec,
}

impl ModelFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    pub fn normalized(&self) -> NormalizedLambda {
        normalize_lambda(&self.entries, self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn al(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    #[test]
    fn c_lambda_examples() {
        assert_eq!(c_lambda(&LambdaSpec::single(vec![1.0]).unwrap(), al(1.0)), 1.0);
        let s = LambdaSpec::from_pairs([(2.0, vec![1.0, 2.0])]).unwrap();
        assert!((c_lambda(&s, al(1.0)) - 3.0).abs() < 1e-15);
        let s = LambdaSpec::single(vec![2.0]).unwrap();
        assert!((c_lambda(&s, al(2.0)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_lambda(&LambdaSpec::single(vec![1.0]).unwrap(), al(1.0));
        assert!((n.dilation_applied - 1.0).abs() < 1e-15);
        assert!((n.spec.entries()[0].offsets.first() - 1.0).abs() < 1e-15);

        let n = normalize_lambda(&LambdaSpec::from_pairs([(2.0, vec![1.0])]).unwrap(), al(1.0));
        assert!((n.dilation_applied - 2.0).abs() < 1e-14);
        assert!((n.spec.entries()[0].offsets.first() - 2.0).abs() < 1e-14);
        assert!((c_lambda(&n.spec, al(1.0)) - 1.0).abs() < 1e-14);

        let n = normalize_lambda(&LambdaSpec::single(vec![1.0]).unwrap(), al(2.0));
        assert!((n.dilation_applied - 1.0).abs() < 1e-14);
    }

    #[test]
    fn first_atom_rate_examples() {
        assert_eq!(first_atom_rate(&LambdaSpec::single(vec![1.0]).unwrap(), al(1.0)), 1.0);
        assert_eq!(
            first_atom_rate(&LambdaSpec::single(vec![1.0, 2.0]).unwrap(), al(1.0)),
            1.0
        );
        let s = LambdaSpec::from_pairs([(3.0, vec![2.0])]).unwrap();
        assert!((first_atom_rate(&s, al(2.0)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lp_integral_examples() {
        let one = LambdaSpec::single(vec![1.0]).unwrap();
        let v = lp_condition_integral(&one, al(1.0), 2.0).unwrap();
        assert!((v.value - 0.5).abs() < 1e-9, "{v:?}");
        assert!(v.rel_accuracy <= 1e-8);
        let v = lp_condition_integral(&one, al(2.0), 2.0).unwrap();
        assert!((v.value - 0.25).abs() < 1e-9, "{v:?}");
        let two = LambdaSpec::single(vec![1.0, 1.0]).unwrap();
        let v = lp_condition_integral(&two, al(1.0), 2.0).unwrap();
        assert!((v.value - 2.0).abs() < 2e-8, "{v:?}");
    }

    #[test]
    fn lp_integral_singular_alpha_and_spread_offsets() {
        // α = 1/2, single atom at 1, p = 3/2: Γ(1/2) (3/2)^{-1/2}
        let one = LambdaSpec::single(vec![1.0]).unwrap();
        let v = lp_condition_integral(&one, al(0.5), 1.5).unwrap();
        let exact = std::f64::consts::PI.sqrt() / 1.5f64.sqrt();
        assert!(((v.value - exact) / exact).abs() < 1e-8, "{v:?} {exact}");

        let spread = LambdaSpec::from_pairs([(1.0, vec![0.01, 100.0]), (0.5, vec![3.0])]).unwrap();
        let v = lp_condition_integral(&spread, al(1.3), 1.7).unwrap();
        assert!(v.value.is_finite() && v.value > 0.0);
        assert!(v.rel_accuracy <= 1e-8);
    }

    #[test]
    fn lp_rejects_p_out_of_range() {
        let one = LambdaSpec::single(vec![1.0]).unwrap();
        assert!(lp_condition_integral(&one, al(1.0), 1.0).is_err());
        assert!(lp_condition_integral(&one, al(1.0), 2.5).is_err());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Alpha::new(0.0).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
        assert!(Config::new(vec![]).is_err());
        assert!(Config::new(vec![1.0, 0.0]).is_err());
        assert!(LambdaSpec::from_pairs([(0.0, vec![1.0])]).is_err());
        assert!(LambdaSpec::new(vec![]).is_err());
    }

    #[test]
    fn config_sorts_offsets() {
        let c = Config::new(vec![3.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.offsets(), &[1.0, 1.0, 3.0]);
    }

    #[test]
    fn model_file_parses() {
        let m = ModelFile::from_toml_str(
            "alpha = 1.5\n[[entries]]\nweight = 2\noffsets = [2.0, 1]\n[[entries]]\nweight = 0.5\noffsets = [0.25]\n",
        )
        .unwrap();
        assert_eq!(m.alpha.get(), 1.5);
        assert_eq!(m.entries.entries().len(), 2);
        assert_eq!(m.entries.entries()[0].offsets.offsets(), &[1.0, 2.0]);
        let back = ModelFile::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn model_file_rejects_non_positive_offsets() {
        let err = ModelFile::from_toml_str("alpha = 1\n[[entries]]\nweight = 1\noffsets = [0.0]\n");
        assert!(err.is_err());
        let err = ModelFile::from_toml_str("alpha = 1\n[[entries]]\nweight = 1\noffsets = [\"a\"]\n");
        assert!(err.is_err());
        let err = ModelFile::from_toml_str("alpha = -1\n[[entries]]\nweight = 1\noffsets = [1.0]\n");
        assert!(err.is_err());
    }
}
