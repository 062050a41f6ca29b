//! The many-to-one spine `(A_i, S_i)` and the two sides of the many-to-one
//! identity
//!
//! `E Σ_{|u|=n, t_u<=1} f((1-t_{u_i}, x_{u_i})_{i<=n}) = E[f((A_i, S_i)_{i<=n}) e^{S_n} Π_{i<n} A_i]`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Alpha;
use crate::rng::Streams;
use crate::sim::Population;
use crate::stats::{summarize, Estimate};

/// Ages `A_i = U_1⋯U_i` and positions `S_i` (gamma(α, 1) increments), `i = 1..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinePath {
    pub ages: Vec<f64>,
    pub positions: Vec<f64>,
}

impl SpinePath {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.ages.len() == self.positions.len()
            && self.ages.iter().all(|&a| a > 0.0 && a < 1.0)
            && self.ages.windows(2).all(|w| w[1] < w[0])
            && self.positions.first().is_none_or(|&s| s > 0.0)
            && self.positions.windows(2).all(|w| w[1] > w[0])
    }
}

pub fn sample_spine<R: Rng + ?Sized>(alpha: Alpha, n: usize, rng: &mut R) -> SpinePath {
    let gamma = Gamma::new(alpha.get(), 1.0).expect("alpha is positive");
    let mut ages = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let (mut a, mut s) = (1.0f64, 0.0f64);
    for _ in 0..n {
        let u: f64 = Open01.sample(rng);
        a *= u;
        s += gamma.sample(rng);
        ages.push(a);
        positions.push(s);
    }
    SpinePath { ages, positions }
}

/// Functionals of a transformed lineage `((a_i, x_i))_{i=1..n}`; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Const(f64),
    /// `1{x_i <= a}`
    PosBelow { i: usize, a: f64 },
    /// `1{a_i <= a}`
    AgeBelow { i: usize, a: f64 },
    /// `a_i`
    Age { i: usize },
    /// `x_i`
    Pos { i: usize },
    Product(Vec<Functional>),
}

impl Functional {
    pub fn product(factors: impl IntoIterator<Item = Functional>) -> Self {
        Functional::Product(factors.into_iter().collect())
    }

    pub fn eval(&self, ages: &[f64], positions: &[f64]) -> f64 {
        match self {
            Functional::Const(c) => *c,
            Functional::PosBelow { i, a } => (positions[i - 1] <= *a) as u8 as f64,
            Functional::AgeBelow { i, a } => (ages[i - 1] <= *a) as u8 as f64,
            Functional::Age { i } => ages[i - 1],
            Functional::Pos { i } => positions[i - 1],
            Functional::Product(fs) => {
                let mut v = 1.0;
                for f in fs {
                    v *= f.eval(ages, positions);
                    if v == 0.0 {
                        break;
                    }
                }
                v
            }
        }
    }

    /// Checks that every index lies in `1..=n`.
    pub fn check_indices(&self, n: usize) -> Result<()> {
        match self {
            Functional::Const(_) => Ok(()),
            Functional::PosBelow { i, .. }
            | Functional::AgeBelow { i, .. }
            | Functional::Age { i }
            | Functional::Pos { i } => {
                if (1..=n).contains(i) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("functional index {i} outside 1..={n}")))
                }
            }
            Functional::Product(fs) => fs.iter().try_for_each(|f| f.check_indices(n)),
        }
    }

    /// A bound `b` such that `f = 0` whenever `x_n > b`, if one is known.
    pub fn support_bound(&self, n: usize) -> Option<f64> {
        match self {
            Functional::Const(c) if *c == 0.0 => Some(0.0),
            Functional::PosBelow { i, a } if *i == n => Some(a.max(0.0)),
            Functional::Product(fs) => fs
                .iter()
                .filter_map(|f| f.support_bound(n))
                .min_by(f64::total_cmp),
            _ => None,
        }
    }

    fn require_support(&self, n: usize) -> Result<f64> {
        self.check_indices(n)?;
        self.support_bound(n).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "functional needs a factor 1{{x_{n} <= a}}: the spine weight e^{{S_n}} is not integrable otherwise"
            ))
        })
    }
}

/// Built-in functionals for generation `n`: position indicators, an age
/// indicator and an age-weighted indicator.
pub fn functional_library(n: usize) -> Vec<(String, Functional)> {
    let pos = |i, a| Functional::PosBelow { i, a };
    let mut out = vec![
        (format!("1{{x_{n}<=1}}"), pos(n, 1.0)),
        (format!("1{{x_{n}<=0.5}}"), pos(n, 0.5)),
        (
            format!("1{{x_{n}<=1}}*a_1"),
            Functional::product([pos(n, 1.0), Functional::Age { i: 1 }]),
        ),
        (
            format!("1{{x_{n}<=1}}*1{{a_{n}<=0.5}}"),
            Functional::product([pos(n, 1.0), Functional::AgeBelow { i: n, a: 0.5 }]),
        ),
    ];
    if n >= 2 {
        out.push((
            format!("1{{x_1<=0.3}}*1{{x_{n}<=1}}"),
            Functional::product([pos(1, 0.3), pos(n, 1.0)]),
        ));
    }
    out
}

/// Spine-side estimate with diagnostics of the importance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpineEstimate {
    pub estimate: Estimate,
    /// Coefficient of variation of the per-replica contributions `|f| e^{S_n} Π A_i`.
    pub weight_cv: f64,
    /// `(Σ w)^2 / Σ w^2` over the same contributions.
    pub effective_sample_size: f64,
}

/// Monte Carlo estimate of `E[f((A_i, S_i)) e^{S_n} Π_{i<n} A_i]`.
pub fn many_to_one_rhs(alpha: Alpha, n: usize, f: &Functional, replicas: usize, seed: u64) -> Result<SpineEstimate> {
    if n == 0 {
        return Err(Error::InvalidParameter("spine length must be at least 1".into()));
    }
    f.require_support(n)?;
    let streams = Streams::new(seed);
    let samples: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(r);
            let p = sample_spine(alpha, n, &mut rng);
            let v = f.eval(&p.ages, &p.positions);
            if v == 0.0 {
                return 0.0;
            }
            let w = p.positions[n - 1].exp() * p.ages[..n - 1].iter().product::<f64>();
            v * w
        })
        .collect();
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteWeight(i));
    }
    let estimate = summarize(&samples, seed)?;
    let s1: f64 = samples.iter().map(|v| v.abs()).sum();
    let s2: f64 = samples.iter().map(|v| v * v).sum();
    let nf = samples.len() as f64;
    let mean_abs = s1 / nf;
    let var = (s2 / nf - mean_abs * mean_abs).max(0.0);
    Ok(SpineEstimate {
        estimate,
        weight_cv: if mean_abs > 0.0 { var.sqrt() / mean_abs } else { 0.0 },
        effective_sample_size: if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 },
    })
}

/// Per-population sum of `f` over generation-`n` atoms born by time 1,
/// evaluated on `(1 - t_i, x_i)_{i=1..n}` along each lineage.
pub fn lineage_sum(pop: &Population, n: usize, f: &Functional) -> Result<f64> {
    let bound = f.require_support(n)?;
    if pop.truncated {
        return Err(Error::TruncatedPopulation);
    }
    if pop.window.t_max < 1.0 || bound > pop.window.x_max {
        return Err(Error::OutsideWindow {
            t: 1.0,
            x: bound,
            t_max: pop.window.t_max,
            x_max: pop.window.x_max,
        });
    }
    if pop.caps.max_generation.is_some_and(|g| (g as usize) < n) {
        return Err(Error::InvalidParameter(format!("generation {n} was not simulated")));
    }
    let mut ages = vec![0.0; n];
    let mut positions = vec![0.0; n];
    let mut total = 0.0;
    for atom in pop.atoms.iter().filter(|a| a.generation as usize == n && a.birth_time <= 1.0) {
        let mut cur = atom;
        for k in (0..n).rev() {
            ages[k] = 1.0 - cur.birth_time;
            positions[k] = cur.position;
            if let Some(p) = cur.parent {
                cur = &pop.atoms[p];
            }
        }
        total += f.eval(&ages, &positions);
    }
    Ok(total)
}

/// Average of [`lineage_sum`] over independent populations.
pub fn many_to_one_lhs(populations: &[Population], n: usize, f: &Functional) -> Result<Estimate> {
    let sums = populations
        .iter()
        .map(|p| lineage_sum(p, n, f))
        .collect::<Result<Vec<f64>>>()?;
    summarize(&sums, populations.first().map_or(0, |p| p.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{normalize_lambda, LambdaSpec};
    use crate::rng::replica_seed;
    use crate::sim::{simulate_population, Caps, Window};

    fn a(v: f64) -> Alpha {
        Alpha::new(v).unwrap()
    }

    #[test]
    fn paths_are_monotone_and_moments_match() {
        let streams = Streams::new(4);
        let n = 3;
        let reps = 50_000;
        let (mut sa, mut ss) = (0.0, 0.0);
        for r in 0..reps {
            let p = sample_spine(a(1.5), n, &mut streams.stream(r));
            assert!(p.is_valid());
            sa += p.ages[n - 1];
            ss += p.positions[n - 1];
        }
        let (ma, ms) = (sa / reps as f64, ss / reps as f64);
        // Var A_3 = 3^{-3} - 2^{-6}, Var S_3 = 4.5
        assert!((ma - 0.125).abs() < 4.0 * ((1.0 / 27.0 - 1.0 / 64.0) / reps as f64).sqrt());
        assert!((ms - 4.5).abs() < 4.0 * (4.5 / reps as f64).sqrt());
    }

    #[test]
    fn spine_is_deterministic_given_seed() {
        let p = sample_spine(a(1.0), 5, &mut Streams::new(1).stream(2));
        let q = sample_spine(a(1.0), 5, &mut Streams::new(1).stream(2));
        assert_eq!(p, q);
    }

    #[test]
    fn rhs_exact_references() {
        let f1 = Functional::PosBelow { i: 1, a: 1.0 };
        let e = many_to_one_rhs(a(1.0), 1, &f1, 40_000, 3).unwrap();
        assert!((e.estimate.mean - 1.0).abs() < 4.0 * e.estimate.std_error);
        let f2 = Functional::PosBelow { i: 2, a: 1.0 };
        let e = many_to_one_rhs(a(1.0), 2, &f2, 40_000, 3).unwrap();
        assert!((e.estimate.mean - 0.25).abs() < 4.0 * e.estimate.std_error);
        assert!(e.effective_sample_size > 0.0 && e.weight_cv > 0.0);
        let zero = Functional::product([Functional::Const(0.0), Functional::Age { i: 1 }]);
        let e = many_to_one_rhs(a(1.0), 1, &zero, 100, 3).unwrap();
        assert_eq!((e.estimate.mean, e.estimate.std_error), (0.0, 0.0));
    }

    #[test]
    fn unbounded_or_malformed_functionals_are_refused() {
        assert!(many_to_one_rhs(a(1.0), 2, &Functional::Age { i: 1 }, 10, 0).is_err());
        assert!(many_to_one_rhs(a(1.0), 2, &Functional::PosBelow { i: 1, a: 1.0 }, 10, 0).is_err());
        assert!(many_to_one_rhs(a(1.0), 2, &Functional::PosBelow { i: 3, a: 1.0 }, 10, 0).is_err());
    }

    #[test]
    fn support_beyond_window_is_refused() {
        let m = normalize_lambda(&LambdaSpec::single(vec![1.0]).unwrap(), a(1.0));
        let pop = simulate_population(&m, Window::new(1.0, 0.5).unwrap(), 1, Caps::default());
        let f = Functional::PosBelow { i: 1, a: 1.0 };
        assert!(matches!(lineage_sum(&pop, 1, &f), Err(Error::OutsideWindow { .. })));
    }

    #[test]
    fn lhs_matches_first_generation_mean() {
        let m = normalize_lambda(&LambdaSpec::single(vec![1.0]).unwrap(), a(1.0));
        let pops: Vec<Population> = (0..20_000)
            .map(|r| simulate_population(&m, Window::new(1.0, 1.0).unwrap(), replica_seed(9, r), Caps::default()))
            .collect();
        let e = many_to_one_lhs(&pops, 1, &Functional::PosBelow { i: 1, a: 1.0 }).unwrap();
        assert!((e.mean - 1.0).abs() < 4.0 * e.std_error, "{e:?}");
        let e0 = many_to_one_lhs(&pops, 1, &Functional::Const(0.0)).unwrap();
        assert_eq!(e0.mean, 0.0);
    }
}
