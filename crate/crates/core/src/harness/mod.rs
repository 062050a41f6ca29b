//! Named, seeded experiments with fixed decision rules: `3·std_error` (plus
//! any stated bias bound) for means and `p > 0.01` for KS tests.

mod experiments;
mod report;

pub use experiments::*;
pub use report::{Check, ExperimentReport, ExperimentRun, ReplicaTable, Verdict};

use rayon::prelude::*;

use crate::analytic::{expected_atoms_up_to_generation, ln_mean_cdf};
use crate::error::{Error, Result};
use crate::measure::Alpha;
use crate::rng::replica_seed;
use crate::sim::{Caps, Window};

/// Runs `f(index, seed)` for every replica on the rayon pool, keeping replica
/// order, so results do not depend on the number of threads.
pub fn run_replicas<T, F>(replicas: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T> + Sync,
{
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| f(i, replica_seed(seed, i)))
        .collect()
}

/// Expected number of simulated atoms in `window` (generations up to the cap).
pub fn expected_atoms(alpha: Alpha, window: Window, caps: Caps) -> f64 {
    match caps.max_generation {
        Some(g) => expected_atoms_up_to_generation(alpha, g, window.t_max, window.x_max),
        None => ln_mean_cdf(alpha, window.t_max, window.x_max)
            .map(f64::exp)
            .unwrap_or(f64::INFINITY),
    }
}

/// Refuses runs whose expected population size exceeds the atom cap.
pub fn check_feasible(alpha: Alpha, window: Window, caps: Caps) -> Result<f64> {
    let expected = expected_atoms(alpha, window, caps);
    if expected.is_finite() && expected <= caps.max_atoms as f64 {
        Ok(expected)
    } else {
        Err(Error::Infeasible {
            expected,
            cap: caps.max_atoms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_order_is_kept() {
        let v = run_replicas(100, 3, |i, s| Ok((i, s))).unwrap();
        assert!(v.iter().enumerate().all(|(k, &(i, s))| i == k as u64 && s == replica_seed(3, i)));
        let e: Result<Vec<u8>> = run_replicas(10, 3, |i, _| {
            if i == 7 {
                Err(Error::TruncatedPopulation)
            } else {
                Ok(0)
            }
        });
        assert!(e.is_err());
    }

    #[test]
    fn feasibility() {
        let a = Alpha::new(1.0).unwrap();
        let w = Window::new(1.0, 1.0).unwrap();
        let e = check_feasible(a, w, Caps::default()).unwrap();
        assert!((e - 2.279585302336067).abs() < 1e-12);
        let big = Window::new(100.0, 100.0).unwrap();
        assert!(matches!(check_feasible(a, big, Caps::default()), Err(Error::Infeasible { .. })));
        let capped = check_feasible(a, big, Caps::default().with_max_generation(1)).unwrap();
        assert!((capped - (1.0 + 1e4)).abs() < 1e-6);
    }
}
