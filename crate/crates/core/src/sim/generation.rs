use crate::analytic::ln_mu_cumulative;
use crate::error::{Error, Result};
use crate::measure::NormalizedLambda;
use crate::rng::{mix, Streams};

use super::kernel::ReproductionKernel;
use super::population::{Caps, Window, ROOT_LABEL};

/// Atoms of one generation, obtained without storing the rest of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSample {
    /// `(birth_time, position)` of every generation-`n` atom kept.
    pub points: Vec<(f64, f64)>,
    /// Individuals visited, all generations.
    pub visited: usize,
    /// Expected number of generation-`n` atoms below the individuals that
    /// were not expanded.
    pub pruned_mass: f64,
}

/// Generation-`n` atoms of the population in `window`.
///
/// Individuals are drawn from the same per-label streams as
/// [`simulate_population`](super::simulate_population), so with
/// `prune_below == 0` the points are exactly its generation-`n` atoms. An
/// individual whose expected number of generation-`n` descendants inside the
/// window is below `prune_below` is not expanded; the result is then a subset
/// of those atoms, and the discarded expectation is returned.
pub fn simulate_generation(
    model: &NormalizedLambda,
    window: Window,
    seed: u64,
    n: u32,
    prune_below: f64,
    caps: Caps,
) -> Result<GenerationSample> {
    let alpha = model.alpha;
    let kernel = ReproductionKernel::new(model);
    let streams = Streams::new(seed);
    let ln_eps = prune_below.ln();
    let mut out = GenerationSample {
        points: Vec::new(),
        visited: 0,
        pruned_mass: 0.0,
    };
    // (time, position, generation, label)
    let mut stack = vec![(0.0f64, 0.0f64, 0u32, ROOT_LABEL)];
    while let Some((time, position, generation, label)) = stack.pop() {
        out.visited += 1;
        if out.visited > caps.max_atoms {
            return Err(Error::TruncatedPopulation);
        }
        if generation == n {
            out.points.push((time, position));
            continue;
        }
        let life = window.t_max - time;
        let budget = window.x_max - position;
        if !(life > 0.0 && budget > 0.0) {
            continue;
        }
        if prune_below > 0.0 {
            let ln_mu = ln_mu_cumulative(alpha, n - generation, life, budget);
            if ln_mu < ln_eps {
                out.pruned_mass += ln_mu.exp();
                continue;
            }
        }
        let mut rng = streams.stream(label);
        kernel.run_clock(life, budget, &mut rng, |event, s, k, offset| {
            stack.push((
                (time + s * life).min(window.t_max),
                (position + offset).min(window.x_max),
                generation + 1,
                mix(mix(label, event), k as u64),
            ));
        });
    }
    Ok(out)
}
