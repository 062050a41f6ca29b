use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

use crate::measure::{Config, NormalizedLambda};

/// One reproduction event whose nearest child lands within the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproductionEvent {
    /// Total rate `R = (budget^α / α) r` of such events per unit time.
    pub rate: f64,
    pub config_index: usize,
    /// Dilation `y` applied to the chosen configuration.
    pub dilation_y: f64,
}

/// Per-individual reproduction law of the CMJ process, restricted to the
/// spatial room left in the window.
#[derive(Debug, Clone)]
pub struct ReproductionKernel {
    alpha: f64,
    configs: Vec<Config>,
    /// Cumulative choice weights `Σ_{i<=j} w_i x_{i,1}^{-α}`.
    cumulative: Vec<f64>,
    rate: f64,
}

impl ReproductionKernel {
    pub fn new(model: &NormalizedLambda) -> Self {
        let alpha = model.alpha.get();
        let mut total = 0.0;
        let mut cumulative = Vec::with_capacity(model.spec.entries().len());
        let mut configs = Vec::with_capacity(cumulative.capacity());
        for e in model.spec.entries() {
            total += e.weight * e.offsets.first().powf(-alpha);
            cumulative.push(total);
            configs.push(e.offsets.clone());
        }
        ReproductionKernel {
            alpha,
            configs,
            cumulative,
            rate: total,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// First-atom rate `r`.
    pub fn first_atom_rate(&self) -> f64 {
        self.rate
    }

    pub fn config(&self, j: usize) -> &Config {
        &self.configs[j]
    }

    /// Rate of events whose nearest child lands within `budget`.
    pub fn event_rate(&self, budget: f64) -> f64 {
        if budget <= 0.0 {
            0.0
        } else {
            budget.powf(self.alpha) / self.alpha * self.rate
        }
    }

    /// Picks configuration `j` with probability `∝ w_j x_{j,1}^{-α}`.
    pub fn choose_config<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.cumulative.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random::<f64>() * self.rate;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    /// Samples one event of the budget-restricted Poisson process.
    ///
    /// Returns `None` for a sterile individual (`budget <= 0`).
    pub fn sample_reproduction_event<R: Rng + ?Sized>(
        &self,
        budget: f64,
        rng: &mut R,
    ) -> Option<ReproductionEvent> {
        if !(budget > 0.0) {
            return None;
        }
        let config_index = self.choose_config(rng);
        let y_max = budget / self.configs[config_index].first();
        let u: f64 = Open01.sample(rng);
        Some(ReproductionEvent {
            rate: self.event_rate(budget),
            config_index,
            dilation_y: y_max * u.powf(1.0 / self.alpha),
        })
    }

    /// Offsets `y x_{j,k}` of an event that fit within `budget`, and the number
    /// discarded beyond it.
    pub fn placed_offsets(&self, event: &ReproductionEvent, budget: f64) -> (Vec<f64>, usize) {
        let offsets = self.configs[event.config_index].offsets();
        let kept: Vec<f64> = offsets
            .iter()
            .map(|x| event.dilation_y * x)
            .take_while(|&d| d <= budget)
            .collect();
        let dropped = offsets.len() - kept.len();
        (kept, dropped)
    }

    /// Runs the reproduction clock of one individual over a lifetime of length
    /// `life` with spatial room `budget`, calling `emit(event_index, time_fraction,
    /// child_index, offset)` for every child landing within the budget.
    ///
    /// Events are enumerated in increasing order of their nearest-child offset
    /// through the unit-rate mass parametrization `m = life · r · u^α / α`, so
    /// the prefix of events is shared by every larger budget and the whole
    /// path is equivariant under `(t, x) → (c^{-α} t, c x)`. Returns the number
    /// of children discarded beyond the budget.
    pub fn run_clock<R, F>(&self, life: f64, budget: f64, rng: &mut R, mut emit: F) -> u64
    where
        R: Rng + ?Sized,
        F: FnMut(u64, f64, usize, f64),
    {
        if !(life > 0.0 && budget > 0.0) {
            return 0;
        }
        let a = self.alpha;
        let scale = a / (life * self.rate);
        let total_mass = life * self.rate * budget.powf(a) / a;
        let mut dropped = 0u64;
        let mut mass = 0.0f64;
        let mut event = 0u64;
        loop {
            let e: f64 = Exp1.sample(rng);
            mass += e;
            if mass > total_mass {
                break;
            }
            let u = (scale * mass).powf(1.0 / a);
            let s: f64 = Open01.sample(rng);
            let j = self.choose_config(rng);
            let offsets = self.configs[j].offsets();
            let y = u / offsets[0];
            emit(event, s, 0, u);
            for (k, x) in offsets.iter().enumerate().skip(1) {
                let d = y * x;
                if d <= budget {
                    emit(event, s, k, d);
                } else {
                    dropped += (offsets.len() - k) as u64;
                    break;
                }
            }
            event += 1;
        }
        dropped
    }
}
