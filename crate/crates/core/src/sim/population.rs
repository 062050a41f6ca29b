use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::analytic::martingale_tail_bias;
use crate::error::{Error, Result};
use crate::measure::NormalizedLambda;
use crate::rng::{mix, Streams};

use super::kernel::ReproductionKernel;

/// Simulation window `[0, t_max] × [0, x_max]`.
///
/// Truncating at `x_max` is exact for every statistic of the window because
/// children are always born to the right of their parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_max: f64,
    pub x_max: f64,
}

impl Window {
    pub fn new(t_max: f64, x_max: f64) -> Result<Self> {
        if t_max.is_finite() && t_max > 0.0 && x_max.is_finite() && x_max > 0.0 {
            Ok(Window { t_max, x_max })
        } else {
            Err(Error::InvalidParameter(format!(
                "window bounds must be positive and finite, got t_max={t_max}, x_max={x_max}"
            )))
        }
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        (0.0..=self.t_max).contains(&t) && (0.0..=self.x_max).contains(&x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub position: f64,
    pub generation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_atoms: usize,
    /// Individuals of this generation do not reproduce. Exact for every
    /// statistic that only looks at generations up to the cap.
    pub max_generation: Option<u32>,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_atoms: 10_000_000,
            max_generation: None,
        }
    }
}

impl Caps {
    pub fn with_max_generation(mut self, n: u32) -> Self {
        self.max_generation = Some(n);
        self
    }

    pub fn with_max_atoms(mut self, n: usize) -> Self {
        self.max_atoms = n;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleValue {
    pub value: f64,
    /// Bound on the expected contribution of atoms beyond `x_max`.
    pub tail_bias_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MinPosition {
    Found(f64),
    /// No atom of that generation within the window: `z_n > lower_bound`.
    Censored { lower_bound: f64 },
}

impl MinPosition {
    /// The observed minimum, or the censoring bound.
    pub fn value_or_bound(&self) -> f64 {
        match *self {
            MinPosition::Found(z) => z,
            MinPosition::Censored { lower_bound } => lower_bound,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, MinPosition::Censored { .. })
    }
}

/// A simulated, window-truncated CMJ population with its genealogy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    /// Sorted by birth time; `atoms[i].id == i`; the root is `atoms[0]`.
    pub atoms: Vec<AtomRecord>,
    pub window: Window,
    pub seed: u64,
    pub model: NormalizedLambda,
    pub caps: Caps,
    /// Set when the atom cap stopped the simulation early.
    pub truncated: bool,
    /// Children discarded beyond `x_max` by events whose nearest child fit.
    pub overflow_tally: u64,
}

struct Pending {
    time: f64,
    seq: u64,
    position: f64,
    parent: usize,
    generation: u32,
    label: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub(crate) const ROOT_LABEL: u64 = 0x0005_eed0_f000_0001;

/// Simulates the population born in `window`, processing births in time order.
///
/// Each individual owns an independent reproduction clock drawn from a stream
/// labelled by its genealogical address (parent label, event rank, child rank),
/// so the realization does not depend on scheduling. Enlarging `x_max` only
/// adds atoms, and simulating on a dilated window reproduces the dilated
/// population.
pub fn simulate_population(
    model: &NormalizedLambda,
    window: Window,
    seed: u64,
    caps: Caps,
) -> Population {
    let kernel = ReproductionKernel::new(model);
    let streams = Streams::new(seed);
    let mut atoms: Vec<AtomRecord> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut overflow_tally = 0u64;
    let mut truncated = false;
    heap.push(Pending {
        time: 0.0,
        seq,
        position: 0.0,
        parent: usize::MAX,
        generation: 0,
        label: ROOT_LABEL,
    });
    while let Some(p) = heap.pop() {
        if atoms.len() >= caps.max_atoms {
            truncated = true;
            break;
        }
        let id = atoms.len();
        atoms.push(AtomRecord {
            id,
            parent: (p.parent != usize::MAX).then_some(p.parent),
            birth_time: p.time,
            position: p.position,
            generation: p.generation,
        });
        if caps.max_generation.is_some_and(|g| p.generation >= g) {
            continue;
        }
        let life = window.t_max - p.time;
        let budget = window.x_max - p.position;
        let mut rng = streams.stream(p.label);
        overflow_tally += kernel.run_clock(life, budget, &mut rng, |event, s, k, offset| {
            seq += 1;
            heap.push(Pending {
                time: (p.time + s * life).min(window.t_max),
                seq,
                position: (p.position + offset).min(window.x_max),
                parent: id,
                generation: p.generation + 1,
                label: mix(mix(p.label, event), k as u64),
            });
        });
    }
    Population {
        atoms,
        window,
        seed,
        model: model.clone(),
        caps,
        truncated,
        overflow_tally,
    }
}

/// Number of atoms with `birth_time <= t` and `position <= x`.
pub fn count_atoms(atoms: &[AtomRecord], t: f64, x: f64) -> usize {
    atoms
        .iter()
        .filter(|a| a.birth_time <= t && a.position <= x)
        .count()
}

impl Population {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn usable(&self) -> Result<()> {
        if self.truncated {
            Err(Error::TruncatedPopulation)
        } else {
            Ok(())
        }
    }

    fn check_inside(&self, t: f64, x: f64) -> Result<()> {
        if self.window.contains(t, x) {
            Ok(())
        } else {
            Err(Error::OutsideWindow {
                t,
                x,
                t_max: self.window.t_max,
                x_max: self.window.x_max,
            })
        }
    }

    /// `S_t([0, x])`, the root included.
    pub fn count_cdf(&self, t: f64, x: f64) -> Result<usize> {
        self.usable()?;
        self.check_inside(t, x)?;
        Ok(count_atoms(&self.atoms, t, x))
    }

    /// `S_t([lo, hi])` for `0 <= lo <= hi <= x_max`.
    pub fn count_interval(&self, t: f64, lo: f64, hi: f64) -> Result<usize> {
        self.usable()?;
        self.check_inside(t, hi)?;
        Ok(self
            .atoms
            .iter()
            .filter(|a| a.birth_time <= t && a.position >= lo && a.position <= hi)
            .count())
    }

    /// `Z_n([0, t] × [0, x])`.
    pub fn generation_count(&self, n: u32, t: f64, x: f64) -> Result<usize> {
        self.usable()?;
        self.check_inside(t, x)?;
        self.check_generation(n)?;
        Ok(self
            .atoms
            .iter()
            .filter(|a| a.generation == n && a.birth_time <= t && a.position <= x)
            .count())
    }

    fn check_generation(&self, n: u32) -> Result<()> {
        match self.caps.max_generation {
            Some(g) if n > g => Err(Error::InvalidParameter(format!(
                "generation {n} exceeds the simulated cap {g}"
            ))),
            _ => Ok(()),
        }
    }

    /// Additive martingale `W_t(θ) = exp(-tθ^{-α}) Σ_{birth <= t} e^{-θ x}`.
    pub fn martingale_w(&self, theta: f64, t: f64) -> Result<MartingaleValue> {
        self.usable()?;
        if self.caps.max_generation.is_some() {
            return Err(Error::InvalidParameter(
                "martingale needs an uncapped genealogy".into(),
            ));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        self.check_inside(t, 0.0)?;
        let alpha = self.model.alpha;
        let sum: f64 = self
            .atoms
            .iter()
            .filter(|a| a.birth_time <= t)
            .map(|a| (-theta * a.position).exp())
            .sum();
        let damp = (-t * theta.powf(-alpha.get())).exp();
        Ok(MartingaleValue {
            value: damp * sum,
            tail_bias_bound: martingale_tail_bias(alpha, theta, t, self.window.x_max),
        })
    }

    /// `(birth_time, position)` of every ancestor of `id`, root first.
    pub fn lineage(&self, id: usize) -> Result<Vec<(f64, f64)>> {
        let mut cur = self.atoms.get(id).ok_or(Error::UnknownAtom(id))?;
        let mut out = vec![(cur.birth_time, cur.position)];
        while let Some(p) = cur.parent {
            cur = &self.atoms[p];
            out.push((cur.birth_time, cur.position));
        }
        out.reverse();
        Ok(out)
    }

    /// Applies `(t, x) → (c^{-α} t, c x)` to every atom and to the window.
    pub fn dilate(&self, c: f64) -> Result<Population> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("dilation must be positive, got {c}")));
        }
        let tc = c.powf(-self.model.alpha.get());
        let mut out = self.clone();
        out.window = Window::new(tc * self.window.t_max, c * self.window.x_max)?;
        for a in &mut out.atoms {
            a.birth_time *= tc;
            a.position *= c;
        }
        Ok(out)
    }

    /// Minimal position `z_n` among generation-`n` atoms born by time 1.
    pub fn min_position_generation_n(&self, n: u32) -> Result<MinPosition> {
        self.usable()?;
        if self.window.t_max < 1.0 {
            return Err(Error::OutsideWindow {
                t: 1.0,
                x: 0.0,
                t_max: self.window.t_max,
                x_max: self.window.x_max,
            });
        }
        self.check_generation(n)?;
        let z = self
            .atoms
            .iter()
            .filter(|a| a.generation == n && a.birth_time <= 1.0)
            .map(|a| a.position)
            .min_by(f64::total_cmp);
        Ok(match z {
            Some(z) => MinPosition::Found(z),
            None => MinPosition::Censored {
                lower_bound: self.window.x_max,
            },
        })
    }

    /// Checks the structural invariants of a simulated population.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let root = self.atoms.first().ok_or("empty population")?;
        if root.id != 0
            || root.parent.is_some()
            || root.birth_time != 0.0
            || root.position != 0.0
            || root.generation != 0
        {
            return Err(format!("malformed root {root:?}"));
        }
        let at_zero = self.atoms.iter().filter(|a| a.position == 0.0).count();
        if at_zero != 1 {
            return Err(format!("{at_zero} atoms at position 0"));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.id != i {
                return Err(format!("atom {i} carries id {}", a.id));
            }
            if !self.window.contains(a.birth_time, a.position) {
                return Err(format!("atom {i} outside window"));
            }
            if i > 0 {
                if a.birth_time < self.atoms[i - 1].birth_time {
                    return Err(format!("atoms not sorted by birth time at {i}"));
                }
                // parents precede children, so links are acyclic and reach the root
                let p = a.parent.ok_or_else(|| format!("non-root atom {i} has no parent"))?;
                if p >= i {
                    return Err(format!("atom {i} has parent {p} born no earlier"));
                }
                let parent = &self.atoms[p];
                if !(a.position > parent.position && a.birth_time > parent.birth_time) {
                    return Err(format!("atom {i} not strictly right of / after its parent"));
                }
                if a.generation != parent.generation + 1 {
                    return Err(format!("atom {i} generation mismatch"));
                }
            }
        }
        Ok(())
    }
}
