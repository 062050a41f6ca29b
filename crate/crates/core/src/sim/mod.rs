//! Window-truncated simulation of the CMJ population.

pub mod dump;
pub mod generation;
pub mod kernel;
pub mod population;

pub use dump::{read_atoms_csv, write_atoms_csv, DUMP_HEADER};
pub use generation::{simulate_generation, GenerationSample};
pub use kernel::{ReproductionEvent, ReproductionKernel};
pub use population::{
    count_atoms, simulate_population, AtomRecord, Caps, MartingaleValue, MinPosition, Population,
    Window,
};
