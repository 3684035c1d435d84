//! Shared fixtures for the benchmarks in `benches/`.

use hyperreg_core::model::{SpatialGrid, SystemParams};
use hyperreg_core::sim::{Design, EpsilonChoice, GainChoice};

/// Spatially varying plant used throughout the benchmarks.
pub fn plant(n_cells: usize) -> SystemParams {
    SystemParams::from_fns(
        &SpatialGrid::new(n_cells).expect("positive cell count"),
        |x| 1.0 + 0.3 * x,
        |x| 1.2 - 0.2 * x,
        |x| 0.5 * (1.0 + x),
        |_| 0.4,
        0.8,
        0.3,
    )
}

pub fn design(n_cells: usize) -> Design {
    Design::new(
        plant(n_cells),
        0.6,
        GainChoice::Auto { margin: 0.5 },
        EpsilonChoice::Auto,
    )
    .expect("fixture tuning is admissible")
}
