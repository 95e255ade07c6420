//! Shared fixtures for the benchmarks.

use fracstep_core::plasma::{default_plasma_scheme, PlasmaModel, PlasmaParams};
use fracstep_core::{DiffScheme, SpaceGrid, StateField};

/// Plasma model at its initial state on an `m`-interval grid.
pub struct PlasmaFixture {
    pub model: PlasmaModel,
    pub grid: SpaceGrid,
    pub scheme: DiffScheme,
    pub state: StateField,
    pub tau: f64,
    pub source: Vec<f64>,
}

impl PlasmaFixture {
    pub fn new(m: usize) -> Self {
        let model = PlasmaModel::new(PlasmaParams::default()).expect("default parameters are valid");
        let grid = SpaceGrid::new(m).expect("m >= 2");
        let state = model.iv.sample(&grid);
        let source = vec![0.0; state.values().len()];
        Self {
            tau: model.tau(m),
            scheme: default_plasma_scheme(),
            model,
            grid,
            state,
            source,
        }
    }
}
