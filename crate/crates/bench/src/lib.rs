//! Shared fixtures for the benchmarks under `benches/`.

use sgflm_core::simulate::{simulate_case, MCCase, SimConfig};

/// One simulated case on an `rows x cols` torus with short chains.
pub fn small_case(rows: usize, cols: usize, replicates: usize, eta: f64) -> MCCase {
    let mut c = SimConfig::standard(eta);
    c.lattice.rows = rows;
    c.lattice.cols = cols;
    c.replicates = replicates;
    c.burn_in = 20;
    c.thin = 5;
    simulate_case(&c, 0, 0).expect("simulation succeeds")
}
