//! Fixtures for the benchmarks.

use loggrowth_core::experiments::{setup, DensitySetup};
use loggrowth_core::DensityId;

/// D2 with its optimum and basin constants.
pub fn d2() -> DensitySetup {
    setup(DensityId::D2).expect("built-in density has a well-posed optimum")
}

/// A reproducible batch of `n` draws from `st`.
pub fn draws(st: &DensitySetup, n: usize) -> Vec<f64> {
    st.density.sample(n, 0xbe9c)
}
